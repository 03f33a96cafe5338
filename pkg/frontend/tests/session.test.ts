import { describe, expect, it, vi } from "vitest";

import { InferenceInstance } from "../src/engine.js";
import { DemoSession, INITIAL_CAPACITY, changedPositions } from "../src/session.js";
import { readBinary } from "./helpers.js";

const MODEL = readBinary("models", "hu.atcn");

function loader(buffer: ArrayBuffer = MODEL) {
  return async (_code: string) => buffer.slice(0);
}

describe("demo session", () => {
  it("loads a language and reaches the ready state", async () => {
    const session = new DemoSession();
    expect(await session.loadLanguage("hu", loader())).toBe("ready");
    expect(session.activeLanguage).toBe("hu");
    expect(session.currentCapacity).toBe(INITIAL_CAPACITY);
    expect(session.modelBuffer!.byteLength).toBe(MODEL.byteLength);
  });

  it("shows an error state for unknown languages", async () => {
    const session = new DemoSession();
    const state = await session.loadLanguage("xx", async () => {
      throw new Error("404 not found");
    });
    expect(state).toBe("error");
    expect(session.errorMessage).toContain("404");
  });

  it("shows an error state for corrupt model bytes", async () => {
    const session = new DemoSession();
    const garbage = new Uint8Array([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13]).buffer;
    const state = await session.loadLanguage("hu", loader(garbage));
    expect(state).toBe("error");
    expect(session.errorMessage).toContain("rejected");
  });

  it("typing past the capacity doubles it exactly once", async () => {
    const session = new DemoSession();
    await session.loadLanguage("hu", loader());
    const short = "a kek eg";
    await session.restoreLive(short);
    expect(session.currentCapacity).toBe(512);
    expect(session.reloads).toBe(0);

    const long = "arviz ".repeat(90).trim();       // 539 chars > 512
    expect(long.length).toBeGreaterThan(512);
    expect(long.length).toBeLessThanOrEqual(1024);
    const result = await session.restoreLive(long);
    expect(session.currentCapacity).toBe(1024);
    expect(session.reloads).toBe(1);
    expect(Array.from(result.outputText).length).toBe(long.length);
  });

  it("capacity never shrinks within a session", async () => {
    const session = new DemoSession();
    await session.loadLanguage("hu", loader());
    await session.restoreLive("x".repeat(600));
    expect(session.currentCapacity).toBe(1024);
    await session.restoreLive("rovid szoveg");
    expect(session.currentCapacity).toBe(1024);
  });

  it("empty input produces empty output without an inference call", async () => {
    const session = new DemoSession();
    await session.loadLanguage("hu", loader());
    const spy = vi.spyOn(InferenceInstance.prototype, "restore");
    const result = await session.restoreLive("");
    expect(result.outputText).toBe("");
    expect(result.changedPositions).toEqual([]);
    expect(spy).not.toHaveBeenCalled();
    spy.mockRestore();
  });

  it("padded fixed-capacity inference equals unpadded inference", async () => {
    // the fixed-length instance must be semantically exact, not approximate
    const session = new DemoSession();
    await session.loadLanguage("hu", loader());
    const text = "a sulyos kor terjed a faluban";
    const viaSession = await session.restoreLive(text);
    const { parseModel } = await import("../src/format.js");
    const exact = new InferenceInstance(parseModel(MODEL), text.length).restore(text);
    expect(viaSession.outputText).toBe(exact);
  });

  it("reports changed positions for highlighting", () => {
    expect(changedPositions("kerek", "kérek")).toEqual([1]);
    expect(changedPositions("abc", "abc")).toEqual([]);
  });

  it("supersedes stale in-flight inputs with the latest", async () => {
    const session = new DemoSession();
    await session.loadLanguage("hu", loader());
    const first = session.restoreLive("elso szoveg");
    const second = session.restoreLive("masodik szoveg");
    await Promise.all([first, second]);
    // the session must settle on the latest text, never an interleaving
    expect(session.outputText.length).toBe("masodik szoveg".length);
    const direct = await session.restoreLive("masodik szoveg");
    expect(session.outputText).toBe(direct.outputText);
  });
});
