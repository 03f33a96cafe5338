import { describe, expect, it } from "vitest";

import { InferenceInstance } from "../src/engine.js";
import { parseModel } from "../src/format.js";
import { DemoSession } from "../src/session.js";
import { readBinary, readJson } from "./helpers.js";

// goldens produced by the command-line `restore` on the exported model
const PARITY = readJson("fixtures", "parity.json") as {
  cases: { input: string; expected: string }[];
};
const MODEL = readBinary("models", "hu.atcn");

describe("page output equals the command-line output byte-exactly", () => {
  it("has the three fixed inputs", () => {
    expect(PARITY.cases.length).toBe(3);
  });

  it("matches through a bare inference instance", () => {
    const instance = new InferenceInstance(parseModel(MODEL), 512);
    for (const { input, expected } of PARITY.cases) {
      expect(instance.restore(input)).toBe(expected);
    }
  });

  it("matches through the demo session path", async () => {
    const session = new DemoSession();
    await session.loadLanguage("hu", async () => MODEL.slice(0));
    for (const { input, expected } of PARITY.cases) {
      const result = await session.restoreLive(input);
      expect(result.outputText).toBe(expected);
    }
  });
});
