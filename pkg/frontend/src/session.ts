/**
 * Demo session state: model loading, fixed-capacity inference instances with
 * capacity doubling, and latest-wins asynchronous restoration.
 *
 * An inference instance accepts inputs up to its capacity; when the user
 * types past it, the instance is rebuilt with the capacity doubled until the
 * text fits (512, 1024, 2048, ...).
 */

import { InferenceInstance } from "./engine.js";
import { ModelFormatError, ParsedModel, parseModel } from "./format.js";

export const INITIAL_CAPACITY = 512;

export interface ManifestEntry {
  code: string;
  name: string;
  file: string;
  bytes: number;
  sha256: string;
}

export interface Manifest {
  languages: ManifestEntry[];
}

export type SessionState = "empty" | "loading" | "ready" | "error";

export interface RestoreResult {
  outputText: string;
  changedPositions: number[];
}

export function changedPositions(input: string, output: string): number[] {
  const a = Array.from(input);
  const b = Array.from(output);
  const positions: number[] = [];
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) positions.push(i);
  }
  return positions;
}

export class DemoSession {
  state: SessionState = "empty";
  errorMessage = "";
  activeLanguage = "";
  modelBuffer: ArrayBuffer | null = null;
  inputText = "";
  outputText = "";
  changedPositions: number[] = [];
  reloads = 0;                      // capacity doublings performed

  private model: ParsedModel | null = null;
  private instance: InferenceInstance | null = null;
  private busy = false;
  private queued: string | null = null;
  private generation = 0;

  get currentCapacity(): number {
    return this.instance?.capacity ?? 0;
  }

  /** Fetch and instantiate a language's model; errors land in errorMessage. */
  async loadLanguage(code: string, fetchModel: (code: string) => Promise<ArrayBuffer>):
      Promise<SessionState> {
    this.state = "loading";
    this.errorMessage = "";
    this.generation += 1;
    try {
      const buffer = await fetchModel(code);
      const model = parseModel(buffer);
      this.model = model;
      this.modelBuffer = buffer;
      this.instance = new InferenceInstance(model, INITIAL_CAPACITY);
      this.activeLanguage = code;
      this.reloads = 0;
      this.state = "ready";
    } catch (err) {
      this.model = null;
      this.instance = null;
      this.state = "error";
      this.errorMessage = err instanceof ModelFormatError
        ? `model file rejected: ${err.message}`
        : `failed to load model: ${err}`;
    }
    return this.state;
  }

  private ensureCapacity(length: number) {
    if (!this.model || !this.instance) throw new Error("no model loaded");
    let capacity = this.instance.capacity;
    while (capacity < length) {
      capacity *= 2;
      this.reloads += 1;
    }
    if (capacity !== this.instance.capacity) {
      this.instance = new InferenceInstance(this.model, capacity);
    }
  }

  /** Restore `text`; stale in-flight results are superseded, never interleaved. */
  async restoreLive(text: string): Promise<RestoreResult> {
    this.inputText = text;
    if (this.state !== "ready") {
      throw new Error(this.errorMessage || "model not loaded");
    }
    if (text.length === 0) {          // no inference call for empty input
      this.outputText = "";
      this.changedPositions = [];
      return { outputText: "", changedPositions: [] };
    }
    if (this.busy) {
      this.queued = text;
      return { outputText: this.outputText, changedPositions: this.changedPositions };
    }
    this.busy = true;
    const generation = this.generation;
    try {
      let current: string | null = text;
      let result: RestoreResult = { outputText: this.outputText,
                                    changedPositions: this.changedPositions };
      while (current !== null) {
        this.queued = null;
        this.ensureCapacity(Array.from(current).length);
        const output = await Promise.resolve().then(() => this.instance!.restore(current!));
        if (generation !== this.generation) break;   // language switched mid-flight
        result = { outputText: output, changedPositions: changedPositions(current, output) };
        this.outputText = result.outputText;
        this.changedPositions = result.changedPositions;
        current = this.queued;                        // latest-wins
      }
      return result;
    } finally {
      this.busy = false;
    }
  }
}
