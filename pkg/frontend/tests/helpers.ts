import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

export function fixturePath(...parts: string[]): string {
  return join(here, "..", ...parts);
}

export function readBinary(...parts: string[]): ArrayBuffer {
  const buf = readFileSync(fixturePath(...parts));
  return buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength);
}

export function readJson(...parts: string[]) {
  return JSON.parse(readFileSync(fixturePath(...parts), "utf-8"));
}
