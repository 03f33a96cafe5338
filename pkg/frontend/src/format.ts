/**
 * Parser for the portable model container:
 * magic "ATCN" | version u32 LE | header length u32 LE | JSON header |
 * concatenated row-major float32 LE blobs.
 */

export class ModelFormatError extends Error {}
export class BadMagicError extends ModelFormatError {}
export class VersionMismatchError extends ModelFormatError {}
export class TruncatedBlobError extends ModelFormatError {}
export class SizeMismatchError extends ModelFormatError {}

export const FORMAT_VERSION = 1;

export interface ModelConfig {
  embedding_dim: number;
  channels: number;
  dilations: number[];
  convs_per_block: number;
  kernel_size: number;
  dropout_rate: number;
  max_sequence_length: number;
  upsampler_kind: string;
  language: string;
}

export interface ParsedModel {
  config: ModelConfig;
  vocabChars: string;
  blobs: Map<string, Float32Array>;
}

interface BlobEntry {
  name: string;
  shape: number[];
  offset: number;
  length: number;
}

export function parseModel(buffer: ArrayBuffer): ParsedModel {
  const bytes = new Uint8Array(buffer);
  if (bytes.length < 12 || String.fromCharCode(...bytes.subarray(0, 4)) !== "ATCN") {
    throw new BadMagicError("not a model file (bad magic)");
  }
  const view = new DataView(buffer);
  const version = view.getUint32(4, true);
  if (version !== FORMAT_VERSION) {
    throw new VersionMismatchError(`format version ${version}, this build reads ${FORMAT_VERSION}`);
  }
  const headerLen = view.getUint32(8, true);
  if (12 + headerLen > bytes.length) {
    throw new SizeMismatchError(`header length ${headerLen} runs past end of file`);
  }
  let header: { kind?: string; config?: ModelConfig; vocab_chars?: string; blobs?: BlobEntry[] };
  try {
    header = JSON.parse(new TextDecoder("utf-8", { fatal: true }).decode(
      bytes.subarray(12, 12 + headerLen)));
  } catch (err) {
    throw new SizeMismatchError(`header is not valid JSON (${err})`);
  }
  if (header.kind !== "model") {
    throw new SizeMismatchError(`container holds ${header.kind}, expected model`);
  }
  const dataOffset = 12 + headerLen;
  const dataLength = bytes.length - dataOffset;
  const blobs = new Map<string, Float32Array>();
  let declared = 0;
  for (const entry of header.blobs ?? []) {
    const expected = entry.shape.reduce((a, b) => a * b, 1) * 4;
    if (expected !== entry.length) {
      throw new SizeMismatchError(
        `blob ${entry.name} declares ${entry.length} bytes but shape needs ${expected}`);
    }
    if (entry.offset + entry.length > dataLength) {
      throw new TruncatedBlobError(
        `blob ${entry.name} is truncated (${entry.offset + entry.length} > ${dataLength} data bytes)`);
    }
    // copy out so alignment of the underlying buffer never matters
    const raw = buffer.slice(dataOffset + entry.offset, dataOffset + entry.offset + entry.length);
    blobs.set(entry.name, new Float32Array(raw));
    declared = Math.max(declared, entry.offset + entry.length);
  }
  if (declared !== dataLength) {
    throw new SizeMismatchError(`${dataLength} data bytes but manifest declares ${declared}`);
  }
  if (!header.config || header.vocab_chars === undefined) {
    throw new SizeMismatchError("header is missing config or vocabulary");
  }
  return { config: header.config, vocabChars: header.vocab_chars, blobs };
}
