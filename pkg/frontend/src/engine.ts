/**
 * Client-side eval-mode inference for the convolutional diacritics restorer.
 *
 * An InferenceInstance has a fixed input capacity (all buffers preallocated);
 * shorter inputs are padded with PAD ids, and padded positions are zeroed
 * before every convolution, so the fixed-length run is exact, not
 * approximate.  Longer inputs require a new instance (see session.ts).
 */

import type { ParsedModel } from "./format.js";

const PAD = 0;
const UNK = 1;
const BN_EPSILON = 1e-5;

export class Vocab {
  readonly chars: string[];
  private readonly toId = new Map<string, number>();

  constructor(vocabChars: string) {
    this.chars = Array.from(vocabChars);
    this.chars.forEach((ch, i) => this.toId.set(ch, i + 2));
  }

  get size(): number {
    return this.chars.length + 2;
  }

  idOf(ch: string): number {
    return this.toId.get(ch) ?? UNK;
  }

  charOf(id: number): string | null {
    return id < 2 ? null : this.chars[id - 2];
  }
}

function blob(model: ParsedModel, name: string): Float32Array {
  const arr = model.blobs.get(name);
  if (!arr) throw new Error(`model is missing blob ${name}`);
  return arr;
}

export class InferenceInstance {
  readonly capacity: number;
  readonly vocab: Vocab;
  private readonly model: ParsedModel;
  private readonly bnScale = new Map<string, Float64Array>();
  private readonly bnShift = new Map<string, Float64Array>();
  private x: Float64Array;               // [channels, capacity]
  private y: Float64Array;
  private readonly skip: Float64Array;
  private readonly logits: Float64Array; // [vocab, capacity]

  constructor(model: ParsedModel, capacity: number) {
    this.model = model;
    this.capacity = capacity;
    this.vocab = new Vocab(model.vocabChars);
    const cfg = model.config;
    const blocks = cfg.dilations.length;
    for (let i = 0; i < blocks; i++) {
      for (let r = 0; r < cfg.convs_per_block; r++) {
        const key = `block${i}.bn${r}`;
        const gamma = blob(model, `${key}.gamma`);
        const beta = blob(model, `${key}.beta`);
        const mean = blob(model, `${key}.running_mean`);
        const variance = blob(model, `${key}.running_var`);
        const scale = new Float64Array(cfg.channels);
        const shift = new Float64Array(cfg.channels);
        for (let c = 0; c < cfg.channels; c++) {
          scale[c] = gamma[c] / Math.sqrt(variance[c] + BN_EPSILON);
          shift[c] = beta[c] - mean[c] * scale[c];
        }
        this.bnScale.set(key, scale);
        this.bnShift.set(key, shift);
      }
    }
    this.x = new Float64Array(cfg.channels * capacity);
    this.y = new Float64Array(cfg.channels * capacity);
    this.skip = new Float64Array(cfg.channels * capacity);
    this.logits = new Float64Array(this.vocab.size * capacity);
  }

  /** Restore diacritics; output has exactly the input's length. */
  restore(text: string): string {
    const chars = Array.from(text);
    const len = chars.length;
    if (len === 0) return "";
    if (len > this.capacity) {
      throw new Error(`input length ${len} exceeds capacity ${this.capacity}`);
    }
    const cfg = this.model.config;
    const n = this.capacity;
    const ids = new Int32Array(n).fill(PAD);
    for (let t = 0; t < len; t++) ids[t] = this.vocab.idOf(chars[t]);

    // embedding, with padded positions zeroed
    const emb = blob(this.model, "embedding");
    const eDim = cfg.embedding_dim;
    const embOut = new Float64Array(eDim * n);
    for (let t = 0; t < len; t++) {
      const row = ids[t] * eDim;
      for (let e = 0; e < eDim; e++) embOut[e * n + t] = emb[row + e];
    }

    // upsample to the channel width
    const channels = cfg.channels;
    const upW = blob(this.model, "upsample.weight");
    const upB = blob(this.model, "upsample.bias");
    this.x.fill(0);
    if (cfg.upsampler_kind === "scalar-copy") {
      const copies = channels / eDim;
      for (let c = 0; c < copies; c++) {
        for (let e = 0; e < eDim; e++) {
          const out = (c * eDim + e) * n;
          const bias = upB[c * eDim + e];
          const w = upW[c];
          for (let t = 0; t < n; t++) this.x[out + t] = w * embOut[e * n + t] + bias;
        }
      }
    } else {
      for (let o = 0; o < channels; o++) {
        const bias = upB[o];
        for (let t = 0; t < n; t++) this.x[o * n + t] = bias;
        for (let e = 0; e < eDim; e++) {
          const w = upW[o * eDim + e];
          const src = e * n;
          for (let t = 0; t < n; t++) this.x[o * n + t] += w * embOut[src + t];
        }
      }
    }

    for (let i = 0; i < cfg.dilations.length; i++) {
      this.runBlock(i, cfg.dilations[i], len);
    }

    this.zeroPadding(this.x, channels, len);
    const projW = blob(this.model, "proj.weight");
    const projB = blob(this.model, "proj.bias");
    const vocabSize = this.vocab.size;
    for (let v = 0; v < vocabSize; v++) {
      const out = v * n;
      const bias = projB[v];
      for (let t = 0; t < len; t++) this.logits[out + t] = bias;
      for (let c = 0; c < channels; c++) {
        const w = projW[v * channels + c];
        const src = c * n;
        for (let t = 0; t < len; t++) this.logits[out + t] += w * this.x[src + t];
      }
    }

    const out: string[] = new Array(len);
    for (let t = 0; t < len; t++) {
      if (ids[t] === UNK) {
        out[t] = chars[t];                 // unknown inputs copied verbatim
        continue;
      }
      let best = 0;
      let bestValue = this.logits[t];
      for (let v = 1; v < vocabSize; v++) {
        const value = this.logits[v * n + t];
        if (value > bestValue) {           // ties keep the lowest id
          bestValue = value;
          best = v;
        }
      }
      const predicted = this.vocab.charOf(best);
      out[t] = predicted ?? chars[t];      // PAD/UNK argmax falls back to the input
    }
    return out.join("");
  }

  private zeroPadding(buf: Float64Array, channels: number, len: number) {
    const n = this.capacity;
    if (len >= n) return;
    for (let c = 0; c < channels; c++) buf.fill(0, c * n + len, (c + 1) * n);
  }

  private runBlock(index: number, dilation: number, len: number) {
    const cfg = this.model.config;
    const channels = cfg.channels;
    const k = cfg.kernel_size;
    const half = (k - 1) >> 1;
    const n = this.capacity;
    this.skip.set(this.x);
    for (let r = 0; r < cfg.convs_per_block; r++) {
      this.zeroPadding(this.x, channels, len);
      const weight = blob(this.model, `block${index}.conv${r}.weight`);
      const bias = blob(this.model, `block${index}.conv${r}.bias`);
      const scale = this.bnScale.get(`block${index}.bn${r}`)!;
      const shift = this.bnShift.get(`block${index}.bn${r}`)!;
      for (let o = 0; o < channels; o++) {
        const out = o * n;
        const b = bias[o];
        for (let t = 0; t < len; t++) this.y[out + t] = b;
        for (let c = 0; c < channels; c++) {
          const src = c * n;
          const wBase = (o * channels + c) * k;
          for (let j = 0; j < k; j++) {
            const w = weight[wBase + j];
            if (w === 0) continue;
            const offset = (j - half) * dilation;
            const tStart = Math.max(0, -offset);
            const tEnd = Math.min(len, len - offset);
            for (let t = tStart; t < tEnd; t++) this.y[out + t] += w * this.x[src + t + offset];
          }
        }
        // batch norm (eval affine) + ReLU
        const s = scale[o];
        const sh = shift[o];
        for (let t = 0; t < len; t++) {
          const value = this.y[out + t] * s + sh;
          this.y[out + t] = value > 0 ? value : 0;
        }
      }
      const tmp = this.x;
      this.x = this.y;
      this.y = tmp;
    }
    for (let i = 0; i < channels * n; i++) this.x[i] += this.skip[i];
  }
}
