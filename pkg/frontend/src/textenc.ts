/** Per-token text embeddings.
 *
 * The default "hash" encoder is fully offline and deterministic: each
 * token hashes to a fixed pseudo-random vector, mixed with half-weight
 * neighbor vectors for local context. A real pretrained-LM encoder can
 * be plugged in behind the same interface when model weights are
 * available locally; features.lock records which encoder produced a
 * file.
 */

export interface TextEncoder {
  readonly name: string;
  encode(tokens: string[]): number[][];
}

export function tokenize(text: string): string[] {
  return text
    .toLowerCase()
    .split(/[^a-z0-9']+/)
    .map((t) => t.replace(/^'+|'+$/g, ""))
    .filter((t) => t.length > 0);
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function hashVector(token: string, dim: number): Float64Array {
  const next = mulberry32(fnv1a(token));
  const v = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    // Box-Muller for roughly unit-normal coordinates.
    const u1 = Math.max(next(), 1e-12);
    const u2 = next();
    v[i] = Math.sqrt(-2 * Math.log(u1)) * Math.cos(2 * Math.PI * u2);
  }
  return v;
}

export class HashContextEncoder implements TextEncoder {
  readonly name = "hash";

  constructor(private readonly dim: number) {}

  encode(tokens: string[]): number[][] {
    const base = tokens.map((t) => hashVector(t, this.dim));
    const out: number[][] = [];
    for (let i = 0; i < tokens.length; i++) {
      const v = new Float64Array(base[i]);
      let weight = 1;
      if (i > 0) {
        for (let d = 0; d < this.dim; d++) v[d] += 0.5 * base[i - 1][d];
        weight += 0.5;
      }
      if (i + 1 < tokens.length) {
        for (let d = 0; d < this.dim; d++) v[d] += 0.5 * base[i + 1][d];
        weight += 0.5;
      }
      out.push(Array.from(v, (x) => x / weight));
    }
    return out;
  }
}

export function makeTextEncoder(name: string, dim: number): TextEncoder {
  if (name === "hash") {
    return new HashContextEncoder(dim);
  }
  throw new Error(
    `unknown text encoder ${name!}; available offline encoder: hash`);
}
