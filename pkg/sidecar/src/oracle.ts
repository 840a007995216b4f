/** Generation-similarity oracle server.
 *
 * Speaks line-delimited JSON on stdin/stdout, one request in flight:
 *   {"id", "op": "generate", "tokens": [...]}  -> {"id", "image": handle}
 *   {"id", "op": "similarity", "a", "b"}       -> {"id", "score": float}
 * Failures answer {"id", "error": message} and the process stays alive.
 *
 * The generation backend here is a deterministic mock: a prompt maps to a
 * fixed embedding derived from its tokens, standing in for "generate an
 * image, embed it with a pretrained joint image-text model". Similarity is
 * cosine similarity mapped into [0, 1] as (1 + cos) / 2, so identical
 * handles score exactly 1.
 */

import * as readline from "node:readline";
import { Writable } from "node:stream";
import { combineSeed, fnv1a, mulberry32 } from "./rng.js";

export interface OracleConfig {
  backbone: string;
  embeddingDim: number;
  seed: number;
}

export const DEFAULT_ORACLE_CONFIG: OracleConfig = {
  backbone: "mock-embedder-v1",
  embeddingDim: 64,
  seed: 0,
};

/** Deterministic unit-norm embedding of a token list. */
export function embed(tokens: string[], config: OracleConfig): Float64Array {
  const v = new Float64Array(config.embeddingDim);
  for (const token of tokens) {
    const rng = mulberry32(combineSeed(config.backbone, config.seed, token));
    for (let i = 0; i < v.length; i++) v[i] += rng() * 2 - 1;
  }
  let norm = Math.hypot(...v);
  if (norm === 0) {
    v[0] = 1;
    norm = 1;
  }
  for (let i = 0; i < v.length; i++) v[i] /= norm;
  return v;
}

export function cosineSimilarity01(a: Float64Array, b: Float64Array): number {
  let dot = 0;
  for (let i = 0; i < a.length; i++) dot += a[i] * b[i];
  return (1 + Math.max(-1, Math.min(1, dot))) / 2;
}

export class OracleServer {
  private readonly embeddings = new Map<string, Float64Array>();

  constructor(private readonly config: OracleConfig = DEFAULT_ORACLE_CONFIG) {}

  /** Handle one request line; always returns exactly one response object. */
  handleLine(line: string): Record<string, unknown> {
    let req: Record<string, unknown>;
    try {
      req = JSON.parse(line) as Record<string, unknown>;
    } catch (e) {
      return { id: null, error: `unparseable request: ${(e as Error).message}` };
    }
    const id = typeof req.id === "number" ? req.id : null;
    try {
      if (req.op === "generate") {
        if (!Array.isArray(req.tokens) || !req.tokens.every((t) => typeof t === "string")) {
          throw new Error("generate requires a string token list");
        }
        return { id, image: this.generate(req.tokens as string[]) };
      }
      if (req.op === "similarity") {
        if (typeof req.a !== "string" || typeof req.b !== "string") {
          throw new Error("similarity requires two handle strings");
        }
        return { id, score: this.similarity(req.a, req.b) };
      }
      throw new Error(`unknown op ${JSON.stringify(req.op ?? null)}`);
    } catch (e) {
      return { id, error: (e as Error).message };
    }
  }

  generate(tokens: string[]): string {
    const handle = `img:${fnv1a(JSON.stringify([this.config.backbone, this.config.seed, tokens]))
      .toString(16)
      .padStart(8, "0")}`;
    if (!this.embeddings.has(handle)) {
      this.embeddings.set(handle, embed(tokens, this.config));
    }
    return handle;
  }

  similarity(a: string, b: string): number {
    const ea = this.embeddings.get(a);
    const eb = this.embeddings.get(b);
    if (!ea || !eb) throw new Error("unknown image handle; call generate first");
    return cosineSimilarity01(ea, eb);
  }
}

/** Run the server over the given streams until the input closes. */
export function serve(
  input: NodeJS.ReadableStream,
  output: Writable,
  config: OracleConfig = DEFAULT_ORACLE_CONFIG,
): Promise<void> {
  const server = new OracleServer(config);
  const rl = readline.createInterface({ input, terminal: false });
  return new Promise((resolve) => {
    rl.on("line", (line) => {
      output.write(JSON.stringify(server.handleLine(line)) + "\n");
    });
    rl.on("close", resolve);
  });
}
