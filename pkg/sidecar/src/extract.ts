/** Cross-attention trace extraction.
 *
 * The real job of this module is to hook a diffusion pipeline and record
 * per-token cross-attention maps at every denoising step. This build ships
 * a deterministic mock backend instead: it synthesizes the same tensor
 * shapes and normalization guarantees a real hook would produce, driven
 * entirely by (model, prompt, seed), so downstream consumers can be
 * exercised without a GPU. Swapping in a real backend only requires
 * replacing `mockAttentionLogits`.
 */

import { combineSeed, mulberry32 } from "./rng.js";
import { TraceMetadata, encodeTrace } from "./trace.js";

export interface ExtractionConfig {
  model: string;
  /** Number of denoising steps recorded. */
  steps: number;
  /** Which cross-attention layers are aggregated (head-averaged). */
  layers: number[];
  headAverage: boolean;
  /** Spatial width D of the (D x D) maps. */
  width: number;
  seed: number;
  /** Average over steps and emit a single map per token (T = null). */
  timeAverage: boolean;
}

export const DEFAULT_CONFIG: ExtractionConfig = {
  model: "mock-diffusion-v1",
  steps: 50,
  layers: [4, 5, 6],
  headAverage: true,
  width: 16,
  seed: 0,
  timeAverage: false,
};

export function tokenize(prompt: string): string[] {
  const tokens = prompt.trim().split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length === 0) throw new Error("prompt tokenizes to zero tokens");
  return tokens;
}

/** Unnormalized attention scores for one token at one step: a spatial bump
 * whose center is fixed per token and drifts slightly over time. */
function mockAttentionLogits(
  width: number,
  centerX: number,
  centerY: number,
  bandwidth: number,
  drift: number,
): number[] {
  const out = new Array<number>(width * width);
  for (let x = 0; x < width; x++) {
    for (let y = 0; y < width; y++) {
      const dx = x - (centerX + drift);
      const dy = y - (centerY - drift);
      out[x * width + y] = Math.exp(-(dx * dx + dy * dy) / (2 * bandwidth * bandwidth)) + 1e-6;
    }
  }
  return out;
}

/** Produce the flat (T, L, D, D) tensor, normalized so that at every step
 * the per-location sum across tokens is exactly 1. */
export function extractMaps(tokens: string[], config: ExtractionConfig): Float64Array {
  const { width: D, steps: T } = config;
  const L = tokens.length;
  const rng = mulberry32(combineSeed(config.model, tokens.join(" "), config.seed, ...config.layers));
  const centers = tokens.map(() => ({
    x: rng() * (D - 1),
    y: rng() * (D - 1),
    bw: D / 8 + rng() * (D / 4),
  }));
  const maps = new Float64Array(T * L * D * D);
  for (let t = 0; t < T; t++) {
    const drift = (t / Math.max(T - 1, 1) - 0.5) * 0.8;
    const step: number[][] = centers.map((c) =>
      mockAttentionLogits(D, c.x, c.y, c.bw, drift),
    );
    for (let p = 0; p < D * D; p++) {
      let total = 0;
      for (let i = 0; i < L; i++) total += step[i][p];
      for (let i = 0; i < L; i++) {
        maps[(t * L + i) * D * D + p] = step[i][p] / total;
      }
    }
  }
  return maps;
}

function timeAverage(maps: Float64Array, T: number, perStep: number): Float64Array {
  const out = new Float64Array(perStep);
  for (let t = 0; t < T; t++) {
    for (let j = 0; j < perStep; j++) out[j] += maps[t * perStep + j];
  }
  for (let j = 0; j < perStep; j++) out[j] /= T;
  return out;
}

export function extractTrace(prompt: string, promptId: string, config: ExtractionConfig): Buffer {
  if (config.steps < 1) throw new Error("steps must be >= 1");
  const tokens = tokenize(prompt);
  let maps: ArrayLike<number> = extractMaps(tokens, config);
  const metadata: TraceMetadata = {
    prompt_id: promptId,
    tokens,
    L: tokens.length,
    D: config.width,
    T: config.timeAverage ? null : config.steps,
    normalized: true,
    label: null,
    provenance: {
      model: config.model,
      layers: config.layers,
      head_average: config.headAverage,
      steps: config.steps,
      seed: config.seed,
    },
  };
  if (config.timeAverage) {
    maps = timeAverage(
      maps as Float64Array,
      config.steps,
      tokens.length * config.width * config.width,
    );
  }
  return encodeTrace(metadata, maps);
}
