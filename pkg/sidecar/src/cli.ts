#!/usr/bin/env node
/** Sidecar CLI.
 *
 *   extract --prompts FILE --out DIR [--steps N] [--width D] [--seed S]
 *           [--model NAME] [--layers 4,5,6] [--time-average]
 *     Reads one prompt per line and writes trace-<index>.t2it files,
 *     printing one JSON line {prompt_id, path, L} per trace.
 *
 *   serve-oracle [--backbone NAME] [--seed S] [--dim N]
 *     Serves the line-delimited JSON generate/similarity protocol on
 *     stdin/stdout until stdin closes.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { DEFAULT_CONFIG, extractTrace } from "./extract.js";
import { DEFAULT_ORACLE_CONFIG, serve } from "./oracle.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const name = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags.set(name, argv[++i]);
    } else {
      flags.set(name, "true");
    }
  }
  return flags;
}

function runExtract(flags: Map<string, string>): void {
  const promptsFile = flags.get("prompts");
  const outDir = flags.get("out");
  if (!promptsFile || !outDir) throw new Error("extract requires --prompts and --out");
  const config = {
    ...DEFAULT_CONFIG,
    model: flags.get("model") ?? DEFAULT_CONFIG.model,
    steps: Number(flags.get("steps") ?? DEFAULT_CONFIG.steps),
    width: Number(flags.get("width") ?? DEFAULT_CONFIG.width),
    seed: Number(flags.get("seed") ?? DEFAULT_CONFIG.seed),
    layers: (flags.get("layers") ?? DEFAULT_CONFIG.layers.join(",")).split(",").map(Number),
    timeAverage: flags.get("time-average") === "true",
  };
  const prompts = fs
    .readFileSync(promptsFile, "utf-8")
    .split("\n")
    .map((p) => p.trim())
    .filter((p) => p.length > 0);
  fs.mkdirSync(outDir, { recursive: true });
  prompts.forEach((prompt, index) => {
    const promptId = `extract-${index.toString().padStart(4, "0")}`;
    const bytes = extractTrace(prompt, promptId, config);
    const file = path.join(outDir, `${promptId}.t2it`);
    fs.writeFileSync(file, bytes);
    process.stdout.write(
      JSON.stringify({ prompt_id: promptId, path: file, L: prompt.split(/\s+/).length }) + "\n",
    );
  });
}

async function main(): Promise<void> {
  const [command, ...rest] = process.argv.slice(2);
  const flags = parseFlags(rest);
  if (command === "extract") {
    runExtract(flags);
  } else if (command === "serve-oracle") {
    await serve(process.stdin, process.stdout, {
      backbone: flags.get("backbone") ?? DEFAULT_ORACLE_CONFIG.backbone,
      embeddingDim: Number(flags.get("dim") ?? DEFAULT_ORACLE_CONFIG.embeddingDim),
      seed: Number(flags.get("seed") ?? DEFAULT_ORACLE_CONFIG.seed),
    });
  } else {
    throw new Error(`usage: attnguard-sidecar <extract|serve-oracle> [flags]`);
  }
}

main().catch((e: Error) => {
  process.stderr.write(`error: ${e.message}\n`);
  process.exit(1);
});
