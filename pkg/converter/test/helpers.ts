import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

export function writeDomain(rawDir: string, name: string, files: {
  positive?: string[];
  negative?: string[];
  unlabeled?: string[];
}): void {
  const dir = path.join(rawDir, name);
  fs.mkdirSync(dir, { recursive: true });
  fs.writeFileSync(path.join(dir, "positive.review"),
    (files.positive ?? []).map((l) => l + "\n").join(""), "utf-8");
  fs.writeFileSync(path.join(dir, "negative.review"),
    (files.negative ?? []).map((l) => l + "\n").join(""), "utf-8");
  if (files.unlabeled) {
    fs.writeFileSync(path.join(dir, "unlabeled.review"),
      files.unlabeled.map((l) => l + "\n").join(""), "utf-8");
  }
}

/** Small deterministic PRNG so fixtures are identical across runs. */
export function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

export function syntheticCorpusLine(rand: () => number, pool: number,
                                    label: "positive" | "negative"): string {
  const tokens: string[] = [];
  const used = new Set<number>();
  const n = 5 + Math.floor(rand() * 10);
  for (let i = 0; i < n; i++) {
    const f = Math.floor(rand() * pool);
    if (used.has(f)) continue;
    used.add(f);
    const count = 1 + Math.floor(rand() * 4);
    tokens.push(`w${String(f).padStart(4, "0")}:${count}`);
  }
  tokens.push(`#label#:${label}`);
  return tokens.join(" ");
}

export function writeSyntheticCorpus(rawDir: string, domains: string[],
                                     perClass: number, pool = 6000): void {
  const rand = lcg(42);
  for (const name of domains) {
    const positive: string[] = [];
    const negative: string[] = [];
    const unlabeled: string[] = [];
    for (let i = 0; i < perClass; i++) {
      positive.push(syntheticCorpusLine(rand, pool, "positive"));
      negative.push(syntheticCorpusLine(rand, pool, "negative"));
    }
    for (let i = 0; i < 200; i++) {
      unlabeled.push(syntheticCorpusLine(rand, pool, "positive")
        .replace(/ #label#:positive$/, ""));
    }
    writeDomain(rawDir, name, { positive, negative, unlabeled });
  }
}
