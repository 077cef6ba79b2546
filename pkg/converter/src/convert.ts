/**
 * Raw review corpus -> sparse TSV directories.
 *
 * Input layout: one directory per domain under rawDir, holding
 * `positive.review`, `negative.review`, and optionally `unlabeled.review`.
 * Output layout: one directory per domain under outDir with `labeled.tsv`
 * (positives first, label 0; then negatives, label 1) and `unlabeled.tsv`,
 * plus a corpus-wide `vocab.txt`, one feature per line in index order.
 *
 * Conversion is a pure function of the input bytes: rerunning it yields
 * byte-identical output.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { ConvertError, parseRawFile, RawDocument } from "./raw.js";
import { accumulateFrequencies, selectVocabulary, vocabularyIndex } from "./vocab.js";

const LABELED_FILES = ["positive.review", "negative.review"] as const;

export interface DomainSource {
  name: string;
  positive: RawDocument[];
  negative: RawDocument[];
  unlabeled: RawDocument[];
}

function readRaw(file: string): RawDocument[] {
  return parseRawFile(fs.readFileSync(file, "utf-8"), file);
}

export function readRawDomains(rawDir: string): DomainSource[] {
  if (!fs.existsSync(rawDir) || !fs.statSync(rawDir).isDirectory()) {
    throw new ConvertError(`raw directory not found: ${rawDir}`);
  }
  const names = fs.readdirSync(rawDir)
    .filter((n) => fs.statSync(path.join(rawDir, n)).isDirectory())
    .sort();
  if (names.length === 0) {
    throw new ConvertError(`no domain directories under ${rawDir}`);
  }
  return names.map((name) => {
    const dir = path.join(rawDir, name);
    for (const file of LABELED_FILES) {
      if (!fs.existsSync(path.join(dir, file))) {
        throw new ConvertError(`missing domain file: ${path.join(dir, file)}`);
      }
    }
    const unlabeledPath = path.join(dir, "unlabeled.review");
    return {
      name,
      positive: readRaw(path.join(dir, "positive.review")),
      negative: readRaw(path.join(dir, "negative.review")),
      unlabeled: fs.existsSync(unlabeledPath) ? readRaw(unlabeledPath) : [],
    };
  });
}

export function encodeFeatures(doc: RawDocument, index: Map<string, number>): string {
  const pairs: Array<[number, number]> = [];
  for (const [feature, count] of doc.features) {
    const idx = index.get(feature);
    if (idx !== undefined && count > 0) {
      pairs.push([idx, count]);
    }
  }
  pairs.sort((a, b) => a[0] - b[0]);
  return pairs.map(([idx, count]) => `${idx}:${String(count)}`).join(" ");
}

export function convertAmazon(rawDir: string, outDir: string, topK = 5000): string[] {
  const domains = readRawDomains(rawDir);

  const freq = new Map<string, number>();
  for (const domain of domains) {
    accumulateFrequencies(domain.positive, freq);
    accumulateFrequencies(domain.negative, freq);
    accumulateFrequencies(domain.unlabeled, freq);
  }
  const vocabulary = selectVocabulary(freq, topK);
  const index = vocabularyIndex(vocabulary);

  fs.mkdirSync(outDir, { recursive: true });
  fs.writeFileSync(path.join(outDir, "vocab.txt"),
    vocabulary.map((f) => f + "\n").join(""), "utf-8");

  for (const domain of domains) {
    const dir = path.join(outDir, domain.name);
    fs.mkdirSync(dir, { recursive: true });
    const labeled: string[] = [];
    for (const doc of domain.positive) {
      labeled.push(`0\t${encodeFeatures(doc, index)}`);
    }
    for (const doc of domain.negative) {
      labeled.push(`1\t${encodeFeatures(doc, index)}`);
    }
    fs.writeFileSync(path.join(dir, "labeled.tsv"),
      labeled.map((l) => l + "\n").join(""), "utf-8");
    const unlabeled = domain.unlabeled.map((doc) => encodeFeatures(doc, index));
    fs.writeFileSync(path.join(dir, "unlabeled.tsv"),
      unlabeled.map((l) => l + "\n").join(""), "utf-8");
  }
  return domains.map((d) => d.name);
}
