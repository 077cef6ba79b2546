import assert from "node:assert/strict";
import * as fs from "node:fs";
import * as path from "node:path";
import { test } from "node:test";

import { convertAmazon } from "../src/convert.js";
import { tmpDir, writeDomain, writeSyntheticCorpus } from "./helpers.js";

function readOut(outDir: string, rel: string): string {
  return fs.readFileSync(path.join(outDir, rel), "utf-8");
}

test("converts a small corpus to the expected TSV", () => {
  const raw = tmpDir("raw-");
  const out = tmpDir("out-");
  // Corpus frequencies: good 5, bad 4, ok 2, meh 1 -> indices 0..3.
  writeDomain(raw, "books", {
    positive: ["good:3 ok:1 #label#:positive", "good:1 #label#:positive"],
    negative: ["bad:4 meh:1 #label#:negative"],
    unlabeled: ["good:1 ok:1"],
  });
  const domains = convertAmazon(raw, out, 5000);
  assert.deepEqual(domains, ["books"]);
  assert.equal(readOut(out, "vocab.txt"), "good\nbad\nok\nmeh\n");
  assert.equal(readOut(out, "books/labeled.tsv"),
    "0\t0:3 2:1\n0\t0:1\n1\t1:4 3:1\n");
  assert.equal(readOut(out, "books/unlabeled.tsv"), "0:1 2:1\n");
});

test("features outside the top-k vocabulary are dropped", () => {
  const raw = tmpDir("raw-");
  const out = tmpDir("out-");
  writeDomain(raw, "d", {
    positive: ["common:9 rare:1 #label#:positive"],
    negative: ["common:2 #label#:negative"],
  });
  convertAmazon(raw, out, 1);
  assert.equal(readOut(out, "vocab.txt"), "common\n");
  assert.equal(readOut(out, "d/labeled.tsv"), "0\t0:9\n1\t0:2\n");
});

test("missing domain file is reported with its path", () => {
  const raw = tmpDir("raw-");
  fs.mkdirSync(path.join(raw, "broken"));
  fs.writeFileSync(path.join(raw, "broken", "positive.review"), "a:1\n");
  assert.throws(() => convertAmazon(raw, tmpDir("out-")),
    /broken.*negative\.review/);
});

test("malformed source line is reported with file and line", () => {
  const raw = tmpDir("raw-");
  writeDomain(raw, "d", {
    positive: ["fine:1 #label#:positive", "broken:x #label#:positive"],
    negative: ["fine:1 #label#:negative"],
  });
  assert.throws(() => convertAmazon(raw, tmpDir("out-")),
    /positive\.review:2/);
});

test("full-size corpus: 2000 labeled rows per domain, indices below 5000", () => {
  const raw = tmpDir("raw-");
  const out = tmpDir("out-");
  const domains = ["books", "dvd", "electronics", "kitchen"];
  writeSyntheticCorpus(raw, domains, 1000);
  convertAmazon(raw, out, 5000);
  const vocab = readOut(out, "vocab.txt").trimEnd().split("\n");
  assert.ok(vocab.length <= 5000);
  for (const name of domains) {
    const lines = readOut(out, `${name}/labeled.tsv`).trimEnd().split("\n");
    assert.equal(lines.length, 2000);
    assert.equal(lines.filter((l) => l.startsWith("0\t")).length, 1000);
    for (const line of lines) {
      for (const token of line.split("\t")[1].split(" ")) {
        if (token.length === 0) continue;
        const idx = Number(token.split(":")[0]);
        assert.ok(idx >= 0 && idx < 5000, token);
      }
    }
  }
});

test("conversion is deterministic across two invocations", () => {
  const raw = tmpDir("raw-");
  writeSyntheticCorpus(raw, ["books", "dvd"], 50);
  const out1 = tmpDir("out-");
  const out2 = tmpDir("out-");
  convertAmazon(raw, out1, 300);
  convertAmazon(raw, out2, 300);
  for (const rel of ["vocab.txt", "books/labeled.tsv", "books/unlabeled.tsv",
                     "dvd/labeled.tsv", "dvd/unlabeled.tsv"]) {
    assert.deepEqual(fs.readFileSync(path.join(out1, rel)),
                     fs.readFileSync(path.join(out2, rel)), rel);
  }
  // Rerunning into the same directory is idempotent.
  convertAmazon(raw, out1, 300);
  assert.deepEqual(fs.readFileSync(path.join(out1, "books/labeled.tsv")),
                   fs.readFileSync(path.join(out2, "books/labeled.tsv")));
});
