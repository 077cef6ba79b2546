/**
 * Conformance checking for the sparse TSV format, mirroring the grammar the
 * training toolkit's loader enforces: labels in {0, 1}, tab separator,
 * `idx:count` tokens with integer indices strictly increasing within a line
 * and inside [0, inputDim), counts finite nonnegative numbers.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export interface Violation {
  file: string;
  line: number;
  message: string;
}

export interface ValidationReport {
  violations: Violation[];
  lineCounts: Record<string, number>;
}

function checkFeatureList(text: string, inputDim: number): string | null {
  let last = -1;
  for (const token of text.split(" ")) {
    if (token.length === 0) continue;
    const sep = token.indexOf(":");
    if (sep < 0) return `feature token ${token} lacks ':'`;
    const idxText = token.slice(0, sep);
    if (!/^\d+$/.test(idxText)) return `non-integer feature index ${idxText}`;
    const idx = Number(idxText);
    if (idx >= inputDim) return `feature index ${idx} outside [0, ${inputDim})`;
    if (idx <= last) return `feature indices not strictly increasing at ${idx}`;
    const count = Number(token.slice(sep + 1));
    if (token.slice(sep + 1).length === 0 || !Number.isFinite(count) || count < 0) {
      return `bad count in token ${token}`;
    }
    last = idx;
  }
  return null;
}

function checkFile(file: string, labeled: boolean, inputDim: number,
                   report: ValidationReport): void {
  if (!fs.existsSync(file)) {
    report.violations.push({ file, line: 0, message: "missing file" });
    return;
  }
  const lines = fs.readFileSync(file, "utf-8").split("\n");
  if (lines.length > 0 && lines[lines.length - 1] === "") lines.pop();
  report.lineCounts[file] = lines.length;
  lines.forEach((line, i) => {
    let featurePart = line;
    if (labeled) {
      const tab = line.indexOf("\t");
      const label = tab < 0 ? line : line.slice(0, tab);
      if (label !== "0" && label !== "1") {
        report.violations.push({ file, line: i + 1, message: `label must be 0 or 1, got ${label}` });
        return;
      }
      featurePart = tab < 0 ? "" : line.slice(tab + 1);
    }
    const message = checkFeatureList(featurePart, inputDim);
    if (message !== null) {
      report.violations.push({ file, line: i + 1, message });
    }
  });
}

export function validateTsv(dir: string, inputDim = 5000): ValidationReport {
  const report: ValidationReport = { violations: [], lineCounts: {} };
  if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
    report.violations.push({ file: dir, line: 0, message: "directory not found" });
    return report;
  }
  const domains = fs.readdirSync(dir)
    .filter((n) => fs.statSync(path.join(dir, n)).isDirectory())
    .sort();
  for (const name of domains) {
    checkFile(path.join(dir, name, "labeled.tsv"), true, inputDim, report);
    checkFile(path.join(dir, name, "unlabeled.tsv"), false, inputDim, report);
    const test = path.join(dir, name, "test.tsv");
    if (fs.existsSync(test)) {
      checkFile(test, true, inputDim, report);
    }
  }
  return report;
}
