/**
 * CLI: `convert --raw DIR --out DIR [--top-k N]` and
 * `validate --dir DIR [--input-dim N]`.
 *
 * Exit codes: 0 success / clean report, 1 violations found, 2 usage error,
 * 3 conversion or data error.
 */

import { convertAmazon } from "./convert.js";
import { ConvertError } from "./raw.js";
import { validateTsv } from "./validate.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new ConvertError(`expected --flag value pairs, got ${argv[i]}`);
    }
    flags.set(argv[i].slice(2), argv[i + 1]);
  }
  return flags;
}

function requireFlag(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) {
    throw new ConvertError(`missing required flag --${name}`);
  }
  return value;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "convert") {
      const flags = parseFlags(rest);
      const topK = Number(flags.get("top-k") ?? "5000");
      if (!Number.isInteger(topK) || topK < 1) {
        throw new ConvertError(`--top-k must be a positive integer`);
      }
      const domains = convertAmazon(requireFlag(flags, "raw"),
                                    requireFlag(flags, "out"), topK);
      console.log(`converted ${domains.length} domains: ${domains.join(", ")}`);
      return 0;
    }
    if (command === "validate") {
      const flags = parseFlags(rest);
      const inputDim = Number(flags.get("input-dim") ?? "5000");
      const report = validateTsv(requireFlag(flags, "dir"), inputDim);
      for (const v of report.violations) {
        console.log(`${v.file}:${v.line}: ${v.message}`);
      }
      const total = Object.values(report.lineCounts).reduce((a, b) => a + b, 0);
      console.log(`${total} lines checked, ${report.violations.length} violations`);
      return report.violations.length === 0 ? 0 : 1;
    }
    console.error("usage: cli.js convert --raw DIR --out DIR [--top-k N] | "
      + "cli.js validate --dir DIR [--input-dim N]");
    return 2;
  } catch (err) {
    if (err instanceof ConvertError) {
      console.error(`error: ${err.message}`);
      return 3;
    }
    throw err;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
