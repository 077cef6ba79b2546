/**
 * Parsing for the raw preprocessed review format: one document per line,
 * whitespace-separated `feature:count` tokens, optionally ending with a
 * `#label#:positive` / `#label#:negative` marker. Feature names may contain
 * colons; the count sits after the last one.
 */

export class ConvertError extends Error {}

export interface RawDocument {
  features: Map<string, number>;
  label: "positive" | "negative" | null;
}

export function parseRawLine(line: string, file: string, lineno: number): RawDocument {
  const features = new Map<string, number>();
  let label: RawDocument["label"] = null;
  for (const token of line.split(/\s+/)) {
    if (token.length === 0) continue;
    if (token.startsWith("#label#:")) {
      const value = token.slice("#label#:".length);
      if (value !== "positive" && value !== "negative") {
        throw new ConvertError(`${file}:${lineno}: unknown label ${value}`);
      }
      label = value;
      continue;
    }
    const sep = token.lastIndexOf(":");
    if (sep <= 0 || sep === token.length - 1) {
      throw new ConvertError(`${file}:${lineno}: malformed token ${token}`);
    }
    const feature = token.slice(0, sep);
    const count = Number(token.slice(sep + 1));
    if (!Number.isFinite(count) || count < 0) {
      throw new ConvertError(`${file}:${lineno}: bad count in token ${token}`);
    }
    features.set(feature, (features.get(feature) ?? 0) + count);
  }
  return { features, label };
}

export function parseRawFile(text: string, file: string): RawDocument[] {
  const docs: RawDocument[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line.length === 0) continue;
    docs.push(parseRawLine(line, file, i + 1));
  }
  return docs;
}
