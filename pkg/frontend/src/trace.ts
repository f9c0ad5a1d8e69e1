import { readFileSync } from "fs";

// Fixed column contract of the engine's trace CSV. Values never contain
// commas or quotes, so a plain split is a complete parser.
export const TRACE_COLUMNS = [
  "window",
  "strategy",
  "seen",
  "holdout_acc",
  "accepted",
  "rejected",
  "selflabel_precision",
  "pi0_hat",
  "pi1_hat",
  "coupling_agreement",
  "coupled",
] as const;

export interface TraceRow {
  window: number;
  strategy: string;
  seen: number;
  holdout_acc: number;
  accepted: number;
  rejected: number;
  selflabel_precision: number | null;
  pi0_hat: number | null;
  pi1_hat: number | null;
  coupling_agreement: number | null;
  coupled: boolean | null;
}

function num(field: string, value: string): number {
  const v = Number(value);
  if (value === "" || !Number.isFinite(v)) {
    throw new Error(`bad numeric value ${JSON.stringify(value)} in column ${field}`);
  }
  return v;
}

function optNum(value: string): number | null {
  return value === "" ? null : Number(value);
}

export function parseTrace(text: string, source: string): TraceRow[] {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error(`${source}: empty file`);
  }
  const header = lines[0].split(",");
  for (const col of TRACE_COLUMNS) {
    if (!header.includes(col)) {
      throw new Error(`${source}: missing trace column ${col}`);
    }
  }
  const idx = new Map(header.map((h, i) => [h, i]));
  const at = (parts: string[], col: string) => parts[idx.get(col)!] ?? "";
  const rows: TraceRow[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.split(",");
    rows.push({
      window: num("window", at(parts, "window")),
      strategy: at(parts, "strategy"),
      seen: num("seen", at(parts, "seen")),
      holdout_acc: num("holdout_acc", at(parts, "holdout_acc")),
      accepted: num("accepted", at(parts, "accepted")),
      rejected: num("rejected", at(parts, "rejected")),
      selflabel_precision: optNum(at(parts, "selflabel_precision")),
      pi0_hat: optNum(at(parts, "pi0_hat")),
      pi1_hat: optNum(at(parts, "pi1_hat")),
      coupling_agreement: optNum(at(parts, "coupling_agreement")),
      coupled: at(parts, "coupled") === "" ? null : at(parts, "coupled") === "true",
    });
  }
  if (rows.length === 0) {
    throw new Error(`${source}: trace has no rows`);
  }
  return rows;
}

export function readTrace(path: string): TraceRow[] {
  return parseTrace(readFileSync(path, "utf8"), path);
}

/** Strategy names in first-appearance order. */
export function strategies(rows: TraceRow[]): string[] {
  const seen: string[] = [];
  for (const r of rows) {
    if (!seen.includes(r.strategy)) {
      seen.push(r.strategy);
    }
  }
  return seen;
}
