#!/usr/bin/env node
import { writeFileSync } from "fs";
import { readTrace } from "./trace";
import { render, FigureKind } from "./render";

const USAGE =
  "usage: report-plots <stream_curves|fraction_sweep> <trace.csv>... --out <path> [--title <title>]";

export function main(argv: string[]): number {
  const args = [...argv];
  let out: string | undefined;
  let title: string | undefined;
  const positional: string[] = [];
  while (args.length > 0) {
    const a = args.shift()!;
    if (a === "--out") {
      out = args.shift();
    } else if (a === "--title") {
      title = args.shift();
    } else if (a === "--help" || a === "-h") {
      console.log(USAGE);
      return 0;
    } else {
      positional.push(a);
    }
  }
  const [kind, ...paths] = positional;
  if (!kind || !["stream_curves", "fraction_sweep"].includes(kind) ||
    paths.length === 0 || !out) {
    console.error(USAGE);
    return 2;
  }
  try {
    const traces = paths.map((p) => ({ source: p, rows: readTrace(p) }));
    const svg = render({ kind: kind as FigureKind, traces, title });
    writeFileSync(out, svg);
    console.log(`wrote ${out}`);
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
