import { TraceRow, strategies } from "./trace";

export type FigureKind = "stream_curves" | "fraction_sweep";

export interface PlotRequest {
  kind: FigureKind;
  traces: { source: string; rows: TraceRow[] }[];
  title?: string;
}

const WIDTH = 640;
const HEIGHT = 400;
const MARGIN = { left: 60, right: 140, top: 40, bottom: 50 };

// Fixed palette keyed by order of first appearance, so identical inputs
// always produce identical colors.
const PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2"];

const fmt = (v: number) => v.toFixed(2);

interface Series {
  name: string;
  points: { x: number; y: number }[];
}

function scale(v: number, lo: number, hi: number, outLo: number, outHi: number): number {
  const t = hi === lo ? 0.5 : (v - lo) / (hi - lo);
  return outLo + t * (outHi - outLo);
}

function svgDocument(series: Series[], xLabel: string, yLabel: string,
  title: string, xTicks: { v: number; label: string }[]): string {
  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const ys = series.flatMap((s) => s.points.map((p) => p.y));
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const yLo = Math.min(0.5, Math.floor(Math.min(...ys) * 10) / 10);
  const yHi = 1.0;
  const px = (x: number) => scale(x, xLo, xHi, MARGIN.left, WIDTH - MARGIN.right);
  const py = (y: number) => scale(y, yLo, yHi, HEIGHT - MARGIN.bottom, MARGIN.top);

  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16">${title}</text>`);

  // axes
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  parts.push(`<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`);
  parts.push(`<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`);
  parts.push(`<text x="${(x0 + x1) / 2}" y="${HEIGHT - 10}" text-anchor="middle" font-size="12">${xLabel}</text>`);
  parts.push(`<text x="16" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 16 ${(y0 + y1) / 2})">${yLabel}</text>`);

  for (const tick of xTicks) {
    const x = px(tick.v);
    parts.push(`<line x1="${fmt(x)}" y1="${y0}" x2="${fmt(x)}" y2="${y0 + 5}" stroke="black"/>`);
    parts.push(`<text x="${fmt(x)}" y="${y0 + 18}" text-anchor="middle" font-size="10">${tick.label}</text>`);
  }
  for (let y = yLo; y <= yHi + 1e-9; y += 0.1) {
    const yy = py(y);
    parts.push(`<line x1="${x0 - 5}" y1="${fmt(yy)}" x2="${x0}" y2="${fmt(yy)}" stroke="black"/>`);
    parts.push(`<text x="${x0 - 8}" y="${fmt(yy + 3)}" text-anchor="end" font-size="10">${y.toFixed(1)}</text>`);
  }

  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const coords = s.points
      .map((p) => `${fmt(px(p.x))},${fmt(py(p.y))}`)
      .join(" ");
    parts.push(`<polyline class="curve" data-strategy="${s.name}" points="${coords}" fill="none" stroke="${color}" stroke-width="2"/>`);
    for (const p of s.points) {
      parts.push(`<circle cx="${fmt(px(p.x))}" cy="${fmt(py(p.y))}" r="3" fill="${color}"/>`);
    }
    // legend
    const ly = MARGIN.top + 16 * i;
    parts.push(`<line x1="${x1 + 10}" y1="${ly}" x2="${x1 + 30}" y2="${ly}" stroke="${color}" stroke-width="2"/>`);
    parts.push(`<text x="${x1 + 36}" y="${ly + 4}" font-size="12">${s.name}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}

function streamCurves(request: PlotRequest): string {
  const { source, rows } = request.traces[0];
  const series: Series[] = strategies(rows).map((name) => ({
    name,
    points: rows
      .filter((r) => r.strategy === name)
      .map((r) => ({ x: r.seen, y: r.holdout_acc })),
  }));
  const seen = [...new Set(rows.map((r) => r.seen))].sort((a, b) => a - b);
  const ticks = seen.map((v) => ({ v, label: String(v) }));
  return svgDocument(series, "instances seen", "holdout accuracy",
    request.title ?? source, ticks);
}

function fractionSweep(request: PlotRequest): string {
  // one point per trace and strategy: the final holdout accuracy
  const names: string[] = [];
  for (const t of request.traces) {
    for (const s of strategies(t.rows)) {
      if (!names.includes(s)) {
        names.push(s);
      }
    }
  }
  const series: Series[] = names.map((name) => ({ name, points: [] }));
  request.traces.forEach((t, i) => {
    for (const s of series) {
      const mine = t.rows.filter((r) => r.strategy === s.name);
      if (mine.length > 0) {
        s.points.push({ x: i, y: mine[mine.length - 1].holdout_acc });
      }
    }
  });
  const ticks = request.traces.map((t, i) => ({
    v: i,
    label: t.source.replace(/^.*\//, "").replace(/_trace\.csv$/, ""),
  }));
  return svgDocument(series, "trace", "final holdout accuracy",
    request.title ?? "labeled-fraction sweep", ticks);
}

/** Pure view of the trace rows: every plotted number exists verbatim in
 *  the input CSVs. Throws (writing nothing) on malformed requests. */
export function render(request: PlotRequest): string {
  if (request.traces.length === 0) {
    throw new Error("no trace files given");
  }
  if (request.kind === "stream_curves") {
    if (request.traces.length !== 1) {
      throw new Error("stream_curves takes exactly one trace");
    }
    return streamCurves(request);
  }
  return fractionSweep(request);
}
