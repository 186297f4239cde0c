/** Deterministic SVG assembly: fixed canvas, fixed palette, no randomness. */

import type { Bar, Curve } from "./aggregate.js";

export const WIDTH = 640;
export const HEIGHT = 420;
const MARGIN = { top: 36, right: 24, bottom: 48, left: 64 };

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"];

function fmt(v: number): string {
  // fixed-precision, locale-independent coordinate formatting
  return v.toFixed(3).replace(/\.?0+$/, "") || "0";
}

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 0.01 && abs < 10000) {
    return String(Number(v.toPrecision(4)));
  }
  return v.toExponential(2);
}

class Scale {
  constructor(
    readonly lo: number,
    readonly hi: number,
    readonly rangeLo: number,
    readonly rangeHi: number,
  ) {}

  at(v: number): number {
    if (this.hi === this.lo) {
      return (this.rangeLo + this.rangeHi) / 2;
    }
    return this.rangeLo + ((v - this.lo) / (this.hi - this.lo)) * (this.rangeHi - this.rangeLo);
  }

  ticks(n = 5): number[] {
    if (this.hi === this.lo) return [this.lo];
    const out: number[] = [];
    for (let i = 0; i < n; i++) {
      out.push(this.lo + ((this.hi - this.lo) * i) / (n - 1));
    }
    return out;
  }
}

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!Number.isFinite(lo)) return [0, 1];
  if (lo === hi) return [lo - 0.5, hi + 0.5];
  return [lo, hi];
}

function header(title: string): string[] {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
    `<text x="${WIDTH / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">${title}</text>`,
  ];
}

function axes(xs: Scale, ys: Scale, xLabel: string, yLabel: string): string[] {
  const parts: string[] = [];
  const x0 = MARGIN.left;
  const x1 = WIDTH - MARGIN.right;
  const y0 = HEIGHT - MARGIN.bottom;
  const y1 = MARGIN.top;
  parts.push(`<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`);
  parts.push(`<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`);
  for (const t of xs.ticks()) {
    const px = xs.at(t);
    parts.push(`<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y0 + 5}" stroke="black"/>`);
    parts.push(
      `<text x="${fmt(px)}" y="${y0 + 20}" text-anchor="middle" font-family="sans-serif" font-size="11">${fmtTick(t)}</text>`,
    );
  }
  for (const t of ys.ticks()) {
    const py = ys.at(t);
    parts.push(`<line x1="${x0 - 5}" y1="${fmt(py)}" x2="${x0}" y2="${fmt(py)}" stroke="black"/>`);
    parts.push(
      `<text x="${x0 - 8}" y="${fmt(py + 4)}" text-anchor="end" font-family="sans-serif" font-size="11">${fmtTick(t)}</text>`,
    );
  }
  parts.push(
    `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 10}" text-anchor="middle" font-family="sans-serif" font-size="12">${xLabel}</text>`,
  );
  parts.push(
    `<text x="16" y="${(y0 + y1) / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 ${(y0 + y1) / 2})">${yLabel}</text>`,
  );
  return parts;
}

function legend(labels: string[]): string[] {
  const parts: string[] = [];
  labels.forEach((label, i) => {
    const y = MARGIN.top + 6 + i * 16;
    const x = WIDTH - MARGIN.right - 150;
    parts.push(
      `<line x1="${x}" y1="${y}" x2="${x + 18}" y2="${y}" stroke="${PALETTE[i % PALETTE.length]}" stroke-width="2"/>`,
    );
    parts.push(
      `<text x="${x + 24}" y="${y + 4}" font-family="sans-serif" font-size="11">${label}</text>`,
    );
  });
  return parts;
}

export function renderLineChart(
  curves: Curve[],
  xLabel: string,
  yLabel: string,
  title: string,
): string {
  const allX = curves.flatMap((c) => c.points.map((p) => p.x));
  const allY = curves.flatMap((c) =>
    c.points.flatMap((p) => [p.mean - p.stderr, p.mean + p.stderr]),
  );
  const [xLo, xHi] = extent(allX);
  const [yLo, yHi] = extent(allY);
  const pad = 0.05 * (yHi - yLo);
  const xs = new Scale(xLo, xHi, MARGIN.left, WIDTH - MARGIN.right);
  const ys = new Scale(yLo - pad, yHi + pad, HEIGHT - MARGIN.bottom, MARGIN.top);
  const parts = header(title);
  parts.push(...axes(xs, ys, xLabel, yLabel));
  parts.push(`<g class="data-layer">`);
  curves.forEach((curve, i) => {
    const color = PALETTE[i % PALETTE.length];
    if (curve.points.some((p) => p.stderr > 0)) {
      const upper = curve.points.map((p) => `${fmt(xs.at(p.x))},${fmt(ys.at(p.mean + p.stderr))}`);
      const lower = [...curve.points]
        .reverse()
        .map((p) => `${fmt(xs.at(p.x))},${fmt(ys.at(p.mean - p.stderr))}`);
      parts.push(
        `<polygon class="band" points="${[...upper, ...lower].join(" ")}" fill="${color}" opacity="0.15"/>`,
      );
    }
    const pts = curve.points.map((p) => `${fmt(xs.at(p.x))},${fmt(ys.at(p.mean))}`).join(" ");
    parts.push(
      `<polyline class="curve" points="${pts}" fill="none" stroke="${color}" stroke-width="2"/>`,
    );
    for (const p of curve.points) {
      parts.push(
        `<circle class="marker" cx="${fmt(xs.at(p.x))}" cy="${fmt(ys.at(p.mean))}" r="3" fill="${color}"/>`,
      );
    }
  });
  parts.push(`</g>`);
  parts.push(...legend(curves.map((c) => c.label)));
  parts.push(`</svg>`);
  return parts.join("\n") + "\n";
}

export function renderBarChart(bars: Bar[], yLabel: string, title: string, baseline?: number): string {
  const [yLoRaw, yHiRaw] = extent(bars.flatMap((b) => [0, b.mean + b.stderr]));
  const yLo = Math.min(0, yLoRaw);
  const yHi = yHiRaw;
  const ys = new Scale(yLo, yHi * 1.05, HEIGHT - MARGIN.bottom, MARGIN.top);
  const parts = header(title);
  parts.push(...axes(new Scale(0, bars.length, MARGIN.left, WIDTH - MARGIN.right), ys, "", yLabel));
  parts.push(`<g class="data-layer">`);
  const slot = (WIDTH - MARGIN.left - MARGIN.right) / bars.length;
  bars.forEach((bar, i) => {
    const color = PALETTE[i % PALETTE.length];
    const cx = MARGIN.left + slot * (i + 0.5);
    const w = slot * 0.5;
    const top = ys.at(bar.mean);
    const bottom = ys.at(0);
    parts.push(
      `<rect class="bar" x="${fmt(cx - w / 2)}" y="${fmt(Math.min(top, bottom))}" width="${fmt(w)}" height="${fmt(Math.abs(bottom - top))}" fill="${color}"/>`,
    );
    if (bar.stderr > 0) {
      parts.push(
        `<line class="errbar" x1="${fmt(cx)}" y1="${fmt(ys.at(bar.mean - bar.stderr))}" x2="${fmt(cx)}" y2="${fmt(ys.at(bar.mean + bar.stderr))}" stroke="black" stroke-width="1.5"/>`,
      );
    }
    parts.push(
      `<text x="${fmt(cx)}" y="${HEIGHT - MARGIN.bottom + 20}" text-anchor="middle" font-family="sans-serif" font-size="11">${bar.label}</text>`,
    );
  });
  if (baseline !== undefined) {
    const py = ys.at(baseline);
    parts.push(
      `<line class="baseline" x1="${MARGIN.left}" y1="${fmt(py)}" x2="${WIDTH - MARGIN.right}" y2="${fmt(py)}" stroke="black" stroke-dasharray="6 4"/>`,
    );
  }
  parts.push(`</g>`);
  parts.push(`</svg>`);
  return parts.join("\n") + "\n";
}
