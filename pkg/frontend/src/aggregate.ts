/** Seed aggregation: group rows, average the y column across seeds per x. */

import { numeric, requireColumns, type Table } from "./csv.js";

export interface Point {
  x: number;
  mean: number;
  stderr: number;
  n: number;
}

export interface Curve {
  label: string;
  points: Point[];
}

function meanStderr(values: number[]): { mean: number; stderr: number } {
  const n = values.length;
  const mean = values.reduce((a, b) => a + b, 0) / n;
  if (n < 2) {
    return { mean, stderr: 0 };
  }
  const varSum = values.reduce((a, b) => a + (b - mean) * (b - mean), 0);
  return { mean, stderr: Math.sqrt(varSum / (n - 1)) / Math.sqrt(n) };
}

/**
 * One curve per groupBy value (or per y column when several are given),
 * points ordered by numeric x, each point averaged over remaining rows
 * (typically seeds).
 */
export function buildCurves(
  table: Table,
  x: string,
  ys: string[],
  groupBy?: string,
): Curve[] {
  requireColumns(table, [x, ...ys, ...(groupBy ? [groupBy] : [])]);
  const curves: Curve[] = [];
  const groupValues = groupBy
    ? [...new Set(table.rows.map((r) => r[groupBy]))]
    : [undefined];
  for (const y of ys) {
    for (const g of groupValues) {
      const rows = table.rows.filter((r) => (g === undefined ? true : r[groupBy!] === g));
      if (rows.length === 0) continue;
      const byX = new Map<number, number[]>();
      for (const row of rows) {
        const xv = numeric(row, x);
        const arr = byX.get(xv) ?? [];
        arr.push(numeric(row, y));
        byX.set(xv, arr);
      }
      const points = [...byX.entries()]
        .sort((a, b) => a[0] - b[0])
        .map(([xv, values]) => ({ x: xv, n: values.length, ...meanStderr(values) }));
      const parts: string[] = [];
      if (ys.length > 1) parts.push(y);
      if (g !== undefined) parts.push(`${groupBy}=${g}`);
      curves.push({ label: parts.join(" ") || y, points });
    }
  }
  return curves;
}

/** Bars: one per category value, averaged across remaining rows. */
export interface Bar {
  label: string;
  mean: number;
  stderr: number;
  n: number;
}

export function buildBars(table: Table, category: string, y: string): Bar[] {
  requireColumns(table, [category, y]);
  const values = [...new Set(table.rows.map((r) => r[category]))];
  return values.map((v) => {
    const ys = table.rows.filter((r) => r[category] === v).map((r) => numeric(r, y));
    return { label: v, n: ys.length, ...meanStderr(ys) };
  });
}
