/** Figure specification and rendering dispatch. */

import { readFileSync, writeFileSync } from "node:fs";

import { buildBars, buildCurves } from "./aggregate.js";
import { readCsv, SchemaError } from "./csv.js";
import { renderBarChart, renderLineChart } from "./svg.js";

export interface FigureSpec {
  input: string;
  kind: "line" | "bar";
  x: string;
  y: string | string[];
  groupBy?: string;
  out: string;
  title?: string;
  baseline?: number | string; // bar charts: horizontal reference, value or column name
}

export function validateSpec(raw: unknown): FigureSpec {
  if (typeof raw !== "object" || raw === null) {
    throw new SchemaError("figure spec must be a JSON object");
  }
  const spec = raw as Record<string, unknown>;
  for (const field of ["input", "kind", "x", "y", "out"]) {
    if (!(field in spec)) {
      throw new SchemaError(`figure spec missing required field '${field}'`);
    }
  }
  if (spec.kind !== "line" && spec.kind !== "bar") {
    throw new SchemaError(`unknown figure kind '${String(spec.kind)}' (expected line or bar)`);
  }
  const y = spec.y;
  if (typeof y !== "string" && !(Array.isArray(y) && y.every((v) => typeof v === "string"))) {
    throw new SchemaError("'y' must be a column name or a list of column names");
  }
  return spec as unknown as FigureSpec;
}

export function loadSpec(path: string): FigureSpec {
  return validateSpec(JSON.parse(readFileSync(path, "utf-8")));
}

/** Render the figure and return the output path. */
export function render(spec: FigureSpec): string {
  const table = readCsv(spec.input);
  if (table.rows.length < 1) {
    throw new SchemaError("input CSV has no data rows");
  }
  const ys = Array.isArray(spec.y) ? spec.y : [spec.y];
  const title = spec.title ?? `${ys.join(", ")} vs ${spec.x}`;
  let svg: string;
  if (spec.kind === "line") {
    const curves = buildCurves(table, spec.x, ys, spec.groupBy);
    svg = renderLineChart(curves, spec.x, ys.join(", "), title);
  } else {
    let baseline: number | undefined;
    if (typeof spec.baseline === "number") {
      baseline = spec.baseline;
    } else if (typeof spec.baseline === "string") {
      if (!table.columns.includes(spec.baseline)) {
        throw new SchemaError(
          `baseline column '${spec.baseline}' not found; available: ${table.columns.join(", ")}`,
        );
      }
      baseline = Number(table.rows[0][spec.baseline]);
    }
    const bars = buildBars(table, spec.x, ys[0]);
    svg = renderBarChart(bars, ys[0], title, baseline);
  }
  writeFileSync(spec.out, svg);
  return spec.out;
}
