/** Minimal CSV reading for the metrics files (no quoting in this schema). */

import { readFileSync } from "node:fs";

export type Row = Record<string, string>;

export class SchemaError extends Error {}

export interface Table {
  columns: string[];
  rows: Row[];
}

export function parseCsv(text: string): Table {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError("empty CSV: no header row");
  }
  const columns = lines[0].split(",");
  const rows: Row[] = [];
  for (let i = 1; i < lines.length; i++) {
    const parts = lines[i].split(",");
    if (parts.length !== columns.length) {
      throw new SchemaError(
        `row ${i} has ${parts.length} fields, header has ${columns.length}`,
      );
    }
    const row: Row = {};
    columns.forEach((c, j) => (row[c] = parts[j]));
    rows.push(row);
  }
  return { columns, rows };
}

export function readCsv(path: string): Table {
  return parseCsv(readFileSync(path, "utf-8"));
}

export function requireColumns(table: Table, needed: string[]): void {
  const missing = needed.filter((c) => !table.columns.includes(c));
  if (missing.length > 0) {
    throw new SchemaError(
      `missing column(s) ${missing.join(", ")}; available: ${table.columns.join(", ")}`,
    );
  }
}

export function numeric(row: Row, column: string): number {
  const value = Number(row[column]);
  if (!Number.isFinite(value)) {
    throw new SchemaError(`non-numeric value ${JSON.stringify(row[column])} in column ${column}`);
  }
  return value;
}
