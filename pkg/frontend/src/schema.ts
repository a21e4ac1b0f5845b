/** CSV loading with strict column checks against the documented schemas. */

import * as fs from 'node:fs';

export class SchemaError extends Error {}

export const MARGINALS_COLUMNS = ['s', 'value', 'source'] as const;
export const TESTS_COLUMNS = ['test', 'statistic', 'p_value', 'seed', 'params', 'status'] as const;
export const GAMMA_COLUMNS = ['weights', 'epsilon', 'estimator', 'value', 'std_error',
    'truncation_bound', 'n_samples', 'seed'] as const;

export type Row = Record<string, string>;

/** Minimal quote-aware CSV line splitter (fields never contain newlines). */
function splitCsvLine(line: string): string[] {
    const out: string[] = [];
    let cur = '';
    let quoted = false;
    for (let i = 0; i < line.length; i++) {
        const ch = line[i];
        if (quoted) {
            if (ch === '"') {
                if (line[i + 1] === '"') { cur += '"'; i++; } else { quoted = false; }
            } else {
                cur += ch;
            }
        } else if (ch === '"') {
            quoted = true;
        } else if (ch === ',') {
            out.push(cur);
            cur = '';
        } else {
            cur += ch;
        }
    }
    out.push(cur);
    return out;
}

export function readTable(path: string, columns: readonly string[]): Row[] {
    if (!fs.existsSync(path)) {
        throw new SchemaError(`missing input file: ${path}`);
    }
    const text = fs.readFileSync(path, 'utf8');
    const lines = text.split('\n').filter((l) => l.length > 0);
    if (lines.length === 0) {
        throw new SchemaError(`${path}: empty file, expected header ${columns.join(',')}`);
    }
    const header = splitCsvLine(lines[0]);
    if (header.length !== columns.length || columns.some((c, i) => header[i] !== c)) {
        throw new SchemaError(
            `${path}: header mismatch; expected "${columns.join(',')}" got "${lines[0]}"`);
    }
    if (lines.length === 1) {
        throw new SchemaError(`${path}: no data rows`);
    }
    const rows: Row[] = [];
    for (let i = 1; i < lines.length; i++) {
        const parts = splitCsvLine(lines[i]);
        if (parts.length !== columns.length) {
            throw new SchemaError(`${path}:${i + 1}: expected ${columns.length} fields, got ${parts.length}`);
        }
        const row: Row = {};
        columns.forEach((c, k) => { row[c] = parts[k]; });
        rows.push(row);
    }
    return rows;
}

export function numeric(row: Row, column: string, path: string): number {
    const v = Number(row[column]);
    if (!Number.isFinite(v) && row[column] !== 'nan') {
        throw new SchemaError(`${path}: non-numeric ${column}: ${row[column]}`);
    }
    return v;
}
