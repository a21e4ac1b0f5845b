/** Orchestration: read the documented CSVs, emit figures and the summary. */

import * as fs from 'node:fs';
import * as path from 'node:path';

import {
    EnvelopeSeries,
    GammaPoint,
    QqSeries,
    contourOverlayPlot,
    gammaConvergencePlot,
    qqPlot,
} from './figures.js';
import {
    GAMMA_COLUMNS,
    MARGINALS_COLUMNS,
    Row,
    SchemaError,
    TESTS_COLUMNS,
    numeric,
    readTable,
} from './schema.js';

export interface ReportInputs {
    marginalsCsv: string;
    testsCsv: string;
    gammaCsv: string;
    outDir: string;
}

export function inputsFrom(dir: string, outDir?: string): ReportInputs {
    return {
        marginalsCsv: path.join(dir, 'marginals.csv'),
        testsCsv: path.join(dir, 'tests.csv'),
        gammaCsv: path.join(dir, 'gamma.csv'),
        outDir: outDir ?? path.join(dir, 'report'),
    };
}

function groupMarginals(rows: Row[], file: string): Map<string, Map<number, number[]>> {
    const out = new Map<string, Map<number, number[]>>();
    for (const row of rows) {
        const source = row.source;
        const s = numeric(row, 's', file);
        const v = numeric(row, 'value', file);
        if (!out.has(source)) out.set(source, new Map());
        const bySource = out.get(source)!;
        if (!bySource.has(s)) bySource.set(s, []);
        bySource.get(s)!.push(v);
    }
    return out;
}

function percentile(sorted: number[], q: number): number {
    const pos = q * (sorted.length - 1);
    const i = Math.floor(pos);
    const frac = pos - i;
    return sorted[i] + (sorted[Math.min(i + 1, sorted.length - 1)] - sorted[i]) * frac;
}

function testsTable(rows: Row[]): string {
    const tr = rows.map((r) => {
        const color = r.status === 'pass' ? '#1a7f37' : '#c62828';
        return `<tr><td>${r.test}</td><td>${r.statistic}</td><td>${r.p_value}</td>` +
            `<td>${r.params}</td><td style="color:${color};font-weight:bold">${r.status}</td></tr>`;
    }).join('\n');
    return `<table>
<thead><tr><th>test</th><th>statistic</th><th>p value</th><th>params</th><th>status</th></tr></thead>
<tbody>
${tr}
</tbody></table>`;
}

/** Render every figure plus summary.html; returns the list of files written. */
export function renderAll(inputs: ReportInputs): string[] {
    const marginals = readTable(inputs.marginalsCsv, MARGINALS_COLUMNS);
    const tests = readTable(inputs.testsCsv, TESTS_COLUMNS);
    const gamma = readTable(inputs.gammaCsv, GAMMA_COLUMNS);

    fs.mkdirSync(inputs.outDir, { recursive: true });
    const written: string[] = [];
    const emit = (name: string, content: string) => {
        const p = path.join(inputs.outDir, name);
        fs.writeFileSync(p, content);
        written.push(p);
    };

    const bySource = groupMarginals(marginals, inputs.marginalsCsv);
    const times = [...(bySource.get('tau') ?? bySource.values().next().value as Map<number, number[]>).keys()]
        .sort((a, b) => a - b);

    // one QQ figure per observation time
    for (const s of times) {
        const series: QqSeries[] = [];
        const tau = bySource.get('tau')?.get(s);
        const limitGamma = bySource.get('limit_gamma')?.get(s);
        const tilde = bySource.get('tau_tilde')?.get(s);
        const limit = bySource.get('limit')?.get(s);
        if (tau && limitGamma) series.push({ name: 'tau', empirical: tau, reference: limitGamma });
        if (tilde && limit) series.push({ name: 'tau_tilde', empirical: tilde, reference: limit });
        if (series.length === 0) {
            throw new SchemaError(`${inputs.marginalsCsv}: no plottable source pair at s=${s}`);
        }
        emit(`qq_${s}.svg`, qqPlot(`empirical vs limit quantiles at s = ${s}`, series));
    }

    // finite-bias ratio convergence curve
    const pts: GammaPoint[] = [];
    let limitValue: number | null = null;
    for (const row of gamma) {
        const value = numeric(row, 'value', inputs.gammaCsv);
        if (row.epsilon === 'limit') {
            limitValue = value;
            continue;
        }
        pts.push({
            epsilon: numeric(row, 'epsilon', inputs.gammaCsv),
            value,
            stdError: numeric(row, 'std_error', inputs.gammaCsv),
            estimator: row.estimator,
        });
    }
    if (pts.length === 0) {
        throw new SchemaError(`${inputs.gammaCsv}: no epsilon rows to plot`);
    }
    emit('gamma_convergence.svg', gammaConvergencePlot(pts, limitValue));

    // envelope overlay across observation times
    const envelopes: EnvelopeSeries[] = [];
    for (const [source, byTime] of [...bySource.entries()].sort()) {
        const rows: Array<[number, number, number, number]> = [];
        for (const [s, vals] of [...byTime.entries()].sort((a, b) => a[0] - b[0])) {
            const sorted = [...vals].sort((a, b) => a - b);
            const mean = sorted.reduce((acc, v) => acc + v, 0) / sorted.length;
            rows.push([s, percentile(sorted, 0.1), mean, percentile(sorted, 0.9)]);
        }
        envelopes.push({ source, rows });
    }
    emit('contour_overlay.svg', contourOverlayPlot(envelopes));

    const figures = written.map((p) => path.basename(p));
    const html = `<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>rangelab report</title>
<style>body{font-family:sans-serif;margin:24px;max-width:1100px}
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:4px 8px;font-size:13px}
img{border:1px solid #eee;margin:6px}</style></head>
<body>
<h1>Scaling-limit verification report</h1>
<h2>Test results</h2>
${testsTable(tests)}
<h2>Figures</h2>
${figures.map((f) => `<img src="${f}" alt="${f}" width="520">`).join('\n')}
</body></html>
`;
    emit('summary.html', html);
    return written;
}
