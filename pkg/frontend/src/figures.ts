/** Deterministic SVG figure builders (no DOM, no timestamps). */

const W = 560;
const H = 420;
const M = { left: 62, right: 16, top: 28, bottom: 46 };

const PALETTE: Record<string, string> = {
    tau: '#d62728',
    tau_tilde: '#1f77b4',
    limit: '#555555',
    limit_gamma: '#2ca02c',
};

function fmt(x: number): string {
    return Number(x.toPrecision(5)).toString();
}

function ticks(lo: number, hi: number, n = 5): number[] {
    if (!(hi > lo)) return [lo];
    const raw = (hi - lo) / n;
    const mag = Math.pow(10, Math.floor(Math.log10(raw)));
    const step = [1, 2, 5, 10].map((m) => m * mag).find((s) => (hi - lo) / s <= n) ?? mag * 10;
    const out: number[] = [];
    for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12; t += step) out.push(t);
    return out;
}

class Frame {
    constructor(readonly xlo: number, readonly xhi: number,
                readonly ylo: number, readonly yhi: number) {}

    x(v: number): number {
        return M.left + ((v - this.xlo) / (this.xhi - this.xlo || 1)) * (W - M.left - M.right);
    }

    y(v: number): number {
        return H - M.bottom - ((v - this.ylo) / (this.yhi - this.ylo || 1)) * (H - M.top - M.bottom);
    }

    axes(xlabel: string, ylabel: string): string {
        const parts: string[] = [];
        parts.push(`<rect x="${M.left}" y="${M.top}" width="${W - M.left - M.right}" ` +
            `height="${H - M.top - M.bottom}" fill="none" stroke="#999"/>`);
        for (const t of ticks(this.xlo, this.xhi)) {
            const px = this.x(t);
            parts.push(`<line x1="${fmt(px)}" y1="${H - M.bottom}" x2="${fmt(px)}" y2="${H - M.bottom + 5}" stroke="#999"/>`);
            parts.push(`<text x="${fmt(px)}" y="${H - M.bottom + 18}" font-size="11" text-anchor="middle">${fmt(t)}</text>`);
        }
        for (const t of ticks(this.ylo, this.yhi)) {
            const py = this.y(t);
            parts.push(`<line x1="${M.left - 5}" y1="${fmt(py)}" x2="${M.left}" y2="${fmt(py)}" stroke="#999"/>`);
            parts.push(`<text x="${M.left - 8}" y="${fmt(py + 4)}" font-size="11" text-anchor="end">${fmt(t)}</text>`);
        }
        parts.push(`<text x="${(M.left + W - M.right) / 2}" y="${H - 10}" font-size="12" text-anchor="middle">${xlabel}</text>`);
        parts.push(`<text x="16" y="${(M.top + H - M.bottom) / 2}" font-size="12" text-anchor="middle" ` +
            `transform="rotate(-90 16 ${(M.top + H - M.bottom) / 2})">${ylabel}</text>`);
        return parts.join('\n');
    }
}

function svgDocument(title: string, body: string): string {
    return `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">
<rect width="${W}" height="${H}" fill="white"/>
<text x="${W / 2}" y="18" font-size="13" font-weight="bold" text-anchor="middle">${title}</text>
${body}
</svg>
`;
}

function quantiles(sorted: number[], n: number): number[] {
    const out: number[] = [];
    for (let k = 1; k <= n; k++) {
        const q = k / (n + 1);
        const pos = q * (sorted.length - 1);
        const i = Math.floor(pos);
        const frac = pos - i;
        out.push(sorted[i] + (sorted[Math.min(i + 1, sorted.length - 1)] - sorted[i]) * frac);
    }
    return out;
}

export interface QqSeries {
    name: string;
    empirical: number[];
    reference: number[];
}

/** Empirical-vs-reference quantile plot with the y = x diagonal. */
export function qqPlot(title: string, series: QqSeries[], nPoints = 60): string {
    const all: number[] = [];
    const pts = series.map((s) => {
        const a = quantiles([...s.empirical].sort((p, q) => p - q), nPoints);
        const b = quantiles([...s.reference].sort((p, q) => p - q), nPoints);
        all.push(...a, ...b);
        return { name: s.name, a, b };
    });
    const lo = Math.min(...all);
    const hi = Math.max(...all);
    const f = new Frame(lo, hi, lo, hi);
    const body: string[] = [f.axes('reference quantile', 'empirical quantile')];
    body.push(`<line x1="${fmt(f.x(lo))}" y1="${fmt(f.y(lo))}" x2="${fmt(f.x(hi))}" y2="${fmt(f.y(hi))}" ` +
        `stroke="#aaa" stroke-dasharray="4 3"/>`);
    pts.forEach((s, idx) => {
        const color = PALETTE[s.name] ?? ['#d62728', '#1f77b4'][idx % 2];
        for (let i = 0; i < nPoints; i++) {
            body.push(`<circle cx="${fmt(f.x(s.b[i]))}" cy="${fmt(f.y(s.a[i]))}" r="2.4" ` +
                `fill="${color}" fill-opacity="0.75"/>`);
        }
        body.push(`<text x="${W - M.right - 8}" y="${M.top + 16 + 14 * idx}" font-size="11" ` +
            `text-anchor="end" fill="${color}">${s.name}</text>`);
    });
    return svgDocument(title, body.join('\n'));
}

export interface GammaPoint {
    epsilon: number;
    value: number;
    stdError: number;
    estimator: string;
}

export function gammaConvergencePlot(points: GammaPoint[], limitValue: number | null): string {
    const xs = points.map((p) => p.epsilon);
    const ys = points.map((p) => p.value);
    if (limitValue !== null) ys.push(limitValue);
    const f = new Frame(0, Math.max(...xs) * 1.08, Math.min(...ys) * 0.96, Math.max(...ys) * 1.04);
    const body: string[] = [f.axes('epsilon', 'distinct-per-vertex ratio')];
    if (limitValue !== null) {
        body.push(`<line x1="${M.left}" y1="${fmt(f.y(limitValue))}" x2="${W - M.right}" ` +
            `y2="${fmt(f.y(limitValue))}" stroke="#555" stroke-dasharray="6 4"/>`);
        body.push(`<text x="${W - M.right - 6}" y="${fmt(f.y(limitValue) - 6)}" font-size="11" ` +
            `text-anchor="end" fill="#555">limit</text>`);
    }
    const byEstimator = new Map<string, GammaPoint[]>();
    for (const p of points) {
        const arr = byEstimator.get(p.estimator) ?? [];
        arr.push(p);
        byEstimator.set(p.estimator, arr);
    }
    const colors = ['#2ca02c', '#d62728', '#1f77b4'];
    let idx = 0;
    for (const [name, pts] of byEstimator) {
        const color = colors[idx % colors.length];
        const sorted = [...pts].sort((a, b) => a.epsilon - b.epsilon);
        const line = sorted.map((p) => `${fmt(f.x(p.epsilon))},${fmt(f.y(p.value))}`).join(' ');
        body.push(`<polyline points="${line}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
        for (const p of sorted) {
            body.push(`<circle cx="${fmt(f.x(p.epsilon))}" cy="${fmt(f.y(p.value))}" r="3" fill="${color}"/>`);
            if (p.stdError > 0) {
                const y1 = f.y(p.value - 3 * p.stdError);
                const y2 = f.y(p.value + 3 * p.stdError);
                body.push(`<line x1="${fmt(f.x(p.epsilon))}" y1="${fmt(y1)}" x2="${fmt(f.x(p.epsilon))}" ` +
                    `y2="${fmt(y2)}" stroke="${color}"/>`);
            }
        }
        body.push(`<text x="${W - M.right - 8}" y="${M.top + 16 + 14 * idx}" font-size="11" ` +
            `text-anchor="end" fill="${color}">${name}</text>`);
        idx += 1;
    }
    return svgDocument('finite-bias ratio vs epsilon', body.join('\n'));
}

export interface EnvelopeSeries {
    source: string;
    /** per observation time: [s, p10, mean, p90] */
    rows: Array<[number, number, number, number]>;
}

export function contourOverlayPlot(series: EnvelopeSeries[]): string {
    const xs = series.flatMap((e) => e.rows.map((r) => r[0]));
    const ys = series.flatMap((e) => e.rows.flatMap((r) => [r[1], r[3]]));
    const f = new Frame(0, Math.max(...xs) * 1.05, 0, Math.max(...ys) * 1.08);
    const body: string[] = [f.axes('observation time s', 'rescaled contour value')];
    series.forEach((e, idx) => {
        const color = PALETTE[e.source] ?? '#333';
        const rows = [...e.rows].sort((a, b) => a[0] - b[0]);
        const upper = rows.map((r) => `${fmt(f.x(r[0]))},${fmt(f.y(r[3]))}`);
        const lower = [...rows].reverse().map((r) => `${fmt(f.x(r[0]))},${fmt(f.y(r[1]))}`);
        body.push(`<polygon points="${upper.join(' ')} ${lower.join(' ')}" fill="${color}" ` +
            `fill-opacity="0.12" stroke="none"/>`);
        const mean = rows.map((r) => `${fmt(f.x(r[0]))},${fmt(f.y(r[2]))}`).join(' ');
        body.push(`<polyline points="${mean}" fill="none" stroke="${color}" stroke-width="1.8"/>`);
        body.push(`<text x="${M.left + 8}" y="${M.top + 16 + 14 * idx}" font-size="11" fill="${color}">${e.source}</text>`);
    });
    return svgDocument('contour marginal envelopes (p10/mean/p90)', body.join('\n'));
}
