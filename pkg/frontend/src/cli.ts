#!/usr/bin/env node
/** Standalone entry: `rangelab-report <out-dir> [--dest <dir>]`. */

import { inputsFrom, renderAll } from './report.js';
import { SchemaError } from './schema.js';

export function main(argv: string[]): number {
    const args = argv.filter((a) => a !== '');
    if (args.length === 0 || args.includes('--help')) {
        console.error('usage: rangelab-report <out-dir> [--dest <dir>]');
        return args.includes('--help') ? 0 : 2;
    }
    const destIdx = args.indexOf('--dest');
    const dest = destIdx >= 0 ? args[destIdx + 1] : undefined;
    const dir = args.find((a, i) => !a.startsWith('--') && (destIdx < 0 || i !== destIdx + 1));
    if (!dir || (destIdx >= 0 && !dest)) {
        console.error('usage: rangelab-report <out-dir> [--dest <dir>]');
        return 2;
    }
    try {
        const files = renderAll(inputsFrom(dir, dest));
        for (const f of files) console.log(f);
        return 0;
    } catch (err) {
        if (err instanceof SchemaError) {
            console.error(`schema error: ${err.message}`);
            return 2;
        }
        console.error(`error: ${(err as Error).message}`);
        return 1;
    }
}

if (import.meta.url === `file://${process.argv[1]}`) {
    process.exit(main(process.argv.slice(2)));
}
