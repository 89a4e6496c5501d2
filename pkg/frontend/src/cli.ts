#!/usr/bin/env node
/**
 * plots <trajectory|controls|distances> --trace <csv> [--trace2 <csv>] --out <file>
 *
 * Reads trace.csv (with its summary.json sidecar) and writes an SVG figure.
 * Exit codes: 0 success, 1 error.
 */
import { writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { FigureKind, renderFigure } from "./figures.js";
import { TraceFormatError, loadRun } from "./schema.js";

const KINDS: FigureKind[] = ["trajectory", "controls", "distances"];

export function run(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        trace: { type: "string" },
        trace2: { type: "string" },
        out: { type: "string" },
      },
    });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const kind = parsed.positionals[0] as FigureKind | undefined;
  const { trace, trace2, out } = parsed.values;
  if (!kind || !KINDS.includes(kind) || !trace || !out || parsed.positionals.length > 1) {
    console.error(
      "usage: plots <trajectory|controls|distances> --trace <csv> [--trace2 <csv>] --out <file>",
    );
    return 1;
  }
  try {
    const runs = [loadRun(trace)];
    if (trace2) runs.push(loadRun(trace2));
    writeFileSync(out, renderFigure(kind, runs));
    console.log(`wrote ${out}`);
    return 0;
  } catch (err) {
    if (err instanceof TraceFormatError || err instanceof Error) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!)) {
  process.exit(run(process.argv.slice(2)));
}
