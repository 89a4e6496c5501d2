/** Minimal deterministic SVG scene builder: no DOM, just strings. */

export interface Extent {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

export const SERIES_COLORS = ["#c0392b", "#2471a3", "#1e8449", "#8e44ad"];
export const CONSTRAINT_COLOR = "#000000";
export const GRID_COLOR = "#d5d8dc";

export function extentOf(xs: number[], ys: number[], pad = 0.05): Extent {
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);
  const yMin = Math.min(...ys);
  const yMax = Math.max(...ys);
  const dx = Math.max(xMax - xMin, 1e-9);
  const dy = Math.max(yMax - yMin, 1e-9);
  return {
    xMin: xMin - pad * dx,
    xMax: xMax + pad * dx,
    yMin: yMin - pad * dy,
    yMax: yMax + pad * dy,
  };
}

export function mergeExtents(a: Extent, b: Extent): Extent {
  return {
    xMin: Math.min(a.xMin, b.xMin),
    xMax: Math.max(a.xMax, b.xMax),
    yMin: Math.min(a.yMin, b.yMin),
    yMax: Math.max(a.yMax, b.yMax),
  };
}

function fmt(v: number): string {
  return Number.isInteger(v) ? String(v) : v.toPrecision(6);
}

/** A single cartesian panel mapped into pixel space, y axis flipped. */
export class Panel {
  private parts: string[] = [];
  private legend: { label: string; color: string; dash?: string }[] = [];

  constructor(
    readonly extent: Extent,
    readonly x0: number,
    readonly y0: number,
    readonly width: number,
    readonly height: number,
    readonly title = "",
  ) {}

  px(x: number): number {
    const f = (x - this.extent.xMin) / (this.extent.xMax - this.extent.xMin);
    return this.x0 + f * this.width;
  }

  py(y: number): number {
    const f = (y - this.extent.yMin) / (this.extent.yMax - this.extent.yMin);
    return this.y0 + this.height - f * this.height;
  }

  polyline(xs: number[], ys: number[], color: string, opts: {
    width?: number; dash?: string; label?: string;
  } = {}): void {
    const pts = xs
      .map((x, i) => `${fmt(this.px(x))},${fmt(this.py(ys[i]))}`)
      .join(" ");
    const dash = opts.dash ? ` stroke-dasharray="${opts.dash}"` : "";
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${color}" ` +
        `stroke-width="${opts.width ?? 1.5}"${dash}/>`,
    );
    if (opts.label) {
      this.legend.push({ label: opts.label, color, dash: opts.dash });
    }
  }

  hline(y: number, color: string, label?: string): void {
    if (y < this.extent.yMin || y > this.extent.yMax) return;
    this.parts.push(
      `<line x1="${fmt(this.x0)}" y1="${fmt(this.py(y))}" ` +
        `x2="${fmt(this.x0 + this.width)}" y2="${fmt(this.py(y))}" ` +
        `stroke="${CONSTRAINT_COLOR}" stroke-width="1" stroke-dasharray="6 3"/>`,
    );
    if (label) {
      this.parts.push(
        `<text x="${fmt(this.x0 + this.width - 4)}" y="${fmt(this.py(y) - 3)}" ` +
          `font-size="9" text-anchor="end" fill="${CONSTRAINT_COLOR}">${label}</text>`,
      );
    }
  }

  render(xLabel = "", yLabel = ""): string {
    const frame =
      `<rect x="${fmt(this.x0)}" y="${fmt(this.y0)}" width="${fmt(this.width)}" ` +
      `height="${fmt(this.height)}" fill="none" stroke="${GRID_COLOR}"/>`;
    const title = this.title
      ? `<text x="${fmt(this.x0 + this.width / 2)}" y="${fmt(this.y0 - 6)}" ` +
        `font-size="11" text-anchor="middle">${this.title}</text>`
      : "";
    const labels: string[] = [];
    if (xLabel) {
      labels.push(
        `<text x="${fmt(this.x0 + this.width / 2)}" y="${fmt(this.y0 + this.height + 24)}" ` +
          `font-size="10" text-anchor="middle">${xLabel}</text>`,
      );
    }
    if (yLabel) {
      const cx = this.x0 - 30;
      const cy = this.y0 + this.height / 2;
      labels.push(
        `<text x="${fmt(cx)}" y="${fmt(cy)}" font-size="10" text-anchor="middle" ` +
          `transform="rotate(-90 ${fmt(cx)} ${fmt(cy)})">${yLabel}</text>`,
      );
    }
    const ticks: string[] = [];
    for (const f of [0, 0.5, 1]) {
      const xv = this.extent.xMin + f * (this.extent.xMax - this.extent.xMin);
      const yv = this.extent.yMin + f * (this.extent.yMax - this.extent.yMin);
      ticks.push(
        `<text x="${fmt(this.px(xv))}" y="${fmt(this.y0 + this.height + 12)}" ` +
          `font-size="9" text-anchor="middle">${xv.toPrecision(3)}</text>`,
        `<text x="${fmt(this.x0 - 4)}" y="${fmt(this.py(yv) + 3)}" ` +
          `font-size="9" text-anchor="end">${yv.toPrecision(3)}</text>`,
      );
    }
    const legendParts: string[] = [];
    this.legend.forEach((entry, i) => {
      const lx = this.x0 + 8;
      const ly = this.y0 + 14 + 14 * i;
      const dash = entry.dash ? ` stroke-dasharray="${entry.dash}"` : "";
      legendParts.push(
        `<line x1="${fmt(lx)}" y1="${fmt(ly - 3)}" x2="${fmt(lx + 18)}" ` +
          `y2="${fmt(ly - 3)}" stroke="${entry.color}" stroke-width="2"${dash}/>`,
        `<text x="${fmt(lx + 22)}" y="${fmt(ly)}" font-size="10">${entry.label}</text>`,
      );
    });
    return [frame, title, ...this.parts, ...ticks, ...labels, ...legendParts].join("\n");
  }
}

export function document(width: number, height: number, body: string): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}" font-family="Helvetica, sans-serif">\n` +
    `<rect width="${width}" height="${height}" fill="#ffffff"/>\n${body}\n</svg>\n`
  );
}
