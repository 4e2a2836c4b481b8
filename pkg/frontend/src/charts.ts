/**
 * Dashboard building blocks: incremental series buffers fed from the
 * data API, an SVG polyline path builder (fixed chart types only), a
 * power duty-cycle segmenter, and a bounded log tail.
 */

import type { PortalApi } from "./client.js";
import type { DataQuery, SensorPoint } from "./types.js";

export interface ChartPoint {
  t: number;
  v: number;
}

export class SeriesBuffer {
  points: ChartPoint[] = [];

  constructor(public maxPoints = 2000) {}

  push(t: number, v: number): void {
    this.points.push({ t, v });
    if (this.points.length > this.maxPoints) {
      this.points.splice(0, this.points.length - this.maxPoints);
    }
  }

  last(): ChartPoint | null {
    return this.points.length ? this.points[this.points.length - 1] : null;
  }
}

/** All values equal (within eps) reads as a flat line, which is what
 * the constant-sensor fixture must produce. */
export function isFlatLine(points: ChartPoint[], eps = 1e-9): boolean {
  if (points.length < 2) return points.length === 1;
  const first = points[0].v;
  return points.every((p) => Math.abs(p.v - first) <= eps);
}

/** SVG path for a polyline chart. A flat series still gets a visible
 * mid-height line by padding the value range. */
export function polylinePath(points: ChartPoint[], width: number,
                             height: number, pad = 4): string {
  if (!points.length) return "";
  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  let vMin = Math.min(...points.map((p) => p.v));
  let vMax = Math.max(...points.map((p) => p.v));
  if (vMax - vMin < 1e-12) {
    vMin -= 1;
    vMax += 1;
  }
  const spanT = t1 - t0 || 1;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  return points
    .map((p, i) => {
      const x = pad + ((p.t - t0) / spanT) * innerW;
      const y = pad + (1 - (p.v - vMin) / (vMax - vMin)) * innerH;
      return `${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export interface DutySegment {
  t0: number;
  t1: number;
  level: "active" | "sleep";
}

/** Split a power trace into active/sleep segments so the chart can be
 * eyeballed against the firmware's tx/sleep schedule. The threshold
 * sits midway between the observed floor and ceiling. */
export function dutyCycleSegments(samples: number[], rateHz: number,
                                  t0 = 0): DutySegment[] {
  if (!samples.length || rateHz <= 0) return [];
  const lo = Math.min(...samples);
  const hi = Math.max(...samples);
  if (hi - lo < 1e-9) {
    return [{ t0, t1: t0 + samples.length / rateHz, level: "sleep" }];
  }
  const threshold = (lo + hi) / 2;
  const dt = 1 / rateHz;
  const segments: DutySegment[] = [];
  let start = t0;
  let level: DutySegment["level"] = samples[0] > threshold ? "active" : "sleep";
  for (let i = 1; i < samples.length; i++) {
    const next: DutySegment["level"] = samples[i] > threshold ? "active" : "sleep";
    if (next !== level) {
      segments.push({ t0: start, t1: t0 + i * dt, level });
      start = t0 + i * dt;
      level = next;
    }
  }
  segments.push({ t0: start, t1: t0 + samples.length * dt, level });
  return segments;
}

export class LogTail {
  lines: string[] = [];
  total = 0;

  constructor(public cap = 500) {}

  push(line: string): void {
    this.total += 1;
    this.lines.push(line);
    if (this.lines.length > this.cap) {
      this.lines.splice(0, this.lines.length - this.cap);
    }
  }
}

/** Poll the query endpoint no slower than this so charts stay within
 * two seconds of the bus. */
export const CHART_POLL_MS = 2000;

/** Incremental chart feed: each tick fetches only points newer than
 * the cursor and appends them to per-(node, metric) series. */
export class LiveSeries {
  series = new Map<string, SeriesBuffer>();
  cursor: number | null = null;

  constructor(private api: PortalApi, private query: DataQuery) {}

  private key(p: SensorPoint): string {
    return `${p.node}/${p.metric}`;
  }

  async tick(): Promise<SensorPoint[]> {
    const q: DataQuery = { ...this.query };
    if (this.cursor !== null) q.from = this.cursor;
    const points = await this.api.queryData(q);
    for (const p of points) {
      let buf = this.series.get(this.key(p));
      if (!buf) {
        buf = new SeriesBuffer();
        this.series.set(this.key(p), buf);
      }
      buf.push(p.ts, p.value);
      // half-open query window: next tick starts just past this point
      this.cursor = this.cursor === null ? p.ts + 1e-6 : Math.max(this.cursor, p.ts + 1e-6);
    }
    return points;
  }
}
