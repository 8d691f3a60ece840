/** Display-only formatting; every number comes from the API as-is. */

import type { Accuracy } from "./api.js";

/** Communication column unit: gigabytes with two decimals. */
export function formatBytesGB(bytes: number): string {
  return `${(bytes / 1e9).toFixed(2)} GB`;
}

/** Audit bound at full working precision: four significant digits. */
export function formatBound(bound: number): string {
  if (bound === 0) return "0";
  return Number(bound.toPrecision(4)).toString();
}

/** Audit bound headline: the at-a-glance three-decimal rounding. */
export function headlineBound(bound: number): string {
  return bound.toFixed(3);
}

export function formatAccuracy(a: Accuracy): string {
  return `${(a.decimal * 100).toFixed(1)}% (${a.numerator}/${a.denominator})`;
}

export function formatSeconds(s: number): string {
  if (s < 1e-3) return `${(s * 1e6).toFixed(0)} µs`;
  if (s < 1) return `${(s * 1e3).toFixed(1)} ms`;
  return `${s.toFixed(2)} s`;
}

export function formatTimestamp(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().replace("T", " ").slice(0, 19);
}
