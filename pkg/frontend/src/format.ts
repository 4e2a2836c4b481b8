// Small formatting helpers shared by the views. The platform schedules
// at minute granularity, so the conversions all live on epoch minutes.

export function minuteToDate(minute: number): Date {
  return new Date(minute * 60_000);
}

export function minuteToIso(minute: number): string {
  return minuteToDate(minute).toISOString().slice(0, 16) + "Z";
}

/** datetime-local / ISO input to epoch minutes; bare values are UTC. */
export function isoToMinute(text: string): number {
  let t = text.trim();
  if (!/([zZ]|[+-]\d\d:?\d\d)$/.test(t)) t += "Z";
  const ms = Date.parse(t);
  if (Number.isNaN(ms)) throw new Error(`not a date/time: ${text}`);
  return Math.floor(ms / 60_000);
}

export function fmtDuration(minutes: number): string {
  if (minutes < 60) return `${minutes} min`;
  const h = Math.floor(minutes / 60);
  const m = minutes % 60;
  return m ? `${h} h ${m} min` : `${h} h`;
}

export function fmtTime(epochSeconds: number): string {
  return new Date(epochSeconds * 1000).toISOString().replace("T", " ").slice(0, 19);
}
