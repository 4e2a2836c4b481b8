/**
 * Server-sent-events subscription for /api/v1/stream with automatic
 * reconnect. On a dropped connection the status flips to "stale" so
 * views can show an indicator, then recovery follows a capped backoff.
 */

import type { AlertRecord, StreamEvent, TransitionEvent } from "./types.js";

export const BACKOFF_SECONDS = [1, 2, 4, 8, 10] as const;

export function backoffDelayMs(attempt: number): number {
  const idx = Math.min(attempt, BACKOFF_SECONDS.length - 1);
  return BACKOFF_SECONDS[idx] * 1000;
}

export type StreamStatus = "connecting" | "live" | "stale";

export interface EventSourceLike {
  addEventListener(type: string, listener: (ev: MessageEvent) => void): void;
  close(): void;
  onopen: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

export interface StreamHandlers {
  onEvent?: (event: StreamEvent) => void;
  onStatus?: (status: StreamStatus) => void;
}

const defaultFactory: EventSourceFactory = (url) =>
  new EventSource(url) as unknown as EventSourceLike;

export class PortalStream {
  status: StreamStatus = "connecting";
  lastEventAt: number | null = null;
  private source: EventSourceLike | null = null;
  private attempt = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(
    private url: string,
    private handlers: StreamHandlers = {},
    private factory: EventSourceFactory = defaultFactory,
  ) {
    this.connect();
  }

  private setStatus(status: StreamStatus): void {
    if (this.status === status) return;
    this.status = status;
    this.handlers.onStatus?.(status);
  }

  private connect(): void {
    if (this.closed) return;
    const source = this.factory(this.url);
    this.source = source;
    source.onopen = () => {
      this.attempt = 0;
      this.setStatus("live");
    };
    source.onerror = () => {
      source.close();
      if (this.source !== source || this.closed) return;
      this.source = null;
      this.setStatus("stale");
      this.timer = setTimeout(() => this.connect(), backoffDelayMs(this.attempt));
      this.attempt += 1;
    };
    source.addEventListener("transition", (ev) => {
      this.dispatch({ event: "transition", data: JSON.parse(ev.data) as TransitionEvent });
    });
    source.addEventListener("alert", (ev) => {
      this.dispatch({ event: "alert", data: JSON.parse(ev.data) as AlertRecord });
    });
  }

  private dispatch(event: StreamEvent): void {
    this.lastEventAt = Date.now();
    this.handlers.onEvent?.(event);
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.source?.close();
    this.source = null;
  }
}
