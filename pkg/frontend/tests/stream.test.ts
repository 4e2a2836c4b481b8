import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  BACKOFF_SECONDS, PortalStream, backoffDelayMs,
  type EventSourceLike, type StreamStatus,
} from "../src/stream.js";
import type { StreamEvent } from "../src/types.js";

class FakeSource implements EventSourceLike {
  listeners = new Map<string, (ev: MessageEvent) => void>();
  onopen: ((ev: unknown) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  closed = false;

  addEventListener(type: string, listener: (ev: MessageEvent) => void): void {
    this.listeners.set(type, listener);
  }

  close(): void {
    this.closed = true;
  }

  open(): void {
    this.onopen?.({});
  }

  fail(): void {
    this.onerror?.({});
  }

  emit(type: string, data: unknown): void {
    this.listeners.get(type)?.({ data: JSON.stringify(data) } as MessageEvent);
  }
}

describe("backoffDelayMs", () => {
  it("follows the capped schedule", () => {
    expect(BACKOFF_SECONDS).toEqual([1, 2, 4, 8, 10]);
    expect([0, 1, 2, 3, 4, 5, 9].map(backoffDelayMs))
      .toEqual([1000, 2000, 4000, 8000, 10000, 10000, 10000]);
  });
});

describe("PortalStream", () => {
  let sources: FakeSource[];
  let statuses: StreamStatus[];
  let events: StreamEvent[];

  const factory = () => {
    const source = new FakeSource();
    sources.push(source);
    return source;
  };

  const open = () =>
    new PortalStream("http://fake/api/v1/stream", {
      onStatus: (s) => statuses.push(s),
      onEvent: (e) => events.push(e),
    }, factory);

  beforeEach(() => {
    vi.useFakeTimers();
    sources = [];
    statuses = [];
    events = [];
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  it("dispatches named transition and alert events", () => {
    const stream = open();
    sources[0].open();
    sources[0].emit("transition", {
      experiment: "exp-0001", from: "Scheduled", to: "Deploying",
      at: 60, reason: "window reached",
    });
    sources[0].emit("alert", { kind: "node_offline", at: 120, node: "RSE-002" });
    expect(statuses).toEqual(["live"]);
    expect(events[0]).toEqual({
      event: "transition",
      data: { experiment: "exp-0001", from: "Scheduled", to: "Deploying",
              at: 60, reason: "window reached" },
    });
    expect(events[1].event).toBe("alert");
    expect(stream.lastEventAt).not.toBeNull();
    stream.close();
  });

  it("marks the stream stale on drop and reconnects with backoff", () => {
    const stream = open();
    sources[0].open();
    sources[0].fail();
    expect(statuses).toEqual(["live", "stale"]);
    expect(sources[0].closed).toBe(true);
    expect(sources).toHaveLength(1);

    vi.advanceTimersByTime(999);
    expect(sources).toHaveLength(1);
    vi.advanceTimersByTime(1);
    expect(sources).toHaveLength(2);

    // still down: the delays grow along the schedule and cap at 10 s
    for (const [i, delay] of [2000, 4000, 8000, 10000, 10000].entries()) {
      sources[sources.length - 1].fail();
      vi.advanceTimersByTime(delay - 1);
      expect(sources).toHaveLength(2 + i);
      vi.advanceTimersByTime(1);
      expect(sources).toHaveLength(3 + i);
    }
    stream.close();
  });

  it("resets the backoff once a connection opens", () => {
    const stream = open();
    sources[0].fail();
    vi.advanceTimersByTime(1000);
    sources[1].fail();
    vi.advanceTimersByTime(2000);
    sources[2].open();
    expect(stream.status).toBe("live");

    sources[2].fail();
    vi.advanceTimersByTime(1000); // back to the first delay
    expect(sources).toHaveLength(4);
    stream.close();
  });

  it("stays closed after close()", () => {
    const stream = open();
    sources[0].fail();
    stream.close();
    vi.advanceTimersByTime(60_000);
    expect(sources).toHaveLength(1);
  });
});
