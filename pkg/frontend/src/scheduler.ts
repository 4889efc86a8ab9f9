/** Debounced request scheduling with stale-response discarding.
 *
 * Slider-driven commits are debounced at 150 ms per panel and numbered by
 * a global sequence counter. Each panel keeps at most one request in
 * flight; a commit that fires while one is pending supersedes it, and a
 * response whose sequence number is older than the panel's newest intent
 * is discarded instead of rendered.
 */

import { ApiRequest, Transport, requestLine } from "./api.js";

export interface Clock {
  now(): number;
  schedule(delayMs: number, fn: () => void | Promise<void>): () => void;
}

export class RealClock implements Clock {
  now(): number {
    return Date.now();
  }

  schedule(delayMs: number, fn: () => void | Promise<void>): () => void {
    const id = setTimeout(() => void fn(), delayMs);
    return () => clearTimeout(id);
  }
}

/** Deterministic clock for replays: timers fire, awaited one at a time,
 * when the test advances past their deadline. */
export class ManualClock implements Clock {
  private t = 0;
  private timers: { at: number; order: number; fn: () => void | Promise<void> }[] = [];
  private counter = 0;

  now(): number {
    return this.t;
  }

  schedule(delayMs: number, fn: () => void | Promise<void>): () => void {
    const timer = { at: this.t + delayMs, order: this.counter++, fn };
    this.timers.push(timer);
    return () => {
      this.timers = this.timers.filter((x) => x !== timer);
    };
  }

  async advanceTo(t: number): Promise<void> {
    for (;;) {
      const due = this.timers
        .filter((x) => x.at <= t)
        .sort((a, b) => a.at - b.at || a.order - b.order)[0];
      if (due === undefined) break;
      this.timers = this.timers.filter((x) => x !== due);
      this.t = Math.max(this.t, due.at);
      await due.fn();
    }
    this.t = Math.max(this.t, t);
  }
}

export const DEBOUNCE_MS = 150;

interface PanelChannel {
  cancelPending: (() => void) | null; // debounce timer
  latestSeq: number; // newest intent for this panel
  inFlight: boolean;
  queued: (() => ApiRequest | null) | null; // superseding commit awaiting the wire
}

export class RequestScheduler {
  /** Canonical line per request actually sent, in wire order. */
  readonly log: string[] = [];

  private seq = 0;
  private channels = new Map<string, PanelChannel>();
  private pending: Promise<void>[] = [];

  constructor(
    private readonly transport: Transport,
    private readonly clock: Clock,
    private readonly onResponse: (panel: string, response: unknown) => void,
    private readonly onError: (panel: string, message: string) => void,
    private readonly debounceMs: number = DEBOUNCE_MS,
  ) {}

  private channel(panel: string): PanelChannel {
    let ch = this.channels.get(panel);
    if (ch === undefined) {
      ch = { cancelPending: null, latestSeq: 0, inFlight: false, queued: null };
      this.channels.set(panel, ch);
    }
    return ch;
  }

  /** Register a commit; after the debounce window the request is built
   * from the then-current state and sent. */
  commit(panel: string, build: () => ApiRequest | null): void {
    const ch = this.channel(panel);
    ch.cancelPending?.();
    ch.cancelPending = this.clock.schedule(this.debounceMs, () => {
      ch.cancelPending = null;
      return this.fire(panel, ch, build);
    });
  }

  private fire(panel: string, ch: PanelChannel, build: () => ApiRequest | null): Promise<void> {
    if (ch.inFlight) {
      ch.latestSeq = ++this.seq; // supersede whatever is on the wire
      ch.queued = build;
      return Promise.resolve();
    }
    return this.send(panel, ch, build, ++this.seq);
  }

  private send(
    panel: string,
    ch: PanelChannel,
    build: () => ApiRequest | null,
    mySeq: number,
  ): Promise<void> {
    const req = build();
    ch.latestSeq = Math.max(ch.latestSeq, mySeq);
    if (req === null) return Promise.resolve();
    ch.inFlight = true;
    this.log.push(requestLine(req));
    const op = this.transport
      .send(req)
      .then((response) => {
        if (mySeq === ch.latestSeq) this.onResponse(panel, response);
      })
      .catch((err: unknown) => {
        if (mySeq === ch.latestSeq) {
          this.onError(panel, err instanceof Error ? err.message : String(err));
        }
      })
      .then(() => {
        ch.inFlight = false;
        const next = ch.queued;
        ch.queued = null;
        if (next !== null) return this.send(panel, ch, next, ch.latestSeq);
      });
    this.pending.push(op);
    return op;
  }

  /** Resolves once every fired request has been answered and applied. */
  async idle(): Promise<void> {
    while (this.pending.length > 0) {
      const batch = this.pending;
      this.pending = [];
      await Promise.all(batch);
    }
  }
}
