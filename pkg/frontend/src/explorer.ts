/** Headless explorer core: reducer plus scheduler plus response store.
 *
 * The browser entry point binds DOM controls to dispatch() and paints
 * from view models; tests drive the same object with a manual clock and
 * compare the emitted request lines.
 */

import {
  EditResponse,
  GenerateResponse,
  MixResponse,
  Transport,
  TransitionResponse,
} from "./api.js";
import { Clock, RealClock, RequestScheduler } from "./scheduler.js";
import {
  PanelName,
  SessionEvent,
  SessionView,
  initialSession,
  panelFor,
  reduce,
  requestForPanel,
} from "./state.js";

export interface PanelResponses {
  generate?: GenerateResponse;
  transition?: TransitionResponse;
  mix?: MixResponse;
  edit?: EditResponse;
}

export class Explorer {
  state: SessionView = initialSession();
  responses: PanelResponses = {};
  errors: Partial<Record<PanelName, string>> = {};
  /** Bumped on every applied response or error; the UI repaints on it. */
  revision = 0;
  private readonly scheduler: RequestScheduler;

  constructor(transport: Transport, clock: Clock = new RealClock(), debounceMs?: number) {
    this.scheduler = new RequestScheduler(
      transport,
      clock,
      (panel, response) => this.apply(panel as PanelName, response),
      (panel, message) => {
        this.errors[panel as PanelName] = message;
        this.revision++;
      },
      debounceMs,
    );
  }

  dispatch(ev: SessionEvent): void {
    if (ev.kind === "adopt") {
      // copy the last generated code into the chosen slot; no request
      const last = this.responses.generate;
      if (last !== undefined && last.codes.length > 0) {
        const slot = {
          code: last.codes[0]!,
          space: last.code_space,
          volumeId: last.volumes[0]?.id ?? null,
        };
        this.state = { ...this.state, [ev.role]: slot };
        this.revision++;
      }
      return;
    }
    this.state = reduce(this.state, ev);
    this.revision++;
    const panel = panelFor(ev);
    if (panel !== null) {
      this.scheduler.commit(panel, () => requestForPanel(this.state, panel));
    }
  }

  private apply(panel: PanelName, response: unknown): void {
    delete this.errors[panel];
    switch (panel) {
      case "generate":
        this.responses.generate = response as GenerateResponse;
        break;
      case "transition":
        this.responses.transition = response as TransitionResponse;
        break;
      case "mix":
        this.responses.mix = response as MixResponse;
        break;
      case "edit":
        this.responses.edit = response as EditResponse;
        break;
    }
    this.revision++;
  }

  requestLog(): readonly string[] {
    return this.scheduler.log;
  }

  idle(): Promise<void> {
    return this.scheduler.idle();
  }
}
