/** Orchestrator: owns the state, runs one effect at a time against the API,
 * and notifies a render callback. DOM-free so the submit/fetch discipline is
 * testable against a stubbed client. */

import { ApiClient, ConflictError } from "./api.js";
import { initialState, reduce, type UiEvent, type UiState } from "./state.js";

export class App {
  private state: UiState = initialState;
  private inFlight = false;

  constructor(
    private api: ApiClient,
    private render: (state: UiState) => void = () => {},
  ) {}

  get current(): UiState {
    return this.state;
  }

  async start(): Promise<void> {
    this.render(this.state);
    await this.runEffects();
  }

  /** Applies an event, then runs whatever IO the new phase calls for. */
  async dispatch(event: UiEvent): Promise<void> {
    const next = reduce(this.state, event);
    if (next === this.state) return;
    this.state = next;
    this.render(this.state);
    await this.runEffects();
  }

  private async runEffects(): Promise<void> {
    // one in-flight request at a time; phases re-trigger via dispatch
    if (this.inFlight) return;
    if (this.state.phase === "loading") {
      await this.withFlight(async () => {
        const task = await this.api.fetchNext();
        await this.dispatchInternal(
          task === null ? { type: "queue-empty" } : { type: "task-received", task },
        );
      });
    } else if (this.state.phase === "submitting") {
      const { task, pendingChoice } = this.state;
      if (!task || !pendingChoice) return;
      await this.withFlight(async () => {
        try {
          await this.api.submit(task.task_id, pendingChoice);
          await this.dispatchInternal({ type: "submit-ok" });
        } catch (err) {
          if (err instanceof ConflictError) {
            await this.dispatchInternal({ type: "lease-conflict" });
          } else {
            throw err;
          }
        }
      });
    }
  }

  private async withFlight(fn: () => Promise<void>): Promise<void> {
    this.inFlight = true;
    try {
      await fn();
    } catch (err) {
      this.state = reduce(this.state, {
        type: "network-error",
        message: err instanceof Error ? err.message : String(err),
      });
      this.render(this.state);
    } finally {
      this.inFlight = false;
    }
  }

  private async dispatchInternal(event: UiEvent): Promise<void> {
    this.state = reduce(this.state, event);
    this.render(this.state);
    // chain follow-up IO (e.g. submit-ok -> loading -> fetch next)
    this.inFlight = false;
    await this.runEffects();
  }
}
