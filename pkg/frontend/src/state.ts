/** Pure UI state machine. All transition rules live here so they can be
 * tested without a DOM; the app shell only dispatches events and renders.
 *
 * The machine forbids double submission by construction: a choice is only
 * accepted in the "annotating" phase, and submitting moves to "submitting"
 * where further choices are ignored until the request settles. */

import type { Choice, TaskView } from "./api.js";

export type Phase =
  | "loading"
  | "annotating"
  | "confirming-neither"
  | "submitting"
  | "done"
  | "error";

export interface UiState {
  phase: Phase;
  task: TaskView | null;
  pendingChoice: Choice | null;
  message: string | null;
}

export type UiEvent =
  | { type: "task-received"; task: TaskView }
  | { type: "queue-empty" }
  | { type: "choice"; choice: Choice }
  | { type: "confirm" }
  | { type: "cancel" }
  | { type: "submit-ok" }
  | { type: "lease-conflict" }
  | { type: "network-error"; message: string }
  | { type: "retry" };

export const initialState: UiState = {
  phase: "loading",
  task: null,
  pendingChoice: null,
  message: null,
};

/** Bijective key → wire enum mapping (case-insensitive on letters). */
const KEY_TO_CHOICE: Record<string, Choice> = {
  "1": "First",
  "2": "Second",
  b: "Both",
  n: "Neither",
};

export function choiceForKey(key: string): Choice | null {
  return KEY_TO_CHOICE[key.toLowerCase()] ?? null;
}

const loading: UiState = { ...initialState };

export function reduce(state: UiState, event: UiEvent): UiState {
  switch (event.type) {
    case "task-received":
      if (state.phase !== "loading") return state;
      // keep any banner (e.g. "lease expired") so the user sees why the task changed
      return { phase: "annotating", task: event.task, pendingChoice: null, message: state.message };

    case "queue-empty":
      if (state.phase !== "loading") return state;
      return { phase: "done", task: null, pendingChoice: null, message: null };

    case "choice":
      // only one choice may ever be in flight; anything outside the
      // annotating phase (including "submitting") ignores further input
      if (state.phase !== "annotating") return state;
      if (event.choice === "Neither") {
        // Neither drops the instruction from the dataset; ask first
        return { ...state, phase: "confirming-neither", pendingChoice: "Neither" };
      }
      return { ...state, phase: "submitting", pendingChoice: event.choice };

    case "confirm":
      if (state.phase !== "confirming-neither") return state;
      return { ...state, phase: "submitting" };

    case "cancel":
      if (state.phase !== "confirming-neither") return state;
      return { ...state, phase: "annotating", pendingChoice: null };

    case "submit-ok":
      if (state.phase !== "submitting") return state;
      return loading;

    case "lease-conflict":
      // someone else finished the task or the lease expired: refetch
      if (state.phase !== "submitting") return state;
      return { ...loading, message: "Task lease expired; fetching a fresh one." };

    case "network-error":
      return { ...state, phase: "error", message: event.message };

    case "retry":
      if (state.phase !== "error") return state;
      if (state.task && state.pendingChoice) {
        // the failure hit mid-submit; resubmit the same choice, don't lose it
        return { ...state, phase: "submitting", message: null };
      }
      return { ...loading, message: null };
  }
}
