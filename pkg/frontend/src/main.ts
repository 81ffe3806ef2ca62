/** DOM shell: renders the current state and forwards clicks/keys as events. */

import { ApiClient, loadConfig, type Choice, type TaskView } from "./api.js";
import { App } from "./app.js";
import { choiceForKey, type UiEvent, type UiState } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function answerPanel(
  label: string,
  key: string,
  text: string,
  choice: Choice,
  onChoice: (c: Choice) => void,
): HTMLElement {
  const panel = el("section", "answer-panel");
  panel.appendChild(el("h2", "answer-label", `${label} [${key}]`));
  panel.appendChild(el("p", "answer-text", text));
  const btn = el("button", "choose", `Choose ${label.toLowerCase()}`);
  btn.addEventListener("click", () => onChoice(choice));
  panel.appendChild(btn);
  return panel;
}

function renderTask(
  root: HTMLElement,
  task: TaskView,
  busy: boolean,
  onChoice: (c: Choice) => void,
): void {
  const figure = el("figure", "image-wrap");
  const img = el("img", "task-image");
  img.src = task.image_ref;
  img.alt = task.caption;
  figure.appendChild(img); // zoom-on-hover via CSS transform
  figure.appendChild(el("figcaption", "caption", task.caption));
  root.appendChild(figure);

  root.appendChild(el("p", "question", task.question));

  const row = el("div", "answers" + (busy ? " busy" : ""));
  row.appendChild(answerPanel("First", "1", task.answer_a, "First", onChoice));
  row.appendChild(answerPanel("Second", "2", task.answer_b, "Second", onChoice));
  root.appendChild(row);

  const extras = el("div", "extra-choices");
  for (const [label, key, choice] of [
    ["Both equally good", "B", "Both"],
    ["Neither acceptable", "N", "Neither"],
  ] as const) {
    const btn = el("button", "choose-extra", `${label} [${key}]`);
    btn.addEventListener("click", () => onChoice(choice));
    extras.appendChild(btn);
  }
  root.appendChild(extras);

  const p = task.progress;
  root.appendChild(
    el("footer", "progress", `${p.done} done / ${p.pending} pending / ${p.total} total`),
  );
}

export function render(
  root: HTMLElement,
  state: UiState,
  dispatch: (e: UiEvent) => void,
): void {
  root.replaceChildren();
  if (state.message) root.appendChild(el("div", "banner", state.message));

  switch (state.phase) {
    case "loading":
      root.appendChild(el("p", "status", "Fetching next task..."));
      break;
    case "done":
      root.appendChild(el("h1", "done-screen", "All tasks annotated. Thank you!"));
      break;
    case "error": {
      root.appendChild(el("p", "status error", state.message ?? "Request failed."));
      const retry = el("button", "retry", "Retry");
      retry.addEventListener("click", () => dispatch({ type: "retry" }));
      root.appendChild(retry);
      break;
    }
    case "confirming-neither": {
      root.appendChild(
        el("p", "confirm-text", "Mark neither answer acceptable? The instruction is dropped."),
      );
      const yes = el("button", "confirm", "Confirm [Enter]");
      yes.addEventListener("click", () => dispatch({ type: "confirm" }));
      const no = el("button", "cancel", "Cancel [Esc]");
      no.addEventListener("click", () => dispatch({ type: "cancel" }));
      root.appendChild(yes);
      root.appendChild(no);
      break;
    }
    case "annotating":
    case "submitting":
      if (state.task) {
        renderTask(root, state.task, state.phase === "submitting", (choice) =>
          dispatch({ type: "choice", choice }),
        );
      }
      break;
  }
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const cfg = await loadConfig();
  const app = new App(new ApiClient(cfg), (state) =>
    render(root, state, (e) => void app.dispatch(e)),
  );

  document.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") void app.dispatch({ type: "confirm" });
    else if (ev.key === "Escape") void app.dispatch({ type: "cancel" });
    else {
      const choice = choiceForKey(ev.key);
      if (choice) void app.dispatch({ type: "choice", choice });
    }
  });

  await app.start();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot();
}
