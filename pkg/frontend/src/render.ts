/** DOM rendering. Everything is rebuilt from the view state on each change;
 * rule rows show the server's rule text verbatim so nothing is lossy. */

import { RuleRow } from "./api.js";
import { dotToSvg } from "./dot.js";
import { ruleDiff, SessionStore, ViewState } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderBanners(state: ViewState): HTMLElement {
  const container = el("div", "banners");
  for (const banner of state.banners) {
    container.appendChild(el("div", `banner banner-${banner.severity}`, banner.text));
  }
  return container;
}

function renderTranscript(state: ViewState): HTMLElement {
  const container = el("section", "transcript");
  container.appendChild(el("h2", undefined, "Conversation"));
  for (const entry of state.transcript) {
    const row = el("div", `message speaker-${entry.speaker}`);
    row.appendChild(el("span", "badge", entry.speaker));
    row.appendChild(el("pre", "content", entry.content));
    container.appendChild(row);
  }
  if (state.questions.length) {
    const ask = el("div", "questions");
    ask.appendChild(el("h3", undefined, "The assistant asks"));
    const list = el("ul");
    for (const question of state.questions) {
      list.appendChild(el("li", "question", question));
    }
    ask.appendChild(list);
    container.appendChild(ask);
  }
  return container;
}

function renderRuleRow(store: SessionStore, state: ViewState, row: RuleRow): HTMLElement {
  const item = el("tr", "rule-row");
  item.dataset.index = String(row.index);

  const toggleCell = el("td");
  const toggle = el("input") as HTMLInputElement;
  toggle.type = "checkbox";
  toggle.checked = row.enabled;
  toggle.addEventListener("change", () => {
    void store.toggleRule(row, toggle.checked);
  });
  toggleCell.appendChild(toggle);
  item.appendChild(toggleCell);

  item.appendChild(el("td", "rule-text", row.rule));
  item.appendChild(el("td", "rule-round", `round ${row.source_round}`));
  item.appendChild(
    el(
      "td",
      "rule-confidence",
      row.confidence === null ? "-" : row.confidence.toFixed(3),
    ),
  );

  const status = el("td", "rule-status");
  const error = state.ruleErrors.get(row.index);
  if (error) {
    const text = error.suggestion
      ? `${error.message} - did you mean "${error.suggestion}"?`
      : error.message;
    status.appendChild(el("span", "inline-error", text));
  } else {
    status.appendChild(el("span", "ok", "valid"));
  }
  item.appendChild(status);
  return item;
}

function renderRules(store: SessionStore, state: ViewState): HTMLElement {
  const container = el("section", "rules");
  container.appendChild(el("h2", undefined, "Rules"));
  const table = el("table", "rule-table");
  const head = el("tr");
  for (const title of ["on", "rule", "source", "confidence", "status"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const row of state.session?.rules ?? []) {
    table.appendChild(renderRuleRow(store, state, row));
  }
  container.appendChild(table);
  return container;
}

function renderModel(state: ViewState, iteration: number, className: string): HTMLElement {
  const panel = el("div", className);
  const model = state.models[iteration];
  if (!model) {
    panel.appendChild(el("p", "placeholder", "no model yet"));
    return panel;
  }
  panel.appendChild(el("h3", undefined, `iteration ${model.iteration} (sup ${model.sup})`));
  const graph = el("div", "graph");
  graph.innerHTML = dotToSvg(model.dot);
  panel.appendChild(graph);
  panel.appendChild(el("pre", "tree-text", model.tree_text));
  return panel;
}

function renderModelPanel(store: SessionStore, state: ViewState): HTMLElement {
  const container = el("section", "models");
  container.appendChild(el("h2", undefined, "Model"));

  const selector = el("div", "iteration-selector");
  for (let i = 0; i < state.models.length; i++) {
    const button = el("button", i === state.selectedIteration ? "active" : "");
    button.textContent = `iteration ${i}`;
    button.addEventListener("click", () => store.selectIteration(i));
    selector.appendChild(button);
  }
  container.appendChild(selector);

  if (state.selectedIteration >= 0) {
    container.appendChild(renderModel(state, state.selectedIteration, "model-panel"));
  } else {
    container.appendChild(el("p", "placeholder", "no model yet"));
  }

  if (state.models.length > 1) {
    const compare = el("div", "compare-controls");
    const label = el("label", undefined, "compare with ");
    const select = el("select") as HTMLSelectElement;
    const none = el("option", undefined, "none") as HTMLOptionElement;
    none.value = "";
    select.appendChild(none);
    for (let i = 0; i < state.models.length; i++) {
      if (i === state.selectedIteration) continue;
      const option = el("option", undefined, `iteration ${i}`) as HTMLOptionElement;
      option.value = String(i);
      select.appendChild(option);
    }
    if (state.compareIteration !== null) select.value = String(state.compareIteration);
    select.addEventListener("change", () => {
      store.compareWith(select.value === "" ? null : Number(select.value));
    });
    label.appendChild(select);
    compare.appendChild(label);
    container.appendChild(compare);

    if (state.compareIteration !== null) {
      const sideBySide = el("div", "compare-panels");
      sideBySide.appendChild(renderModel(state, state.compareIteration, "model-panel compare-left"));
      sideBySide.appendChild(renderModel(state, state.selectedIteration, "model-panel compare-right"));
      container.appendChild(sideBySide);

      const diff = ruleDiff(
        state.models[state.compareIteration],
        state.models[state.selectedIteration],
      );
      const diffList = el("div", "rule-diff");
      diffList.appendChild(el("h4", undefined, "rule-set difference"));
      for (const rule of diff.added) {
        diffList.appendChild(el("div", "diff-added", `+ ${rule}`));
      }
      for (const rule of diff.removed) {
        diffList.appendChild(el("div", "diff-removed", `- ${rule}`));
      }
      container.appendChild(diffList);
    }
  }
  return container;
}

function renderComposer(store: SessionStore, state: ViewState): HTMLElement {
  const container = el("section", "composer");
  const textarea = el("textarea") as HTMLTextAreaElement;
  textarea.placeholder = state.questions.length
    ? "answer the assistant's questions"
    : "describe the process, or give feedback on the model";
  textarea.className = "composer-text";
  container.appendChild(textarea);

  const buttons = el("div", "composer-buttons");
  const addButton = (label: string, cls: string, handler: () => Promise<void>) => {
    const button = el("button", cls, label);
    button.disabled = state.busy;
    button.addEventListener("click", () => void handler());
    buttons.appendChild(button);
  };
  addButton("send context", "send-context", () => store.sendContext(textarea.value));
  addButton("send answers", "send-answers", () => store.sendAnswers(textarea.value));
  addButton("send feedback", "send-feedback", () => store.sendFeedback(textarea.value));
  container.appendChild(buttons);

  const supRow = el("div", "sup-control");
  const supInput = el("input") as HTMLInputElement;
  supInput.type = "number";
  supInput.step = "0.05";
  supInput.min = "0";
  supInput.max = "1";
  supInput.value = String(state.session?.sup ?? 0.2);
  supInput.className = "sup-input";
  supRow.appendChild(el("span", undefined, "sup "));
  supRow.appendChild(supInput);
  const discoverButton = el("button", "discover", "discover");
  discoverButton.disabled = state.busy;
  discoverButton.addEventListener("click", () => {
    void store.discover(Number(supInput.value));
  });
  supRow.appendChild(discoverButton);
  container.appendChild(supRow);
  return container;
}

/** Render the full session view into the container. */
export function render(container: HTMLElement, store: SessionStore, state: ViewState): void {
  container.textContent = "";
  const header = el("header");
  header.appendChild(el("h1", undefined, "Process model refinement"));
  if (state.session) {
    header.appendChild(
      el(
        "p",
        "session-meta",
        `session ${state.session.id} · state ${state.session.state} · ` +
          `round ${state.session.rounds}`,
      ),
    );
  }
  container.appendChild(header);
  container.appendChild(renderBanners(state));
  container.appendChild(renderTranscript(state));
  container.appendChild(renderComposer(store, state));
  container.appendChild(renderRules(store, state));
  container.appendChild(renderModelPanel(store, state));
}
