/**
 * DOM rendering. Pure functions from state to elements; all user events are
 * handled by delegation in app.ts via data- attributes. Text is inserted
 * with textContent only, so evidence snippets and label names appear
 * verbatim no matter what characters they contain.
 */

import { formatSimilarity, quoted } from "./format.js";
import { visibleLabels, type AppState, type PairCard } from "./state.js";
import type { Label } from "./types.js";

type Child = Node | string | null;

function el(
  tag: string,
  attrs: Record<string, string | boolean> = {},
  ...children: Child[]
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "boolean") {
      if (value) {
        node.setAttribute(key, "");
      }
    } else {
      node.setAttribute(key, value);
    }
  }
  for (const child of children) {
    if (child === null) {
      continue;
    }
    node.append(child);
  }
  return node;
}

/** Re-render the whole app, preserving focus in whichever input had it. */
export function render(root: HTMLElement, state: AppState): void {
  const active = document.activeElement;
  const activeId = active instanceof HTMLElement ? active.id : "";
  const caret = active instanceof HTMLInputElement ? active.selectionStart : null;

  root.replaceChildren(buildHeader(state), buildBanner(state), buildMain(state));

  if (activeId) {
    const restored = document.getElementById(activeId);
    if (restored instanceof HTMLElement) {
      restored.focus();
      if (restored instanceof HTMLInputElement && caret !== null) {
        restored.setSelectionRange(caret, caret);
      }
    }
  }
}

function buildHeader(state: AppState): HTMLElement {
  const pending = state.pairs.length;
  return el(
    "header",
    { class: "topbar" },
    el("h1", {}, "label review"),
    el(
      "div",
      { class: "meta" },
      el("span", { id: "version", class: "version" },
        state.version === null ? "connecting…" : `space v${state.version}`),
      el("span", { class: "pending-count" },
        state.loaded ? `${pending} pending pair${pending === 1 ? "" : "s"}` : ""),
      state.serviceVersion === null
        ? null
        : el("span", { class: "service-version" }, `service ${state.serviceVersion}`),
    ),
  );
}

function buildBanner(state: AppState): HTMLElement {
  if (state.banner === null) {
    return el("div", { class: "banner-slot" });
  }
  const retry =
    state.banner.kind === "offline"
      ? el("button", { "data-retry": "1", class: "retry" }, "retry now")
      : null;
  return el(
    "div",
    { class: "banner-slot" },
    el(
      "div",
      { class: `banner banner-${state.banner.kind}`, role: "alert" },
      el("span", {}, state.banner.message),
      retry,
    ),
  );
}

function buildMain(state: AppState): HTMLElement {
  return el(
    "main",
    { class: "columns" },
    buildQueue(state),
    buildSpace(state),
  );
}

// -- review queue -----------------------------------------------------------

function buildQueue(state: AppState): HTMLElement {
  const section = el("section", { class: "queue" }, el("h2", {}, "borderline pairs"));
  if (!state.loaded) {
    section.append(el("p", { class: "empty" }, "loading…"));
    return section;
  }
  if (state.pairs.length === 0) {
    section.append(el("p", { class: "empty" }, "no pending pairs"));
    return section;
  }
  for (const card of state.pairs) {
    section.append(buildPairCard(card, state));
  }
  return section;
}

function buildPairCard(card: PairCard, state: AppState): HTMLElement {
  const { pair } = card;
  const a = pair.label_a;
  const b = pair.label_b;
  const draft = state.drafts[`pair:${pair.id}`] ?? "";

  const judge =
    pair.judge_opinion === null
      ? null
      : el(
          "p",
          { class: "judge" },
          el("span", { class: "advisory-tag" }, "judge (advisory)"),
          ` ${pair.judge_opinion}`,
        );

  const error = card.error === null ? null : el("p", { class: "card-error" }, card.error);

  const button = (decision: string, text: string): HTMLElement =>
    el(
      "button",
      { "data-decision": decision, disabled: card.submitting },
      text,
    );

  return el(
    "article",
    { class: "pair-card", "data-pair-id": String(pair.id) },
    el(
      "header",
      { class: "pair-head" },
      el("span", { class: "pair-sim" }, formatSimilarity(pair.similarity)),
      el("span", { class: "pair-names" }, `${quoted(a.name)} vs ${quoted(b.name)}`),
    ),
    judge,
    el(
      "div",
      { class: "evidence" },
      buildEvidence("a", a),
      buildEvidence("b", b),
    ),
    error,
    el(
      "div",
      { class: "decisions" },
      button("keep_both", "keep both"),
      button("remove_a", `remove ${quoted(a.name)}`),
      button("remove_b", `remove ${quoted(b.name)}`),
      el("span", { class: "rename-group" },
        el("input", {
          class: "rename-input",
          id: `rename-pair-${pair.id}`,
          "data-draft-key": `pair:${pair.id}`,
          placeholder: `rename ${quoted(b.name)} to…`,
          value: draft,
          disabled: card.submitting,
        }),
        button("rename", "rename"),
      ),
    ),
  );
}

function buildEvidence(side: "a" | "b", label: Label): HTMLElement {
  const list = el("ul", {});
  for (const snippet of label.evidence) {
    list.append(el("li", {}, snippet));
  }
  if (label.evidence.length === 0) {
    list.append(el("li", { class: "empty" }, "no recorded exemplars"));
  }
  return el(
    "div",
    { class: `evidence-${side}` },
    el("h4", {}, label.name),
    list,
  );
}

// -- label space ------------------------------------------------------------

const FILTERS = ["all", "active", "frozen", "removed"] as const;

function buildSpace(state: AppState): HTMLElement {
  const filter = el("select", { id: "status-filter" });
  for (const value of FILTERS) {
    const option = el("option", { value }, value) as HTMLOptionElement;
    option.selected = value === state.statusFilter;
    filter.append(option);
  }
  const search = el("input", {
    id: "search",
    type: "search",
    placeholder: "search labels…",
    value: state.search,
  });

  const table = el("table", { class: "labels" });
  const body = el("tbody", {});
  for (const label of visibleLabels(state)) {
    body.append(buildLabelRow(label, state));
  }
  table.append(
    el(
      "thead",
      {},
      el(
        "tr",
        {},
        el("th", {}, "id"),
        el("th", {}, "name"),
        el("th", {}, "status"),
        el("th", {}, "provenance"),
        el("th", {}, "since"),
        el("th", {}, ""),
      ),
    ),
    body,
  );

  const feed = el("ul", { class: "feed" });
  for (const entry of state.feed) {
    feed.append(el("li", {}, `v${entry.version} — ${entry.text}`));
  }

  return el(
    "section",
    { class: "space" },
    el("h2", {}, "label space"),
    el("div", { class: "controls" }, filter, search),
    table,
    state.feed.length === 0 ? null : el("h3", {}, "this session"),
    state.feed.length === 0 ? null : feed,
  );
}

function buildLabelRow(label: Label, state: AppState): HTMLElement {
  const draft = state.drafts[`label:${label.id}`] ?? "";
  const inlineError = state.labelErrors[label.id];
  const renameCell =
    label.status === "removed"
      ? el("td", {})
      : el(
          "td",
          { class: "label-rename" },
          el("input", {
            class: "rename-input",
            id: `rename-label-${label.id}`,
            "data-draft-key": `label:${label.id}`,
            placeholder: "new name…",
            value: draft,
          }),
          el("button", { "data-rename-label": "1" }, "rename"),
          inlineError === undefined
            ? null
            : el("span", { class: "card-error" }, inlineError),
        );
  return el(
    "tr",
    { "data-label-id": String(label.id), class: `status-${label.status}` },
    el("td", {}, String(label.id)),
    el("td", { class: "label-name" }, label.name),
    el("td", {}, el("span", { class: `badge badge-${label.status}` }, label.status)),
    el("td", { class: "provenance" }, label.provenance),
    el("td", {}, `v${label.created_at_version}`),
    renameCell,
  );
}
