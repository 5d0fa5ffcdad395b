/**
 * Wiring: one store, one delegated event layer, a 5-second poll loop, and a
 * full re-render on every state change. State mutations happen only through
 * the documented API via the store; nothing is changed optimistically.
 */

import { ApiClient, type ReviewApi } from "./api.js";
import { render } from "./render.js";
import { Store, type StatusFilter } from "./state.js";
import type { Resolution } from "./types.js";

export const POLL_INTERVAL_MS = 5000;

export interface AppHandle {
  store: Store;
  stop(): void;
}

export function initApp(
  root: HTMLElement,
  api: ReviewApi,
  pollIntervalMs: number = POLL_INTERVAL_MS,
): AppHandle {
  const store = new Store(api);

  root.addEventListener("click", (event) => {
    const target = event.target;
    if (!(target instanceof Element)) {
      return;
    }

    const decisionButton = target.closest<HTMLButtonElement>("button[data-decision]");
    if (decisionButton) {
      const cardElement = decisionButton.closest<HTMLElement>("[data-pair-id]");
      if (!cardElement) {
        return;
      }
      const pairId = Number(cardElement.dataset["pairId"]);
      const decision = decisionButton.dataset["decision"] as Resolution;
      if (decision === "rename") {
        const input = cardElement.querySelector<HTMLInputElement>("input.rename-input");
        const newName = input?.value.trim() ?? "";
        if (newName === "") {
          store.setCardError(pairId, "enter a new name before renaming");
          return;
        }
        void store.submitDecision(pairId, "rename", newName);
      } else {
        void store.submitDecision(pairId, decision);
      }
      return;
    }

    const renameButton = target.closest<HTMLButtonElement>("button[data-rename-label]");
    if (renameButton) {
      const row = renameButton.closest<HTMLElement>("[data-label-id]");
      const input = row?.querySelector<HTMLInputElement>("input.rename-input");
      const newName = input?.value.trim() ?? "";
      if (!row || newName === "") {
        return;
      }
      void store.renameLabel(Number(row.dataset["labelId"]), newName);
      return;
    }

    if (target.closest("button[data-retry]")) {
      void store.refresh();
    }
  });

  root.addEventListener("input", (event) => {
    const input = event.target;
    if (!(input instanceof HTMLInputElement)) {
      return;
    }
    if (input.id === "search") {
      store.setSearch(input.value);
    } else if (input.dataset["draftKey"]) {
      store.setDraft(input.dataset["draftKey"], input.value);
    }
  });

  root.addEventListener("change", (event) => {
    const select = event.target;
    if (select instanceof HTMLSelectElement && select.id === "status-filter") {
      store.setFilter(select.value as StatusFilter);
    }
  });

  store.subscribe((state) => render(root, state));
  render(root, store.state);
  void store.refresh();
  const timer = setInterval(() => {
    void store.poll();
  }, pollIntervalMs);

  return {
    store,
    stop: () => clearInterval(timer),
  };
}

function boot(): void {
  const root = document.getElementById("app");
  if (!root) {
    return;
  }
  const token = window.localStorage.getItem("reviewToken");
  initApp(root, new ApiClient("", token));
}

if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  boot();
}
