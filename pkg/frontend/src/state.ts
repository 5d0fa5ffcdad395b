/**
 * View-model store for the review app.
 *
 * Decisions are pessimistic: a card's buttons lock while its request is in
 * flight and the card only disappears after the server confirms. Any 409
 * means the space moved under us, so the queue is reloaded and a stale
 * banner is shown; the displayed version only ever moves forward.
 */

import { ApiError, TransportError, type ReviewApi } from "./api.js";
import { quoted } from "./format.js";
import type { Label, LabelStatus, Pair, Resolution } from "./types.js";

export type StatusFilter = "all" | LabelStatus;

export type Banner =
  | { kind: "offline"; message: string }
  | { kind: "stale"; message: string }
  | null;

/** One pending pair plus its local decision state. */
export interface PairCard {
  pair: Pair;
  submitting: boolean;
  error: string | null;
}

/** Session-local record of a confirmed mutation. */
export interface FeedEntry {
  version: number;
  text: string;
}

export interface AppState {
  loaded: boolean;
  /** Last server version this client has seen. Strictly increasing. */
  version: number | null;
  serviceVersion: string | null;
  pairs: PairCard[];
  labels: Label[];
  statusFilter: StatusFilter;
  search: string;
  banner: Banner;
  feed: FeedEntry[];
  /** Unsubmitted rename input text, keyed "pair:<id>" / "label:<id>". */
  drafts: Record<string, string>;
  /** Inline rename errors per label id. */
  labelErrors: Record<number, string>;
}

export function initialState(): AppState {
  return {
    loaded: false,
    version: null,
    serviceVersion: null,
    pairs: [],
    labels: [],
    statusFilter: "all",
    search: "",
    banner: null,
    feed: [],
    drafts: {},
    labelErrors: {},
  };
}

/** Labels passing the current status filter and case-insensitive search. */
export function visibleLabels(state: AppState): Label[] {
  const query = state.search.trim().toLowerCase();
  return state.labels.filter(
    (label) =>
      (state.statusFilter === "all" || label.status === state.statusFilter) &&
      (query === "" || label.name.toLowerCase().includes(query)),
  );
}

export function describeDecision(pair: Pair, resolution: Resolution, newName?: string): string {
  const a = quoted(pair.label_a.name);
  const b = quoted(pair.label_b.name);
  switch (resolution) {
    case "keep_both":
      return `kept both ${a} and ${b}`;
    case "remove_a":
      return `removed ${a} (kept ${b})`;
    case "remove_b":
      return `removed ${b} (kept ${a})`;
    case "rename":
      return `renamed ${b} to ${quoted(newName ?? "")}`;
  }
}

export class Store {
  state: AppState = initialState();

  private listeners = new Set<(state: AppState) => void>();

  constructor(private readonly api: ReviewApi) {}

  subscribe(listener: (state: AppState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Version is monotone: a lagging response can never roll the display back. */
  private bumpVersion(version: number): void {
    if (this.state.version === null || version > this.state.version) {
      this.state.version = version;
    }
  }

  /** Reload both views. Clears the offline banner once the service answers. */
  async refresh(): Promise<void> {
    let labels;
    let pairs;
    try {
      [labels, pairs] = await Promise.all([this.api.labels(), this.api.pairs()]);
    } catch (err) {
      this.state.banner = { kind: "offline", message: offlineMessage(err) };
      this.emit();
      return;
    }
    const previous = new Map(this.state.pairs.map((card) => [card.pair.id, card]));
    this.state.pairs = [...pairs.pairs]
      .sort((x, y) => y.similarity - x.similarity || x.id - y.id)
      .map((pair) => ({
        pair,
        submitting: previous.get(pair.id)?.submitting ?? false,
        error: previous.get(pair.id)?.error ?? null,
      }));
    this.state.labels = labels.labels;
    this.bumpVersion(Math.max(labels.version, pairs.version));
    if (this.state.banner?.kind === "offline") {
      this.state.banner = null;
    }
    this.state.loaded = true;
    this.emit();
  }

  /**
   * Background poll. If the server version advanced past what we've seen,
   * someone else mutated the space: show the stale banner and reload.
   */
  async poll(): Promise<void> {
    let health;
    try {
      health = await this.api.health();
    } catch (err) {
      this.state.banner = { kind: "offline", message: offlineMessage(err) };
      this.emit();
      return;
    }
    this.state.serviceVersion = health.service_version;
    if (!this.state.loaded) {
      await this.refresh();
      return;
    }
    if (this.state.version !== null && health.version > this.state.version) {
      this.state.banner = {
        kind: "stale",
        message: `the label space moved to version ${health.version} elsewhere — queue reloaded`,
      };
      this.emit();
      await this.refresh();
      return;
    }
    if (this.state.banner?.kind === "offline") {
      this.state.banner = null;
    }
    this.emit();
  }

  /** Submit one pair decision. No-op while the card is already in flight. */
  async submitDecision(pairId: number, resolution: Resolution, newName?: string): Promise<void> {
    const card = this.state.pairs.find((c) => c.pair.id === pairId);
    if (!card || card.submitting || this.state.version === null) {
      return;
    }
    card.submitting = true;
    card.error = null;
    this.emit();
    try {
      const result = await this.api.resolvePair(pairId, resolution, this.state.version, newName);
      this.state.pairs = this.state.pairs.filter((c) => c.pair.id !== pairId);
      this.bumpVersion(result.version);
      this.state.feed.unshift({
        version: result.version,
        text: describeDecision(card.pair, resolution, newName),
      });
      delete this.state.drafts[`pair:${pairId}`];
      this.emit();
      await this.refresh();
    } catch (err) {
      card.submitting = false;
      if (err instanceof ApiError && err.status === 409) {
        this.state.banner = { kind: "stale", message: conflictMessage(err) };
        this.emit();
        await this.refresh();
      } else if (err instanceof ApiError) {
        card.error = err.message;
        this.emit();
      } else {
        this.state.banner = { kind: "offline", message: offlineMessage(err) };
        this.emit();
      }
    }
  }

  /** Rename a label from the space view (outside any pair). */
  async renameLabel(labelId: number, newName: string): Promise<void> {
    if (this.state.version === null) {
      return;
    }
    try {
      const result = await this.api.renameLabel(labelId, newName, this.state.version);
      this.bumpVersion(result.version);
      delete this.state.labelErrors[labelId];
      delete this.state.drafts[`label:${labelId}`];
      this.state.feed.unshift({
        version: result.version,
        text: `renamed a label to ${quoted(result.label.name)}`,
      });
      this.emit();
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.state.banner = { kind: "stale", message: conflictMessage(err) };
        this.emit();
        await this.refresh();
      } else if (err instanceof ApiError) {
        this.state.labelErrors[labelId] = err.message;
        this.emit();
      } else {
        this.state.banner = { kind: "offline", message: offlineMessage(err) };
        this.emit();
      }
    }
  }

  /** Inline client-side validation message on a pair card. */
  setCardError(pairId: number, message: string): void {
    const card = this.state.pairs.find((c) => c.pair.id === pairId);
    if (card) {
      card.error = message;
      this.emit();
    }
  }

  setFilter(filter: StatusFilter): void {
    this.state.statusFilter = filter;
    this.emit();
  }

  setSearch(text: string): void {
    this.state.search = text;
    this.emit();
  }

  /** Remember rename input text across re-renders. Deliberately no emit. */
  setDraft(key: string, value: string): void {
    this.state.drafts[key] = value;
  }
}

function conflictMessage(err: ApiError): string {
  const suffix = err.currentVersion !== undefined ? ` (now at version ${err.currentVersion})` : "";
  return `${err.message}${suffix} — queue reloaded`;
}

function offlineMessage(err: unknown): string {
  if (err instanceof TransportError) {
    return "cannot reach the review service — will keep retrying";
  }
  if (err instanceof ApiError) {
    return `the review service rejected the request: ${err.message}`;
  }
  return "unexpected error talking to the review service";
}
