/**
 * View state with last-write-wins guarding: every async refresh takes a
 * sequence number, and only the newest response may update the view, so a
 * slow stale search cannot overwrite a newer one.
 */

export interface ViewState {
  token: string | null; // held in memory only, never persisted
  path: string;
  terms: string;
  filters: Record<string, string>;
}

export function initialState(): ViewState {
  return { token: null, path: "", terms: "", filters: {} };
}

export class SequenceGuard {
  private issued = 0;
  private applied = 0;

  next(): number {
    return ++this.issued;
  }

  /** True when this sequence number is still the newest seen. */
  accept(seq: number): boolean {
    if (seq < this.applied) return false;
    this.applied = seq;
    return true;
  }
}

/** Facet click: compose the current search with one more filter. */
export function applyFacet(filters: Record<string, string>,
                           key: string, value: string): Record<string, string> {
  return { ...filters, [key]: value };
}

export function clearFacet(filters: Record<string, string>,
                           key: string): Record<string, string> {
  const next = { ...filters };
  delete next[key];
  return next;
}
