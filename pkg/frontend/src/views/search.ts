/** Search and browse: pure passthroughs from portal responses to rows. */

import { BrowseChild, PortalClient, RecordView } from "../api.js";

export interface ResultRow {
  id: string;
  name: string;
  title: string;
  kind: string; // investigation_kind facet value
  virtual: boolean;
}

export function toRows(records: RecordView[]): ResultRow[] {
  return records.map((r) => ({
    id: r.id,
    name: r.logical_name,
    title: r.title,
    kind: r.classification.investigation_kind,
    virtual: r.recipe_ref !== null,
  }));
}

export async function runSearch(client: PortalClient, terms: string,
                                filters: Record<string, string>): Promise<ResultRow[]> {
  return toRows(await client.search(terms, filters));
}

export function renderResults(rows: ResultRow[]): string {
  if (rows.length === 0) return `<p class="empty">No matching datasets.</p>`;
  const items = rows.map((r) => `
    <li class="result" data-id="${r.id}">
      <a href="#detail/${r.id}">${escapeHtml(r.title)}</a>
      <span class="lfn">${escapeHtml(r.name)}</span>
      ${r.virtual ? `<span class="badge">virtual</span>` : ""}
      <button class="facet" data-facet="investigation_kind" data-value="${r.kind}">
        ${r.kind}
      </button>
    </li>`);
  return `<ul class="results">${items.join("")}</ul>`;
}

export function renderBrowse(path: string, children: BrowseChild[]): string {
  const rows = children.map((c) => `
    <li><a href="#browse/${encodeURIComponent(c.path)}">${escapeHtml(c.name)}</a>
      <span class="count">${c.records}</span></li>`);
  return `<nav class="browse"><h3>${escapeHtml(path || "holdings")}</h3>
    <ul>${rows.join("")}</ul></nav>`;
}

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => ({
    "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;",
  }[ch] as string));
}
