/** Admin dashboard: registration review queue and the monitor status grid. */

import { PortalClient, RegistrationRow, ServiceTile } from "../api.js";
import { escapeHtml } from "./search.js";

export function pendingOnly(rows: RegistrationRow[]): RegistrationRow[] {
  return rows.filter((r) => r.status === "PENDING");
}

/** Accept or reject; returns the remaining pending rows after the decision. */
export async function decide(client: PortalClient, rows: RegistrationRow[],
                             requestId: string, decision: "accept" | "reject",
                             kind = "moderate"):
    Promise<{ rows: RegistrationRow[]; passphrase: string | null }> {
  const row = rows.find((r) => r.request_id === requestId);
  const out = await client.review(requestId, decision,
                                  row ? row.requested_groups : null, kind);
  return {
    rows: rows.filter((r) => r.request_id !== requestId),
    passphrase: out.passphrase,
  };
}

export function renderQueue(rows: RegistrationRow[]): string {
  if (rows.length === 0) return `<p class="empty">No pending registrations.</p>`;
  const body = rows.map((r) => `
    <tr data-request="${r.request_id}">
      <td>${escapeHtml(r.name)}</td><td>${escapeHtml(r.email)}</td>
      <td>${escapeHtml(r.institution)}</td>
      <td>${r.requested_groups.join(", ")}</td>
      <td><button class="accept" data-request="${r.request_id}">accept</button>
          <button class="reject" data-request="${r.request_id}">reject</button></td>
    </tr>`);
  return `<table class="queue"><thead><tr><th>name</th><th>email</th>
    <th>institution</th><th>groups</th><th></th></tr></thead>
    <tbody>${body.join("")}</tbody></table>`;
}

export function renderMonitorGrid(tiles: ServiceTile[]): string {
  const cells = tiles.map((t) => `
    <div class="tile ${t.state.toLowerCase()}" data-service="${t.service_id}">
      <span class="name">${t.service_id}</span>
      <span class="state">${t.state}</span>
    </div>`);
  return `<div class="monitor-grid">${cells.join("")}</div>`;
}
