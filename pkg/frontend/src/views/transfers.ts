/** Transfer dashboard: per-file mover progress, refreshed by polling. */

import { FileOutcome, MoveStatus, PortalClient } from "../api.js";

export interface Progress {
  requestId: string;
  state: string;
  total: number;
  done: number;
  failed: number;
  inFlight: number;
  percent: number; // done / total, 0..100
  attemptsMax: number;
  files: FileOutcome[];
}

const ACTIVE = new Set(["STAGING", "TRANSFERRING", "ARCHIVING"]);

export function progressOf(status: MoveStatus): Progress {
  const done = status.files.filter((f) => f.state === "DONE").length;
  const failed = status.files.filter((f) => f.state === "FAILED").length;
  const inFlight = status.files.filter((f) => ACTIVE.has(f.state)).length;
  const total = status.files.length;
  return {
    requestId: status.request_id,
    state: status.state,
    total,
    done,
    failed,
    inFlight,
    percent: total === 0 ? 100 : Math.floor((done / total) * 100),
    attemptsMax: Math.max(0, ...status.files.map((f) => f.attempts)),
    files: status.files,
  };
}

export async function refreshProgress(client: PortalClient,
                                      requestId: string): Promise<Progress> {
  return progressOf(await client.moveStatus(requestId));
}

export function renderProgress(p: Progress): string {
  const bar = `<div class="bar"><div class="fill" style="width:${p.percent}%"></div></div>`;
  const files = p.files.map((f) => `
    <tr class="${f.state.toLowerCase()}">
      <td>${f.path}</td><td>${f.state}</td><td>${f.attempts}</td>
      <td>${f.bytes}</td><td>${f.error ?? ""}</td>
    </tr>`);
  return `<section class="transfer" data-request="${p.requestId}">
    <header>${p.requestId} — ${p.state} (${p.done}/${p.total} done,
      ${p.failed} failed)</header>
    ${bar}
    <table><thead><tr><th>file</th><th>state</th><th>attempts</th>
      <th>bytes</th><th>error</th></tr></thead>
    <tbody>${files.join("")}</tbody></table></section>`;
}
