/**
 * Hash-routed single-page portal. All state lives in memory; every pane
 * renders exactly what the last portal response said.
 *
 * Routes: #search, #browse/<path>, #detail/<record id>, #transfers, #admin.
 */

import { HttpPortalClient, needsLogin, PortalClient, PortalError, RecordView } from "./api.js";
import { SequenceGuard, ViewState, applyFacet, initialState } from "./state.js";
import { decide, pendingOnly, renderMonitorGrid, renderQueue } from "./views/admin.js";
import { renderJobList } from "./views/jobs.js";
import { renderBrowse, renderResults, runSearch } from "./views/search.js";
import {
  JobCard,
  SelectionForm,
  coverageOf,
  renderCard,
  submitSelection,
} from "./views/selection.js";
import { refreshProgress, renderProgress } from "./views/transfers.js";

const POLL_MS = 1500;

const state: ViewState = initialState();
const guard = new SequenceGuard();
let client: PortalClient = new HttpPortalClient("", null);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node;
}

function requireLogin(err: unknown): boolean {
  if (needsLogin(err)) {
    location.hash = "#login";
    return true;
  }
  return false;
}

async function showSearch(): Promise<void> {
  const seq = guard.next();
  try {
    const rows = await runSearch(client, state.terms, state.filters);
    if (!guard.accept(seq)) return;
    el("main").innerHTML = renderResults(rows);
    for (const button of document.querySelectorAll<HTMLButtonElement>(".facet")) {
      button.onclick = () => {
        state.filters = applyFacet(state.filters, button.dataset.facet!,
                                   button.dataset.value!);
        void showSearch();
      };
    }
  } catch (err) {
    if (!requireLogin(err)) el("main").innerHTML = errorPane(err);
  }
}

async function showBrowse(path: string): Promise<void> {
  try {
    const children = await client.browse(path);
    el("main").innerHTML = renderBrowse(path, children);
  } catch (err) {
    if (!requireLogin(err)) el("main").innerHTML = errorPane(err);
  }
}

async function showDetail(recordId: string): Promise<void> {
  let record: RecordView;
  try {
    record = await client.record(recordId);
  } catch (err) {
    if (!requireLogin(err)) el("main").innerHTML = errorPane(err);
    return;
  }
  const variables = record.parameters.map((p) =>
    `<option value="${p.name}">${p.name} (${p.units})</option>`).join("");
  const coverage = coverageOf(record);
  el("main").innerHTML = `
    <article class="detail">
      <h2>${record.title}</h2>
      <p class="lfn">${record.logical_name} · v${record.version}
        ${record.recipe_ref ? "· virtual" : ""}</p>
      <p>${record.summary}</p>
      <p class="replicas">${record.replicas.length} replica(s)</p>
      <form id="selection-form">
        <select id="sel-variable">${variables}</select>
        ${rangeRow("time", coverage.time)}
        ${rangeRow("lat", coverage.lat)}
        ${rangeRow("lon", coverage.lon)}
        <button type="submit">request selection</button>
      </form>
      <div id="job-card"></div>
    </article>`;
  el("selection-form").onsubmit = (event) => {
    event.preventDefault();
    const form: SelectionForm = {
      dataset: record.logical_name,
      variable: (el("sel-variable") as HTMLSelectElement).value,
      time: readRange("time"),
      lat: readRange("lat"),
      lon: readRange("lon"),
      level: null,
    };
    void submitSelection(client, form, coverage, {
      intervalMs: POLL_MS,
      onUpdate: (card: JobCard) => {
        el("job-card").innerHTML = renderCard(card);
      },
    });
  };
}

function rangeRow(name: string, bounds: [number, number] | null): string {
  const lo = bounds ? bounds[0] : "";
  const hi = bounds ? bounds[1] : "";
  return `<label>${name}
    <input id="${name}-lo" type="number" value="${lo}" min="${lo}" max="${hi}">
    ..
    <input id="${name}-hi" type="number" value="${hi}" min="${lo}" max="${hi}">
  </label>`;
}

function readRange(name: string): { lo: number; hi: number } | null {
  const lo = (el(`${name}-lo`) as HTMLInputElement).value;
  const hi = (el(`${name}-hi`) as HTMLInputElement).value;
  if (lo === "" || hi === "") return null;
  return { lo: Number(lo), hi: Number(hi) };
}

async function showTransfers(): Promise<void> {
  try {
    const jobs = await client.jobs();
    el("main").innerHTML = `
      <section><h2>My jobs</h2>${renderJobList(jobs)}</section>
      <section><h2>Directory moves</h2>
        <input id="mv-request" placeholder="mv-… request id">
        <button id="mv-watch">watch</button>
        <div id="mv-progress"></div></section>`;
    el("mv-watch").onclick = () => {
      const requestId = (el("mv-request") as HTMLInputElement).value.trim();
      if (requestId) void watchMove(requestId);
    };
  } catch (err) {
    if (!requireLogin(err)) el("main").innerHTML = errorPane(err);
  }
}

async function watchMove(requestId: string): Promise<void> {
  try {
    const progress = await refreshProgress(client, requestId);
    el("mv-progress").innerHTML = renderProgress(progress);
    if (progress.state === "RUNNING" || progress.state === "PLANNED") {
      setTimeout(() => void watchMove(requestId), POLL_MS);
    }
  } catch (err) {
    if (!requireLogin(err)) el("mv-progress").innerHTML = errorPane(err);
  }
}

async function showAdmin(): Promise<void> {
  try {
    let rows = pendingOnly(await client.registrations());
    const tiles = await client.monitorOverview();
    el("main").innerHTML = `
      <section><h2>Pending registrations</h2><div id="queue">
        ${renderQueue(rows)}</div></section>
      <section><h2>Services</h2>${renderMonitorGrid(tiles)}</section>`;
    const rebind = () => {
      for (const button of document.querySelectorAll<HTMLButtonElement>(
          "#queue button")) {
        button.onclick = async () => {
          const decision = button.classList.contains("accept") ? "accept" : "reject";
          const out = await decide(client, rows, button.dataset.request!, decision);
          rows = out.rows;
          el("queue").innerHTML = renderQueue(rows) + (out.passphrase
            ? `<p class="passphrase">passphrase (shown once): <code>${out.passphrase}</code></p>`
            : "");
          rebind();
        };
      }
    };
    rebind();
  } catch (err) {
    if (!requireLogin(err)) el("main").innerHTML = errorPane(err);
  }
}

function showLogin(): void {
  el("main").innerHTML = `
    <form id="login-form" class="login">
      <h2>Sign in</h2>
      <input id="login-subject" placeholder="email">
      <input id="login-passphrase" type="password" placeholder="passphrase">
      <button type="submit">login</button>
      <div id="login-error"></div>
    </form>`;
  el("login-form").onsubmit = async (event) => {
    event.preventDefault();
    try {
      const token = await client.login(
        (el("login-subject") as HTMLInputElement).value,
        (el("login-passphrase") as HTMLInputElement).value);
      state.token = token;
      client = new HttpPortalClient("", token);
      location.hash = "#search";
    } catch (err) {
      el("login-error").textContent = String(
        err instanceof PortalError ? err.message : err);
    }
  };
}

function errorPane(err: unknown): string {
  const message = err instanceof PortalError
    ? `${err.status}: ${err.message}` : String(err);
  return `<div class="card error">${message}</div>`;
}

function route(): void {
  const hash = location.hash || "#search";
  const [view, arg] = hash.slice(1).split("/", 2);
  if (view === "browse") void showBrowse(decodeURIComponent(arg ?? ""));
  else if (view === "detail") void showDetail(arg ?? "");
  else if (view === "transfers") void showTransfers();
  else if (view === "admin") void showAdmin();
  else if (view === "login") showLogin();
  else void showSearch();
}

export function boot(): void {
  window.addEventListener("hashchange", route);
  el("search-form").onsubmit = (event) => {
    event.preventDefault();
    state.terms = (el("search-terms") as HTMLInputElement).value;
    state.filters = {};
    location.hash = "#search";
    void showSearch();
  };
  route();
}

if (typeof document !== "undefined" && document.getElementById("main")) {
  boot();
}
