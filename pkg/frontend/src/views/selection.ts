/**
 * Aggregated data selection form: bounds are clamped to the record's
 * declared coverage client-side, validated again on input, and the server's
 * verdict is always displayed verbatim when it rejects anyway.
 */

import { PortalClient, PortalError, RecordView, SelectionBody } from "../api.js";
import { pollJob } from "./jobs.js";

export interface RangeInput {
  lo: number;
  hi: number;
}

export interface SelectionForm {
  dataset: string;
  variable: string;
  time: RangeInput | null;
  lat: RangeInput | null;
  lon: RangeInput | null;
  level: RangeInput | null;
}

export interface Coverage {
  time: [number, number] | null;
  lat: [number, number] | null;
  lon: [number, number] | null;
}

export function coverageOf(record: RecordView): Coverage {
  return {
    time: record.time_coverage,
    lat: record.space_coverage
      ? [record.space_coverage[0], record.space_coverage[1]] : null,
    lon: record.space_coverage
      ? [record.space_coverage[2], record.space_coverage[3]] : null,
  };
}

/** Clamp one range into the coverage interval (form bounds behavior). */
export function clampRange(input: RangeInput, bounds: [number, number] | null): RangeInput {
  if (!bounds) return input;
  const lo = Math.min(Math.max(input.lo, bounds[0]), bounds[1]);
  const hi = Math.min(Math.max(input.hi, bounds[0]), bounds[1]);
  return { lo, hi };
}

/** Client-side validation: inline errors before any request is sent. */
export function validateForm(form: SelectionForm, coverage: Coverage): string[] {
  const errors: string[] = [];
  if (!form.variable) errors.push("pick a variable");
  const checks: [string, RangeInput | null, [number, number] | null][] = [
    ["time", form.time, coverage.time],
    ["lat", form.lat, coverage.lat],
    ["lon", form.lon, coverage.lon],
  ];
  for (const [name, range, bounds] of checks) {
    if (!range) continue;
    if (range.lo > range.hi) errors.push(`${name}: empty range`);
    if (bounds && (range.hi < bounds[0] || range.lo > bounds[1])) {
      errors.push(`${name}: outside coverage ${bounds[0]}..${bounds[1]}`);
    }
  }
  return errors;
}

export function toBody(form: SelectionForm): SelectionBody {
  const pair = (r: RangeInput | null): [number, number] | null =>
    r ? [r.lo, r.hi] : null;
  return {
    dataset: form.dataset,
    variable: form.variable,
    time: pair(form.time),
    lat: pair(form.lat),
    lon: pair(form.lon),
    level: pair(form.level),
  };
}

export interface JobCard {
  jobId: string | null;
  state: string; // BLOCKED | QUEUED | RUNNING | READY | FAILED
  errors: string[];      // client-side validation errors
  serverReason: string | null; // server rejection, shown verbatim
  downloadUrl: string | null;
}

/**
 * Submit a selection and poll its job to a terminal state. Client-side
 * validation failures never reach the server; server rejections (submit
 * errors or failed jobs) surface on the card with the server's reason.
 */
export async function submitSelection(
  client: PortalClient, form: SelectionForm, coverage: Coverage,
  opts: { intervalMs?: number; onUpdate?: (card: JobCard) => void } = {},
): Promise<JobCard> {
  const card: JobCard = {
    jobId: null, state: "BLOCKED", errors: [], serverReason: null, downloadUrl: null,
  };
  card.errors = validateForm(form, coverage);
  if (card.errors.length > 0) {
    opts.onUpdate?.(card);
    return card;
  }
  let jobId: string;
  try {
    jobId = await client.submitSelection(toBody(form));
  } catch (err) {
    card.state = "FAILED";
    card.serverReason = err instanceof PortalError ? err.message : String(err);
    opts.onUpdate?.(card);
    return card;
  }
  card.jobId = jobId;
  card.state = "QUEUED";
  opts.onUpdate?.(card);

  const job = await pollJob(client, jobId, {
    intervalMs: opts.intervalMs ?? 1500,
    onUpdate: (j) => {
      card.state = j.state;
      opts.onUpdate?.(card);
    },
  });
  card.state = job.state;
  if (job.state === "READY") {
    card.downloadUrl = client.downloadUrl(jobId);
  } else {
    card.serverReason = job.error;
  }
  opts.onUpdate?.(card);
  return card;
}

export function renderCard(card: JobCard): string {
  if (card.errors.length > 0) {
    return `<div class="card error">${card.errors.join("; ")}</div>`;
  }
  if (card.state === "READY" && card.downloadUrl) {
    return `<div class="card ready"><a href="${card.downloadUrl}">download result</a></div>`;
  }
  if (card.state === "FAILED") {
    return `<div class="card error">server: ${card.serverReason ?? "failed"}</div>`;
  }
  return `<div class="card pending">${card.state.toLowerCase()}…</div>`;
}
