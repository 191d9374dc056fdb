/** Job polling shared by selection cards and the transfers view. */

import { JobView, PortalClient } from "../api.js";

export interface PollOptions {
  intervalMs?: number;
  maxPolls?: number;
  onUpdate?: (job: JobView) => void;
  sleep?: (ms: number) => Promise<void>;
}

const realSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export async function pollJob(client: PortalClient, jobId: string,
                              opts: PollOptions = {}): Promise<JobView> {
  const sleep = opts.sleep ?? realSleep;
  const interval = opts.intervalMs ?? 1500;
  const max = opts.maxPolls ?? 10_000;
  let job = await client.job(jobId);
  opts.onUpdate?.(job);
  for (let i = 0; i < max && job.state !== "READY" && job.state !== "FAILED"; i++) {
    await sleep(interval);
    job = await client.job(jobId);
    opts.onUpdate?.(job);
  }
  return job;
}

export function renderJobList(jobs: JobView[]): string {
  if (jobs.length === 0) return `<p class="empty">No jobs yet.</p>`;
  const rows = jobs.map((j) => `
    <tr class="job ${j.state.toLowerCase()}">
      <td>${j.job_id}</td><td>${j.kind}</td><td>${j.state}</td>
      <td>${j.state === "READY" ? `<a href="/download/${j.job_id}">download</a>`
          : j.error ?? ""}</td>
    </tr>`);
  return `<table class="jobs"><thead>
    <tr><th>job</th><th>kind</th><th>state</th><th></th></tr></thead>
    <tbody>${rows.join("")}</tbody></table>`;
}
