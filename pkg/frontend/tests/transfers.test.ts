import { describe, expect, it } from "vitest";

import { FileOutcome, MoveStatus } from "../src/api.js";
import { pollJob, renderJobList } from "../src/views/jobs.js";
import { progressOf, refreshProgress, renderProgress } from "../src/views/transfers.js";
import { MockPortal } from "./mock_portal.js";

function outcome(path: string, state: string, attempts = 1): FileOutcome {
  return { path, state, bytes: 65536, attempts, error: null };
}

function status(files: FileOutcome[], state = "RUNNING"): MoveStatus {
  return { request_id: "mv-abc", src: "site://a/archive/r",
           dst: "site://b/archive/r", state, files };
}

describe("transfer progress", () => {
  it("progress reflects the mocked DONE counts exactly", () => {
    const p = progressOf(status([
      outcome("f0", "DONE"), outcome("f1", "DONE"), outcome("f2", "DONE"),
      outcome("f3", "TRANSFERRING", 2), outcome("f4", "PENDING", 0),
    ]));
    expect(p.done).toBe(3);
    expect(p.total).toBe(5);
    expect(p.percent).toBe(60);
    expect(p.inFlight).toBe(1);
    expect(p.attemptsMax).toBe(2);

    const html = renderProgress(p);
    expect(html).toContain("3/5 done");
    expect(html).toContain('style="width:60%"');
  });

  it("successive polls track the mover's reported counts", async () => {
    const portal = new MockPortal();
    portal.moveSequence = [
      status([outcome("f0", "DONE"), outcome("f1", "STAGING")]),
      status([outcome("f0", "DONE"), outcome("f1", "DONE")], "COMPLETED"),
    ];
    const first = await refreshProgress(portal, "mv-abc");
    const second = await refreshProgress(portal, "mv-abc");
    expect(first.done).toBe(1);
    expect(second.done).toBe(2);
    expect(second.state).toBe("COMPLETED");
    expect(portal.callsTo("moveStatus")).toHaveLength(2);
  });

  it("failed files appear with their attempts and error text", () => {
    const p = progressOf(status([
      { path: "f9", state: "FAILED", bytes: 0, attempts: 9,
        error: "retries exhausted" },
    ], "PARTIAL_FAILED"));
    const html = renderProgress(p);
    expect(html).toContain("FAILED");
    expect(html).toContain("retries exhausted");
    expect(html).toContain("<td>9</td>");
  });

  it("job polling stops at a terminal state", async () => {
    const portal = new MockPortal();
    portal.jobSequence = [
      { job_id: "j", kind: "fetch", state: "QUEUED", result: null,
        error: null, created_ms: 0 },
      { job_id: "j", kind: "fetch", state: "RUNNING", result: null,
        error: null, created_ms: 0 },
      { job_id: "j", kind: "fetch", state: "READY", result: {},
        error: null, created_ms: 0 },
      { job_id: "j", kind: "fetch", state: "READY", result: {},
        error: null, created_ms: 0 },
    ];
    const job = await pollJob(portal, "j", { intervalMs: 0 });
    expect(job.state).toBe("READY");
    expect(portal.callsTo("job")).toHaveLength(3); // no polls past READY
  });

  it("job list renders one row per job with download links when READY", () => {
    const html = renderJobList([
      { job_id: "job-1", kind: "selection", state: "READY", result: {},
        error: null, created_ms: 0 },
      { job_id: "job-2", kind: "fetch", state: "FAILED", result: null,
        error: "denied", created_ms: 1 },
    ]);
    expect(html).toContain("/download/job-1");
    expect(html).toContain("denied");
  });
});
