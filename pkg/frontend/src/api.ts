/**
 * Portal client: one method per HTTP endpoint the UI consumes.
 * Views never fabricate data; every displayed value comes from one of
 * these calls. Tests substitute a MockPortal implementing this interface.
 */

export interface RecordView {
  id: string;
  logical_name: string;
  title: string;
  summary: string;
  classification: { investigation_kind: string; dataset_kind: string };
  parameters: { name: string; units: string; standard_name: string }[];
  time_coverage: [number, number] | null;
  space_coverage: [number, number, number, number] | null;
  recipe_ref: string | null;
  version: number;
  replicas: string[];
}

export interface BrowseChild {
  name: string;
  path: string;
  records: number;
}

export interface JobView {
  job_id: string;
  kind: string;
  state: "QUEUED" | "RUNNING" | "READY" | "FAILED";
  result: Record<string, unknown> | null;
  error: string | null;
  created_ms: number;
}

export interface FileOutcome {
  path: string;
  state: string;
  bytes: number;
  attempts: number;
  error: string | null;
}

export interface MoveStatus {
  request_id: string;
  src: string;
  dst: string;
  state: string;
  files: FileOutcome[];
}

export interface ServiceTile {
  service_id: string;
  state: "UP" | "DOWN" | "UNKNOWN";
  last_heartbeat: number | null;
}

export interface RegistrationRow {
  request_id: string;
  name: string;
  email: string;
  institution: string;
  requested_groups: string[];
  status: string;
}

export interface SelectionBody {
  dataset: string;
  variable: string;
  time: [number, number] | null;
  lat: [number, number] | null;
  lon: [number, number] | null;
  level: [number, number] | null;
}

export class PortalError extends Error {
  constructor(public status: number, message: string, public code?: string) {
    super(message);
  }
}

/** Expired or missing credentials send the user back to the login pane. */
export function needsLogin(err: unknown): boolean {
  return err instanceof PortalError && (err.status === 401 || err.status === 403);
}

export interface PortalClient {
  login(subject: string, passphrase: string): Promise<string>;
  register(name: string, email: string, institution: string, groups: string[]): Promise<string>;
  search(q: string, filters: Record<string, string>): Promise<RecordView[]>;
  browse(path: string): Promise<BrowseChild[]>;
  record(id: string): Promise<RecordView>;
  submitSelection(body: SelectionBody): Promise<string>;
  job(jobId: string): Promise<JobView>;
  jobs(): Promise<JobView[]>;
  downloadUrl(jobId: string): string;
  moveStatus(requestId: string): Promise<MoveStatus>;
  monitorOverview(): Promise<ServiceTile[]>;
  registrations(): Promise<RegistrationRow[]>;
  review(requestId: string, decision: "accept" | "reject", groups: string[] | null, kind: string):
    Promise<{ status: string; passphrase: string | null }>;
}

export class HttpPortalClient implements PortalClient {
  constructor(private base: string, private token: string | null) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(this.base + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let message = `HTTP ${resp.status}`;
      let code: string | undefined;
      try {
        const err = (await resp.json()).error;
        message = err.message ?? message;
        code = err.code;
      } catch {
        /* non-JSON error body */
      }
      throw new PortalError(resp.status, message, code);
    }
    return resp.json() as Promise<T>;
  }

  async login(subject: string, passphrase: string): Promise<string> {
    const out = await this.call<{ token: string }>("POST", "/login", { subject, passphrase });
    this.token = out.token;
    return out.token;
  }

  async register(name: string, email: string, institution: string, groups: string[]) {
    const out = await this.call<{ request_id: string }>("POST", "/register", {
      name, email, institution, requested_groups: groups,
    });
    return out.request_id;
  }

  async search(q: string, filters: Record<string, string>): Promise<RecordView[]> {
    const params = new URLSearchParams({ q, detail: "true" });
    for (const [k, v] of Object.entries(filters)) params.set(`filter.${k}`, v);
    const out = await this.call<{ results: RecordView[] }>(
      "GET", `/catalog/search?${params}`);
    return out.results;
  }

  async browse(path: string): Promise<BrowseChild[]> {
    const out = await this.call<{ children: BrowseChild[] }>(
      "GET", `/catalog/browse?path=${encodeURIComponent(path)}`);
    return out.children;
  }

  record(id: string): Promise<RecordView> {
    return this.call("GET", `/catalog/records/${id}`);
  }

  async submitSelection(body: SelectionBody): Promise<string> {
    const out = await this.call<{ job_id: string }>("POST", "/selection", body);
    return out.job_id;
  }

  job(jobId: string): Promise<JobView> {
    return this.call("GET", `/jobs/${jobId}`);
  }

  async jobs(): Promise<JobView[]> {
    const out = await this.call<{ jobs: JobView[] }>("GET", "/jobs");
    return out.jobs;
  }

  downloadUrl(jobId: string): string {
    return `${this.base}/download/${jobId}`;
  }

  moveStatus(requestId: string): Promise<MoveStatus> {
    return this.call("GET", `/mv/${requestId}`);
  }

  async monitorOverview(): Promise<ServiceTile[]> {
    const out = await this.call<{ services: ServiceTile[] }>("GET", "/monitor/status");
    return out.services;
  }

  registrations(): Promise<RegistrationRow[]> {
    return this.call("GET", "/admin/registrations");
  }

  review(requestId: string, decision: "accept" | "reject",
         groups: string[] | null, kind: string) {
    return this.call<{ status: string; passphrase: string | null }>(
      "POST", "/admin/review",
      { request_id: requestId, decision, groups, kind });
  }
}
