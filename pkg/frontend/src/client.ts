/**
 * Typed client for /api/v1. Every portal mutation goes through here;
 * the UI never invents state the server did not report back.
 */

import type {
  AlertRecord, ArtifactInfo, ArtifactKind, ConfigurationSpec, DataQuery,
  ExperimentInfo, LoginResponse, LogLine, NetworkInfo, NodeInfo,
  PowerResponse, ProjectInfo, ProjectRole, QueueEntry, SensorPoint,
  UserInfo, ValidationVerdict,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export interface UploadSpec {
  kind: ArtifactKind;
  target: string;
  name: string;
  data: Uint8Array;
  firmwareBehavior?: unknown;
}

export interface ExperimentSpec {
  duration_minutes: number;
  configurations: ConfigurationSpec[];
}

function toBase64(data: Uint8Array): string {
  let binary = "";
  for (const byte of data) binary += String.fromCharCode(byte);
  return btoa(binary);
}

function buildQuery(params: Record<string, string | number | undefined>): string {
  const parts: string[] = [];
  for (const [key, value] of Object.entries(params)) {
    if (value === undefined || value === "") continue;
    parts.push(`${encodeURIComponent(key)}=${encodeURIComponent(String(value))}`);
  }
  return parts.length ? `?${parts.join("&")}` : "";
}

function dataParams(query: DataQuery): Record<string, string | number | undefined> {
  return {
    nodes: query.nodes?.join(","),
    metrics: query.metrics?.join(","),
    sensors: query.sensors?.join(","),
    from: query.from,
    to: query.to,
    downsample: query.downsample,
  };
}

export class PortalApi {
  token: string | null = null;
  private fetchFn: FetchFn;

  constructor(public baseUrl: string, fetchFn?: FetchFn) {
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown,
                           raw = false): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const resp = await this.fetchFn(`${this.baseUrl}/api/v1${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      let code = "error";
      let message = `HTTP ${resp.status}`;
      let details: Record<string, unknown> = {};
      try {
        const payload = await resp.json();
        code = payload.error ?? code;
        message = payload.message ?? message;
        details = payload.details ?? {};
      } catch {
        // non-JSON error body; keep the fallbacks
      }
      throw new ApiError(resp.status, code, message, details);
    }
    if (raw) return (await resp.text()) as unknown as T;
    return (await resp.json()) as T;
  }

  private get<T>(path: string): Promise<T> {
    return this.request<T>("GET", path);
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.request<T>("POST", path, body ?? {});
  }

  // ---------------------------------------------------------- sessions

  async login(email: string, password: string): Promise<LoginResponse> {
    const resp = await this.post<LoginResponse>("/login", { email, password });
    this.token = resp.token;
    return resp;
  }

  register(email: string, password: string): Promise<UserInfo> {
    return this.post("/users", { email, password });
  }

  me(): Promise<UserInfo> {
    return this.get("/me");
  }

  // ------------------------------------------------------------- fleet

  async networks(): Promise<NetworkInfo[]> {
    return (await this.get<{ networks: NetworkInfo[] }>("/networks")).networks;
  }

  async nodes(): Promise<NodeInfo[]> {
    return (await this.get<{ nodes: NodeInfo[] }>("/nodes")).nodes;
  }

  async freeNodes(fromMinute: number, durationMinutes: number): Promise<NodeInfo[]> {
    const qs = buildQuery({ free: 1, from: fromMinute, duration: durationMinutes });
    return (await this.get<{ nodes: NodeInfo[] }>(`/nodes${qs}`)).nodes;
  }

  async alerts(): Promise<AlertRecord[]> {
    return (await this.get<{ alerts: AlertRecord[] }>("/alerts")).alerts;
  }

  monitor(): Promise<Record<string, unknown>> {
    return this.get("/monitor");
  }

  // ---------------------------------------------------------- projects

  createProject(name: string, network: string, description = ""): Promise<ProjectInfo> {
    return this.post("/projects", { name, network, description });
  }

  async projects(): Promise<ProjectInfo[]> {
    return (await this.get<{ projects: ProjectInfo[] }>("/projects")).projects;
  }

  shareProject(pid: string, user: string, role: ProjectRole): Promise<ProjectInfo> {
    return this.post(`/projects/${pid}/share`, { user, role });
  }

  uploadArtifact(pid: string, spec: UploadSpec): Promise<ArtifactInfo> {
    const body: Record<string, unknown> = {
      kind: spec.kind,
      target: spec.target,
      name: spec.name,
      data_b64: toBase64(spec.data),
    };
    if (spec.firmwareBehavior !== undefined) {
      body.firmware_behavior = spec.firmwareBehavior;
    }
    return this.post(`/projects/${pid}/artifacts`, body);
  }

  async artifacts(pid: string): Promise<ArtifactInfo[]> {
    return (await this.get<{ artifacts: ArtifactInfo[] }>(
      `/projects/${pid}/artifacts`)).artifacts;
  }

  artifact(digest: string): Promise<ArtifactInfo> {
    return this.get(`/artifacts/${digest}`);
  }

  overrideArtifact(digest: string): Promise<ArtifactInfo> {
    return this.post(`/artifacts/${digest}/override`);
  }

  // ------------------------------------------------------- experiments

  createExperiment(pid: string, spec: ExperimentSpec): Promise<ExperimentInfo> {
    return this.post(`/projects/${pid}/experiments`, spec);
  }

  async experiments(project?: string): Promise<ExperimentInfo[]> {
    const qs = buildQuery({ project });
    return (await this.get<{ experiments: ExperimentInfo[] }>(
      `/experiments${qs}`)).experiments;
  }

  experiment(eid: string): Promise<ExperimentInfo> {
    return this.get(`/experiments/${eid}`);
  }

  schedule(eid: string, startMinute: number): Promise<ExperimentInfo> {
    return this.post(`/experiments/${eid}/schedule`, { start_minute: startMinute });
  }

  cancel(eid: string): Promise<ExperimentInfo> {
    return this.post(`/experiments/${eid}/cancel`);
  }

  abort(eid: string): Promise<ExperimentInfo> {
    return this.post(`/experiments/${eid}/abort`);
  }

  repeat(eid: string): Promise<ExperimentInfo> {
    return this.post(`/experiments/${eid}/repeat`);
  }

  async logs(eid: string, node?: string): Promise<LogLine[]> {
    const qs = buildQuery({ node });
    return (await this.get<{ lines: LogLine[] }>(`/experiments/${eid}/logs${qs}`)).lines;
  }

  power(eid: string, node?: string, radio?: string): Promise<PowerResponse> {
    const qs = buildQuery({ node, radio });
    return this.get(`/experiments/${eid}/power${qs}`);
  }

  validation(eid: string): Promise<{ experiment: string; verdict: ValidationVerdict; report: string }> {
    return this.get(`/experiments/${eid}/validation`);
  }

  bundleUrl(eid: string): string {
    return `${this.baseUrl}/api/v1/experiments/${eid}/bundle`;
  }

  // ------------------------------------------------------- gated queue

  async queue(): Promise<QueueEntry[]> {
    return (await this.get<{ entries: QueueEntry[] }>("/queue")).entries;
  }

  activate(eid: string): Promise<ExperimentInfo> {
    return this.post(`/queue/${eid}/activate`);
  }

  // -------------------------------------------------------------- data

  async queryData(query: DataQuery): Promise<SensorPoint[]> {
    const qs = buildQuery(dataParams(query));
    return (await this.get<{ points: SensorPoint[] }>(`/data/query${qs}`)).points;
  }

  exportCsv(query: DataQuery): Promise<string> {
    const qs = buildQuery(dataParams(query));
    return this.request<string>("GET", `/data/export.csv${qs}`, undefined, true);
  }

  streamUrl(): string {
    return `${this.baseUrl}/api/v1/stream`;
  }
}
