// Wire shapes of the /api/v1 JSON interface. The backend is the source
// of truth; nothing here adds client-side authority.

export type ExperimentState =
  | "Draft" | "Scheduled" | "QueuedGated" | "Validating" | "Deploying"
  | "Running" | "Collecting" | "CleaningUp" | "Completed" | "Failed"
  | "Cancelled";

export type AgentState = "Offline" | "Idle" | "Reserved" | "Busy" | "Resetting";
export type ScanVerdict = "Pending" | "Clean" | "Vulnerable";
export type ValidationVerdict = "Pending" | "Passed" | "Failed";
export type ProjectRole = "Developer" | "Viewer";
export type ArtifactKind = "Firmware" | "Workload";

export interface UserInfo {
  id: string;
  email: string;
  roles: string[];
  verified: boolean;
}

export interface LoginResponse {
  token: string;
  user: UserInfo;
}

export interface NetworkInfo {
  name: string;
  description: string;
  gated: boolean;
  default_roles: string[];
  nodes: string[];
}

export interface NodeInfo {
  id: string;
  class: "EdgeFibre" | "EdgeFibreLoRa" | "WifiSensor";
  position: { x: number; y: number };
  network: string;
  state: AgentState;
  last_heartbeat: number | null;
  radios: string[];
  backbone: "fibre" | "wifi";
}

export interface ProjectInfo {
  id: string;
  name: string;
  description: string;
  network: string;
  owner: string;
  members: Record<string, ProjectRole>;
}

export interface ArtifactInfo {
  digest: string;
  kind: ArtifactKind;
  target: string;
  size: number;
  project: string;
  uploaded_by: string;
  name: string;
  scan: ScanVerdict;
  scan_detail: string;
  override: boolean;
  override_by: string | null;
}

export interface ConfigurationSpec {
  name: string;
  nodes: string[];
  firmware: Record<string, string>;
  workload?: string | null;
  parameters?: Record<string, string>;
}

export interface ExperimentInfo {
  id: string;
  project: string;
  configurations: ConfigurationSpec[];
  state: ExperimentState;
  submitted_at: number;
  start_minute: number | null;
  duration_minutes: number;
  created_by: string;
  failure_reason: string;
  validation: ValidationVerdict;
  validation_report: string;
  results_ref: string | null;
}

export interface QueueEntry {
  experiment: string;
  activated: boolean;
  verdict: ValidationVerdict;
}

export interface SensorPoint {
  node: string;
  metric: string;
  sensor: string;
  ts: number;
  value: number;
  unit: string;
  quality: "ok" | "stale" | "fault";
}

export interface LogLine {
  ts: number;
  node: string;
  stream: string;
  line: string;
}

export interface PowerResponse {
  t0: number | null;
  rate_hz: number | null;
  samples: number[];
  traces: { node: string; radio: string }[];
}

export interface AlertRecord {
  kind: string;
  at: number;
  [key: string]: unknown;
}

export interface DataQuery {
  nodes?: string[];
  metrics?: string[];
  sensors?: string[];
  from?: number;
  to?: number;
  downsample?: number;
}

// Server-sent events on /api/v1/stream.
export interface TransitionEvent {
  experiment: string;
  from: string;
  to: ExperimentState;
  at: number;
  reason: string;
}

export type StreamEvent =
  | { event: "transition"; data: TransitionEvent }
  | { event: "alert"; data: AlertRecord };
