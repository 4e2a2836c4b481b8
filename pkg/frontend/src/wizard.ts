/**
 * Experiment wizard: upload -> nodes -> configure -> schedule. Each
 * step validates against the backend and surfaces its errors inline,
 * pointing at the offending artifact or node; nothing fails silently.
 */

import { ApiError, type PortalApi, type UploadSpec } from "./client.js";
import type { AvailabilityCache } from "./availability.js";
import type { ArtifactInfo, ExperimentInfo } from "./types.js";

export type WizardStep = "upload" | "nodes" | "configure" | "schedule" | "done";

export interface WizardBlock {
  step: WizardStep;
  message: string;
  /** digest of the artifact or ids of the nodes at fault, for highlighting */
  artifact?: string;
  nodes?: string[];
}

export interface WizardConfig {
  name: string;
  firmware: Record<string, string>;
  workload?: string;
  parameters?: Record<string, string>;
}

export class ExperimentWizard {
  step: WizardStep = "upload";
  uploads: ArtifactInfo[] = [];
  selected: string[] = [];
  config: WizardConfig | null = null;
  startMinute: number | null = null;
  durationMinutes = 10;
  block: WizardBlock | null = null;
  result: ExperimentInfo | null = null;

  constructor(
    private api: PortalApi,
    public projectId: string,
    private availability: AvailabilityCache,
  ) {}

  private setBlock(block: WizardBlock | null): void {
    this.block = block;
  }

  /** Upload one file; a Vulnerable verdict blocks the wizard until an
   * admin authorises the artifact (or it is removed from the plan). */
  async addArtifact(spec: UploadSpec): Promise<ArtifactInfo> {
    const art = await this.api.uploadArtifact(this.projectId, spec);
    this.uploads.push(art);
    if (art.scan === "Vulnerable" && !art.override) {
      this.setBlock({
        step: "upload",
        artifact: art.digest,
        message: `${art.name || art.digest} was flagged ${art.scan}: ` +
          "deploying it needs prior authorisation by an administrator",
      });
    }
    return art;
  }

  removeArtifact(digest: string): void {
    this.uploads = this.uploads.filter((a) => a.digest !== digest);
    if (this.block?.artifact === digest) this.setBlock(null);
  }

  /** True while a flagged upload (without an override) is in the plan. */
  blocked(): boolean {
    return this.uploads.some((a) => a.scan === "Vulnerable" && !a.override);
  }

  nextFromUpload(): boolean {
    if (this.blocked()) return false;
    if (!this.uploads.some((a) => a.kind === "Firmware")) {
      this.setBlock({ step: "upload", message: "at least one firmware image is required" });
      return false;
    }
    this.setBlock(null);
    this.step = "nodes";
    return true;
  }

  /** Picking is checked against live availability for the window; an
   * unavailable pick is rejected and named so the view can grey it. */
  async selectNodes(ids: string[], fromMinute: number): Promise<boolean> {
    const free = await this.availability.freeNodes(fromMinute, this.durationMinutes);
    const taken = ids.filter((id) => !free.has(id));
    if (taken.length) {
      this.setBlock({
        step: "nodes",
        nodes: taken,
        message: `not available for that window: ${taken.join(", ")}`,
      });
      return false;
    }
    this.selected = [...ids];
    this.startMinute = fromMinute;
    this.setBlock(null);
    this.step = "configure";
    return true;
  }

  configure(config: WizardConfig): void {
    this.config = config;
    this.step = "schedule";
  }

  /** Create and schedule in one go; API refusals map back onto the
   * step and entity they came from. */
  async submit(): Promise<ExperimentInfo | null> {
    if (this.config === null || this.startMinute === null) {
      this.setBlock({ step: this.step, message: "wizard is not complete" });
      return null;
    }
    try {
      const exp = await this.api.createExperiment(this.projectId, {
        duration_minutes: this.durationMinutes,
        configurations: [{
          name: this.config.name,
          nodes: this.selected,
          firmware: this.config.firmware,
          workload: this.config.workload ?? null,
          parameters: this.config.parameters ?? {},
        }],
      });
      this.result = await this.api.schedule(exp.id, this.startMinute);
      this.setBlock(null);
      this.step = "done";
      return this.result;
    } catch (err) {
      if (!(err instanceof ApiError)) throw err;
      this.setBlock(blockFromApiError(err, this.uploads));
      return null;
    }
  }
}

/** Translate an API refusal into an inline block with the offending
 * artifact or nodes attached. */
export function blockFromApiError(err: ApiError, uploads: ArtifactInfo[]): WizardBlock {
  if (err.code === "conflict") {
    const conflicts = (err.details.conflicts ?? []) as { node: string }[];
    const nodes = [...new Set(conflicts.map((c) => c.node))];
    return {
      step: "nodes",
      nodes,
      message: nodes.length
        ? `already reserved for that window: ${nodes.join(", ")}`
        : err.message,
    };
  }
  if (err.code === "invalid_config") {
    // the message names the artifact; match it back to an upload
    const hit = uploads.find((a) =>
      err.message.includes(a.digest) || (a.name && err.message.includes(a.name)));
    if (hit) {
      return {
        step: "upload",
        artifact: hit.digest,
        message: `${err.message}; ask an administrator to authorise it`,
      };
    }
    return { step: "configure", message: err.message };
  }
  if (err.code === "past_start" || err.code === "duration_exceeded") {
    return { step: "schedule", message: err.message };
  }
  return { step: "schedule", message: err.message };
}
