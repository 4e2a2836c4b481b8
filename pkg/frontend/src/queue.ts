/**
 * Operator queue view model. Activation is offered only where the
 * backend would accept it: Passed verdict, not yet activated, and a
 * session holding the operator (or admin) role. Everyone else gets a
 * read-only table.
 */

import type { PortalApi } from "./client.js";
import type { ExperimentInfo, QueueEntry, UserInfo } from "./types.js";

export function isOperator(user: UserInfo | null): boolean {
  if (!user) return false;
  return user.roles.includes("operator") || user.roles.includes("admin");
}

export function canActivate(entry: QueueEntry, user: UserInfo | null): boolean {
  return isOperator(user) && !entry.activated && entry.verdict === "Passed";
}

export interface QueueRow {
  experiment: string;
  verdict: QueueEntry["verdict"];
  activated: boolean;
  activatable: boolean;
}

export function queueRows(entries: QueueEntry[], user: UserInfo | null): QueueRow[] {
  return entries.map((e) => ({
    experiment: e.experiment,
    verdict: e.verdict,
    activated: e.activated,
    activatable: canActivate(e, user),
  }));
}

export class OperatorQueue {
  rows: QueueRow[] = [];
  lastError: string | null = null;

  constructor(private api: PortalApi, private user: UserInfo | null) {}

  async refresh(): Promise<QueueRow[]> {
    this.rows = queueRows(await this.api.queue(), this.user);
    return this.rows;
  }

  /** Activate then re-read the queue; returns the experiment as the
   * backend reported it after activation. */
  async activate(eid: string): Promise<ExperimentInfo | null> {
    this.lastError = null;
    try {
      const exp = await this.api.activate(eid);
      await this.refresh();
      return exp;
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      return null;
    }
  }
}
