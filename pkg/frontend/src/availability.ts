/**
 * Node-picker model: connectivity classes for the map legend and an
 * availability lookup that mirrors the scheduler. Responses are cached
 * for at most 5 seconds so the picker never drifts far from the
 * backend's availability for the chosen window.
 */

import type { PortalApi } from "./client.js";
import type { NodeInfo } from "./types.js";

export const AVAILABILITY_TTL_MS = 5000;

export type ConnectivityClass = "fibre" | "wifi" | "fibre-lora";

export function connectivityClass(node: NodeInfo): ConnectivityClass {
  if (node.class === "EdgeFibreLoRa") return "fibre-lora";
  return node.backbone === "wifi" ? "wifi" : "fibre";
}

// Map legend: green fibre, blue Wi-Fi, purple fibre + LoRa gateway.
const LEGEND: Record<ConnectivityClass, string> = {
  fibre: "green",
  wifi: "blue",
  "fibre-lora": "purple",
};

export function legendColor(cls: ConnectivityClass): string {
  return LEGEND[cls];
}

export interface PickerNode {
  id: string;
  x: number;
  y: number;
  network: string;
  state: NodeInfo["state"];
  color: string;
  available: boolean;
}

/** Availability drives the grey-out: unavailable nodes keep their spot
 * on the map but cannot be picked. */
export function paintPicker(all: NodeInfo[], free: Set<string>): PickerNode[] {
  return all.map((node) => ({
    id: node.id,
    x: node.position.x,
    y: node.position.y,
    network: node.network,
    state: node.state,
    color: legendColor(connectivityClass(node)),
    available: free.has(node.id),
  }));
}

interface CacheSlot {
  at: number;
  free: Set<string>;
}

export class AvailabilityCache {
  private slots = new Map<string, CacheSlot>();
  fetches = 0;

  constructor(
    private api: PortalApi,
    private ttlMs: number = AVAILABILITY_TTL_MS,
    private now: () => number = Date.now,
  ) {}

  async freeNodes(fromMinute: number, durationMinutes: number): Promise<Set<string>> {
    const key = `${fromMinute}:${durationMinutes}`;
    const slot = this.slots.get(key);
    if (slot && this.now() - slot.at < this.ttlMs) return slot.free;
    const nodes = await this.api.freeNodes(fromMinute, durationMinutes);
    const free = new Set(nodes.map((n) => n.id));
    this.slots.set(key, { at: this.now(), free });
    this.fetches += 1;
    return free;
  }

  invalidate(): void {
    this.slots.clear();
  }
}
