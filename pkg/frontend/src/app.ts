/**
 * Single-page portal shell. Hash routes:
 *   #/login #/projects #/wizard/<pid> #/experiments #/dashboard/<eid> #/queue
 * One stream connection feeds the whole session; views render purely
 * from API responses.
 */

import { ApiError, PortalApi } from "./client.js";
import { PortalStream, type StreamStatus } from "./stream.js";
import { AvailabilityCache, paintPicker, type PickerNode } from "./availability.js";
import { ExperimentWizard } from "./wizard.js";
import {
  CHART_POLL_MS, LiveSeries, LogTail, dutyCycleSegments, polylinePath,
} from "./charts.js";
import { OperatorQueue } from "./queue.js";
import { clear, download, h, svgEl } from "./dom.js";
import { fmtTime, isoToMinute, minuteToIso } from "./format.js";
import type { ExperimentInfo, UserInfo } from "./types.js";

const api = new PortalApi(window.location.origin);
let me: UserInfo | null = null;
let stream: PortalStream | null = null;
const availability = new AvailabilityCache(api);

const root = () => document.getElementById("app") as HTMLElement;
const statusBadge = () => document.getElementById("stream-status") as HTMLElement;

function setStreamStatus(status: StreamStatus): void {
  const badge = statusBadge();
  badge.textContent = status;
  badge.className = `badge ${status}`;
}

function ensureStream(): void {
  if (stream) return;
  stream = new PortalStream(api.streamUrl(), {
    onStatus: setStreamStatus,
    onEvent: (ev) => {
      if (ev.event === "transition") {
        document.dispatchEvent(new CustomEvent("fleet-transition", { detail: ev.data }));
      } else {
        document.dispatchEvent(new CustomEvent("fleet-alert", { detail: ev.data }));
      }
    },
  });
}

function errorBanner(err: unknown): HTMLElement {
  const message = err instanceof ApiError
    ? `${err.message} (${err.code})`
    : String(err);
  return h("div", { class: "error" }, message);
}

function nav(): HTMLElement {
  const links: [string, string][] = [
    ["#/projects", "projects"],
    ["#/experiments", "experiments"],
    ["#/queue", "queue"],
  ];
  return h("nav", {},
    ...links.map(([href, label]) => h("a", { href }, label)),
    h("span", { class: "spacer" }),
    me ? h("span", {}, me.email) : h("a", { href: "#/login" }, "log in"),
  );
}

// ------------------------------------------------------------------ login

function loginView(): HTMLElement {
  const email = h("input", { type: "email", placeholder: "email", required: true });
  const password = h("input", { type: "password", placeholder: "password", required: true });
  const out = h("div", {});
  const form = h("form", {
    onsubmit: async (ev: Event) => {
      ev.preventDefault();
      clear(out);
      try {
        const resp = await api.login(email.value, password.value);
        me = resp.user;
        ensureStream();
        window.location.hash = "#/projects";
      } catch (err) {
        out.append(errorBanner(err));
      }
    },
  }, h("h2", {}, "log in"), email, password,
     h("button", { type: "submit" }, "log in"), out);
  return form;
}

// --------------------------------------------------------------- projects

async function projectsView(): Promise<HTMLElement> {
  const container = h("div", {}, h("h2", {}, "projects"));
  try {
    const [projects, networks] = await Promise.all([api.projects(), api.networks()]);
    const table = h("table", {},
      h("tr", {}, h("th", {}, "id"), h("th", {}, "name"), h("th", {}, "network"), h("th", {}, "")),
      ...projects.map((p) => h("tr", {},
        h("td", {}, p.id), h("td", {}, p.name), h("td", {}, p.network),
        h("td", {}, h("a", { href: `#/wizard/${p.id}` }, "new experiment")),
      )));
    const name = h("input", { placeholder: "project name" });
    const network = h("select", {},
      ...networks.map((n) => h("option", { value: n.name }, `${n.name}${n.gated ? " (gated)" : ""}`)));
    const out = h("div", {});
    const form = h("form", {
      onsubmit: async (ev: Event) => {
        ev.preventDefault();
        clear(out);
        try {
          await api.createProject(name.value, network.value);
          render();
        } catch (err) {
          out.append(errorBanner(err));
        }
      },
    }, name, network, h("button", { type: "submit" }, "create"), out);
    container.append(table, h("h3", {}, "new project"), form);
  } catch (err) {
    container.append(errorBanner(err));
  }
  return container;
}

// ----------------------------------------------------------------- wizard

function pickerMap(nodes: PickerNode[], selected: Set<string>,
                   onToggle: (id: string) => void): SVGElement {
  const xs = nodes.map((n) => n.x);
  const ys = nodes.map((n) => n.y);
  const pad = 30;
  const minX = Math.min(...xs, 0), maxX = Math.max(...xs, 1);
  const minY = Math.min(...ys, 0), maxY = Math.max(...ys, 1);
  const width = 640, height = 320;
  const sx = (x: number) => pad + ((x - minX) / (maxX - minX || 1)) * (width - 2 * pad);
  const sy = (y: number) => pad + ((y - minY) / (maxY - minY || 1)) * (height - 2 * pad);
  const svg = svgEl("svg", {
    viewBox: `0 0 ${width} ${height}`, width: String(width), height: String(height),
    class: "picker-map",
  });
  for (const node of nodes) {
    const circle = svgEl("circle", {
      cx: String(sx(node.x)), cy: String(sy(node.y)), r: "9",
      fill: node.available ? node.color : "#bbb",
      stroke: selected.has(node.id) ? "#000" : "none",
      "stroke-width": "3",
      opacity: node.available ? "1" : "0.45",
    });
    if (node.available) {
      circle.addEventListener("click", () => onToggle(node.id));
      circle.setAttribute("cursor", "pointer");
    }
    const label = svgEl("text", {
      x: String(sx(node.x)), y: String(sy(node.y) - 12),
      "text-anchor": "middle", "font-size": "10",
    });
    label.textContent = node.id;
    svg.append(circle, label);
  }
  return svg;
}

async function wizardView(pid: string): Promise<HTMLElement> {
  const wizard = new ExperimentWizard(api, pid, availability);
  const container = h("div", {}, h("h2", {}, `new experiment in ${pid}`));
  const body = h("div", {});
  container.append(body);

  const selected = new Set<string>();
  let windowInput = minuteToIso(Math.floor(Date.now() / 60000) + 10);

  const redraw = async () => {
    clear(body);
    if (wizard.block) {
      body.append(h("div", { class: "error" }, wizard.block.message));
    }
    if (wizard.step === "upload") {
      const file = h("input", { type: "file" });
      const kind = h("select", {}, h("option", {}, "Firmware"), h("option", {}, "Workload"));
      const target = h("input", { value: "NRF52840", placeholder: "target" });
      body.append(
        h("h3", {}, "1. upload artifacts"),
        h("ul", {}, ...wizard.uploads.map((a) => h("li",
          { class: a.scan === "Vulnerable" && !a.override ? "flagged" : "" },
          `${a.name} [${a.kind}/${a.target}] scan: ${a.scan}`))),
        file, kind, target,
        h("button", {
          onclick: async () => {
            const picked = file.files?.[0];
            if (!picked) return;
            const data = new Uint8Array(await picked.arrayBuffer());
            await wizard.addArtifact({
              kind: kind.value as "Firmware" | "Workload",
              target: target.value, name: picked.name, data,
            });
            redraw();
          },
        }, "upload"),
        h("button", {
          onclick: () => { if (wizard.nextFromUpload()) redraw(); else redraw(); },
        }, "next: pick nodes"),
      );
    } else if (wizard.step === "nodes") {
      const when = h("input", { type: "datetime-local", value: windowInput.replace("Z", "") });
      const duration = h("input", { type: "number", value: String(wizard.durationMinutes), min: "1" });
      const fromMinute = isoToMinute(when.value || windowInput);
      const [all, free] = await Promise.all([
        api.nodes(),
        availability.freeNodes(fromMinute, Number(duration.value)),
      ]);
      const painted = paintPicker(all, free);
      body.append(
        h("h3", {}, "2. pick nodes (grey = unavailable for the window)"),
        when, duration,
        pickerMap(painted, selected, (id) => {
          if (selected.has(id)) selected.delete(id); else selected.add(id);
          redraw();
        }),
        h("p", {}, `selected: ${[...selected].join(", ") || "none"}`),
        h("button", {
          onclick: async () => {
            windowInput = when.value;
            wizard.durationMinutes = Number(duration.value);
            if (await wizard.selectNodes([...selected], isoToMinute(when.value))) redraw();
            else redraw();
          },
        }, "next: configure"),
      );
    } else if (wizard.step === "configure") {
      const firmware = wizard.uploads.find((a) => a.kind === "Firmware");
      const workloads = wizard.uploads.filter((a) => a.kind === "Workload");
      const workload = h("select", {}, h("option", { value: "" }, "none"),
        ...workloads.map((a) => h("option", { value: a.digest }, a.name)));
      body.append(
        h("h3", {}, "3. configuration"),
        h("p", {}, `firmware: ${firmware?.name ?? "none"} on ${[...selected].length} nodes`),
        h("label", {}, "workload: ", workload),
        h("button", {
          onclick: () => {
            wizard.configure({
              name: "main",
              firmware: firmware ? { [firmware.target]: firmware.digest } : {},
              workload: workload.value || undefined,
            });
            redraw();
          },
        }, "next: schedule"),
      );
    } else if (wizard.step === "schedule") {
      body.append(
        h("h3", {}, "4. schedule"),
        h("p", {}, `start ${minuteToIso(wizard.startMinute ?? 0)} for ${wizard.durationMinutes} min ` +
          `on ${wizard.selected.join(", ")}`),
        h("button", {
          onclick: async () => {
            const exp = await wizard.submit();
            if (exp) window.location.hash = "#/experiments";
            else redraw();
          },
        }, "create and schedule"),
      );
    }
  };
  await redraw();
  return container;
}

// ------------------------------------------------------------ experiments

async function experimentsView(): Promise<HTMLElement> {
  const container = h("div", {}, h("h2", {}, "experiments"));
  try {
    const experiments = await api.experiments();
    const row = (e: ExperimentInfo) => h("tr", {},
      h("td", {}, e.id), h("td", {}, e.project),
      h("td", { class: `state-${e.state}` }, e.state),
      h("td", {}, e.start_minute === null ? "-" : minuteToIso(e.start_minute)),
      h("td", {}, h("a", { href: `#/dashboard/${e.id}` }, "dashboard")));
    const table = h("table", {},
      h("tr", {}, h("th", {}, "id"), h("th", {}, "project"), h("th", {}, "state"),
        h("th", {}, "start"), h("th", {}, "")),
      ...experiments.map(row));
    container.append(table);
    document.addEventListener("fleet-transition", () => render(), { once: true });
  } catch (err) {
    container.append(errorBanner(err));
  }
  return container;
}

// -------------------------------------------------------------- dashboard

async function dashboardView(eid: string): Promise<HTMLElement> {
  const container = h("div", {}, h("h2", {}, `dashboard: ${eid}`));
  let exp: ExperimentInfo;
  try {
    exp = await api.experiment(eid);
  } catch (err) {
    container.append(errorBanner(err));
    return container;
  }
  const nodes = [...new Set(exp.configurations.flatMap((c) => c.nodes))];
  const state = h("p", {}, `state: ${exp.state}  validation: ${exp.validation}`);
  const chartSvg = svgEl("svg", { viewBox: "0 0 640 200", width: "640", height: "200", class: "chart" });
  const powerSvg = svgEl("svg", { viewBox: "0 0 640 80", width: "640", height: "80", class: "chart" });
  const logPre = h("pre", { class: "logtail" });
  const tail = new LogTail(200);
  const live = new LiveSeries(api, { nodes, metrics: ["temperature"] });
  let seenLogs = 0;

  const csvButton = h("button", {
    onclick: async () => {
      download(`${eid}.csv`, await api.exportCsv({ nodes }));
    },
  }, "download CSV");
  const bundleLink = h("a", { href: api.bundleUrl(eid) }, "download bundle");

  const repaint = async () => {
    try {
      await live.tick();
      const first = [...live.series.values()][0];
      if (first) {
        clear(chartSvg as unknown as HTMLElement);
        chartSvg.append(svgEl("path", {
          d: polylinePath(first.points, 640, 200), fill: "none",
          stroke: "#2266cc", "stroke-width": "1.5",
        }));
      }
      const lines = await api.logs(eid);
      for (const line of lines.slice(seenLogs)) {
        tail.push(`${fmtTime(line.ts)} ${line.node} ${line.stream}: ${line.line}`);
      }
      seenLogs = lines.length;
      logPre.textContent = tail.lines.join("\n");
      const power = await api.power(eid);
      if (power.traces.length) {
        const { node, radio } = power.traces[0];
        const trace = await api.power(eid, node, radio);
        if (trace.rate_hz && trace.samples.length) {
          clear(powerSvg as unknown as HTMLElement);
          for (const seg of dutyCycleSegments(trace.samples, trace.rate_hz, trace.t0 ?? 0)) {
            const t0 = trace.t0 ?? 0;
            const span = trace.samples.length / trace.rate_hz || 1;
            powerSvg.append(svgEl("rect", {
              x: String(((seg.t0 - t0) / span) * 640),
              width: String(Math.max(((seg.t1 - seg.t0) / span) * 640, 1)),
              y: seg.level === "active" ? "10" : "40",
              height: seg.level === "active" ? "60" : "30",
              fill: seg.level === "active" ? "#cc4422" : "#88aacc",
            }));
          }
        }
      }
    } catch {
      // transient fetch failure; next tick retries
    }
  };

  const timer = setInterval(repaint, CHART_POLL_MS);
  window.addEventListener("hashchange", () => clearInterval(timer), { once: true });
  document.addEventListener("fleet-transition", (ev) => {
    const detail = (ev as CustomEvent).detail;
    if (detail.experiment === eid) state.textContent = `state: ${detail.to}`;
  });
  await repaint();

  container.append(state, h("h3", {}, "sensor (temperature)"), chartSvg,
    h("h3", {}, "power duty cycle"), powerSvg,
    h("h3", {}, "log tail"), logPre, csvButton, " ", bundleLink);
  return container;
}

// ------------------------------------------------------------------ queue

async function queueView(): Promise<HTMLElement> {
  const container = h("div", {}, h("h2", {}, "gated queue"));
  const queue = new OperatorQueue(api, me);
  const out = h("div", {});
  const draw = async () => {
    await queue.refresh();
    clear(out);
    out.append(h("table", {},
      h("tr", {}, h("th", {}, "experiment"), h("th", {}, "verdict"),
        h("th", {}, "activated"), h("th", {}, "")),
      ...queue.rows.map((row) => h("tr", {},
        h("td", {}, row.experiment), h("td", {}, row.verdict),
        h("td", {}, row.activated ? "yes" : "no"),
        h("td", {}, h("button", {
          disabled: !row.activatable,
          onclick: async () => {
            const exp = await queue.activate(row.experiment);
            if (!exp && queue.lastError) {
              out.prepend(h("div", { class: "error" }, queue.lastError));
            }
            draw();
          },
        }, "activate")),
      ))));
    if (queue.lastError) out.prepend(h("div", { class: "error" }, queue.lastError));
  };
  try {
    await draw();
  } catch (err) {
    out.append(errorBanner(err));
  }
  container.append(out);
  return container;
}

// ----------------------------------------------------------------- router

async function render(): Promise<void> {
  const hash = window.location.hash || "#/login";
  const [, page, arg] = hash.split("/");
  const target = root();
  clear(target);
  target.append(nav());
  if (!me && page !== "login") {
    window.location.hash = "#/login";
    return;
  }
  switch (page) {
    case "projects": target.append(await projectsView()); break;
    case "wizard": target.append(await wizardView(arg)); break;
    case "experiments": target.append(await experimentsView()); break;
    case "dashboard": target.append(await dashboardView(arg)); break;
    case "queue": target.append(await queueView()); break;
    default: target.append(loginView());
  }
}

window.addEventListener("hashchange", () => void render());
window.addEventListener("DOMContentLoaded", () => void render());
