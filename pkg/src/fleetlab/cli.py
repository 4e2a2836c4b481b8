"""Command-line client for the platform API, plus `fleet up/down`.

Every subcommand is a thin wrapper over /api/v1: it sends one request,
prints the result, and exits with a code that names the error class.
Endpoint and token resolve as flag > environment > config file; `login`
writes the config file.  `fleet up` boots a whole virtual fleet in-process
and serves it until signalled, for desk-scale runs without a deployment.
"""

from __future__ import annotations

import base64
import json
import os
import signal
import sys
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import click
import requests

# HTTP status -> process exit code, one code per error class.
# 2 is reserved by the argument parser for usage errors.
EXIT_BY_STATUS = {
    401: 3,  # unauthenticated
    403: 4,  # denied
    404: 5,  # not found
    409: 6,  # conflict / wrong state
    413: 7,  # rejected input
    422: 7,  # rejected input
    503: 8,  # backend unavailable
}


def _config_path() -> Path:
    override = os.environ.get("FLEETLAB_CONFIG")
    if override:
        return Path(override)
    return Path.home() / ".config" / "fleetlab" / "config.json"


def _load_saved(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError):
        return {}


def _epoch_seconds(text: str) -> float:
    """Accept a unix timestamp or an ISO-8601 instant (naive means UTC)."""
    try:
        return float(text)
    except ValueError:
        pass
    stamp = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _epoch_minutes(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        return int(_epoch_seconds(text) // 60)


@dataclass
class Ctx:
    api: str
    token: Optional[str]
    json_mode: bool
    config_path: Path

    def request(self, method: str, path: str, body: Optional[dict] = None,
                params: Optional[dict] = None,
                expect: tuple = (200, 201)) -> requests.Response:
        url = self.api.rstrip("/") + "/api/v1" + path
        headers = {}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.request(method, url, json=body, params=params,
                                    headers=headers, timeout=60)
        except requests.RequestException as err:
            self.fail({"error": "unreachable",
                       "message": f"cannot reach {url}: {err}",
                       "details": {}}, 1)
        if resp.status_code not in expect:
            try:
                payload = resp.json()
            except ValueError:
                payload = {"error": "http_error",
                           "message": resp.text.strip(), "details": {}}
            self.fail(payload, EXIT_BY_STATUS.get(resp.status_code, 1))
        return resp

    def fail(self, payload: dict, code: int) -> None:
        if self.json_mode:
            click.echo(json.dumps(payload, indent=2, sort_keys=True),
                       err=True)
        else:
            message = payload.get("message") or payload.get("error", "failed")
            color = None if os.environ.get("NO_COLOR") else "red"
            click.secho(f"error: {message}", err=True, fg=color)
        raise SystemExit(code)

    def emit(self, payload, lines) -> None:
        """Print the raw payload in --json mode, else the plain rendering."""
        if self.json_mode:
            click.echo(json.dumps(payload, indent=2, sort_keys=True))
            return
        if isinstance(lines, str):
            lines = [lines]
        for line in lines:
            click.echo(line)


pass_ctx = click.make_pass_decorator(Ctx)


@click.group()
@click.option("--api", envvar="FLEETLAB_API", default=None,
              help="API endpoint, e.g. http://127.0.0.1:8080.")
@click.option("--token", envvar="FLEETLAB_TOKEN", default=None,
              help="Bearer token; defaults to the one saved by `login`.")
@click.option("--json", "json_mode", is_flag=True,
              help="Print raw JSON responses instead of plain text.")
@click.pass_context
def main(ctx, api, token, json_mode):
    """Client for a virtual IoT testbed: experiments, artifacts, fleet ops.

    Exit codes: 0 ok, 2 usage, 3 unauthenticated, 4 denied, 5 not found,
    6 conflict, 7 rejected input, 8 backend unavailable, 1 anything else.
    """
    path = _config_path()
    saved = _load_saved(path)
    ctx.obj = Ctx(api=api or saved.get("api") or "http://127.0.0.1:8080",
                  token=token or saved.get("token"),
                  json_mode=json_mode, config_path=path)


# ------------------------------------------------------------------ accounts

@main.command()
@click.argument("email")
@click.option("--password", prompt=True, hide_input=True)
@pass_ctx
def login(ctx, email, password):
    """Authenticate and save the endpoint + token to the config file."""
    resp = ctx.request("POST", "/login",
                       {"email": email, "password": password})
    payload = resp.json()
    ctx.config_path.parent.mkdir(parents=True, exist_ok=True)
    ctx.config_path.write_text(json.dumps(
        {"api": ctx.api, "token": payload["token"]}, indent=2))
    ctx.emit(payload, [f"logged in as {email}",
                       f"token saved to {ctx.config_path}"])


@main.command()
@click.argument("email")
@click.option("--password", prompt=True, hide_input=True,
              confirmation_prompt=True)
@pass_ctx
def register(ctx, email, password):
    """Create an account (it still needs admin verification)."""
    user = ctx.request("POST", "/users",
                       {"email": email, "password": password}).json()
    ctx.emit(user, f"registered {email} ({user['id']}); ask an admin to "
                   "verify the account")


@main.command()
@pass_ctx
def whoami(ctx):
    """Show the account behind the current token."""
    user = ctx.request("GET", "/me").json()
    roles = ", ".join(user["roles"]) or "none"
    ctx.emit(user, f"{user['email']} ({user['id']}) verified="
                   f"{user['verified']} roles: {roles}")


# ------------------------------------------------------------------ projects

@main.group()
def project():
    """Create, share and list projects."""


@project.command("create")
@click.argument("name")
@click.option("--network", required=True, help="Network the project runs on.")
@click.option("--description", default="")
@pass_ctx
def project_create(ctx, name, network, description):
    body = {"name": name, "network": network, "description": description}
    proj = ctx.request("POST", "/projects", body).json()
    ctx.emit(proj, f"{proj['id']} {proj['name']} (network {proj['network']})")


@project.command("share")
@click.argument("project_id")
@click.argument("user_ref")
@click.option("--role", default="Developer",
              type=click.Choice(["Developer", "Viewer"]))
@pass_ctx
def project_share(ctx, project_id, user_ref, role):
    """Grant USER_REF (id or email) a role on PROJECT_ID."""
    proj = ctx.request("POST", f"/projects/{project_id}/share",
                       {"user": user_ref, "role": role}).json()
    ctx.emit(proj, f"{proj['id']} shared with {user_ref} as {role}")


@project.command("list")
@pass_ctx
def project_list(ctx):
    payload = ctx.request("GET", "/projects").json()
    rows = [f"{p['id']} {p['name']} (network {p['network']}, "
            f"owner {p['owner']})" for p in payload["projects"]]
    ctx.emit(payload, rows or ["no projects"])


# ----------------------------------------------------------------- artifacts

@main.group()
def artifact():
    """Upload and inspect firmware and workload artifacts."""


@artifact.command("upload")
@click.argument("project_id")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--kind", required=True,
              type=click.Choice(["Firmware", "Workload"]))
@click.option("--target", required=True,
              help="Radio kind for firmware, architecture for workloads.")
@click.option("--name", default="")
@click.option("--behavior", type=click.Path(exists=True, dir_okay=False),
              help="JSON program describing what the firmware does on air.")
@pass_ctx
def artifact_upload(ctx, project_id, path, kind, target, name, behavior):
    body = {
        "kind": kind,
        "target": target,
        "name": name or Path(path).name,
        "data_b64": base64.b64encode(Path(path).read_bytes()).decode(),
    }
    if behavior:
        body["firmware_behavior"] = json.loads(Path(behavior).read_text())
    art = ctx.request("POST", f"/projects/{project_id}/artifacts",
                      body).json()
    ctx.emit(art, f"{art['digest']} {art['name']} scan={art['scan']}")


@artifact.command("list")
@click.argument("project_id")
@pass_ctx
def artifact_list(ctx, project_id):
    payload = ctx.request("GET", f"/projects/{project_id}/artifacts").json()
    rows = [f"{a['digest'][:16]} {a['kind']:<8} {a['target']:<10} "
            f"scan={a['scan']:<10} {a['name']}"
            for a in payload["artifacts"]]
    ctx.emit(payload, rows or ["no artifacts"])


@artifact.command("show")
@click.argument("digest")
@pass_ctx
def artifact_show(ctx, digest):
    art = ctx.request("GET", f"/artifacts/{digest}").json()
    ctx.emit(art, [f"digest:   {art['digest']}",
                   f"name:     {art['name']}",
                   f"kind:     {art['kind']} -> {art['target']}",
                   f"scan:     {art['scan']} {art['scan_detail']}".rstrip(),
                   f"override: {art['override']}"])


# --------------------------------------------------------------- experiments

@main.group()
def exp():
    """Create and drive experiments."""


def _exp_line(e: dict) -> str:
    line = f"{e['id']} {e['state']}"
    if e.get("start_minute") is not None:
        line += f" start_minute={e['start_minute']}"
    return line


@exp.command("create")
@click.argument("project_id")
@click.option("--file", "spec_file", required=True,
              type=click.Path(exists=True, dir_okay=False, allow_dash=True),
              help="JSON spec: duration_minutes plus configurations.")
@pass_ctx
def exp_create(ctx, project_id, spec_file):
    """Create a draft experiment from a JSON spec file ("-" for stdin)."""
    with click.open_file(spec_file) as fh:
        spec = json.load(fh)
    e = ctx.request("POST", f"/projects/{project_id}/experiments",
                    spec).json()
    ctx.emit(e, _exp_line(e))


@exp.command("schedule")
@click.argument("experiment_id")
@click.option("--at", "when", default=None,
              help="Start instant, ISO-8601 (naive means UTC).")
@click.option("--minute", default=None,
              help="Start as raw minutes since the unix epoch.")
@pass_ctx
def exp_schedule(ctx, experiment_id, when, minute):
    if (when is None) == (minute is None):
        raise click.UsageError("give exactly one of --at or --minute")
    start_minute = _epoch_minutes(minute if minute is not None else when)
    e = ctx.request("POST", f"/experiments/{experiment_id}/schedule",
                    {"start_minute": start_minute}).json()
    ctx.emit(e, _exp_line(e))


def _simple_action(name: str, doc: str):
    @exp.command(name, help=doc)
    @click.argument("experiment_id")
    @pass_ctx
    def action(ctx, experiment_id):
        e = ctx.request("POST", f"/experiments/{experiment_id}/{name}",
                        expect=(200, 201)).json()
        ctx.emit(e, _exp_line(e))
    return action


_simple_action("cancel", "Cancel an experiment that has not deployed yet.")
_simple_action("abort", "Abort an experiment, cleaning up if in flight.")
_simple_action("repeat", "Clone a finished experiment into a new draft.")


@exp.command("status")
@click.argument("experiment_id")
@pass_ctx
def exp_status(ctx, experiment_id):
    e = ctx.request("GET", f"/experiments/{experiment_id}").json()
    lines = [f"{e['id']}: {e['state']}",
             f"project:    {e['project']}",
             f"duration:   {e['duration_minutes']} min"]
    if e.get("start_minute") is not None:
        start = datetime.fromtimestamp(e["start_minute"] * 60,
                                       tz=timezone.utc)
        lines.append(f"starts:     {start.isoformat()}")
    if e.get("validation") and e["validation"] != "Pending":
        lines.append(f"validation: {e['validation']}")
    if e.get("failure_reason"):
        lines.append(f"failure:    {e['failure_reason']}")
    if e.get("results_ref"):
        lines.append(f"results:    {e['results_ref']}")
    ctx.emit(e, lines)


@exp.command("logs")
@click.argument("experiment_id")
@click.option("--node", default=None, help="Only this node's lines.")
@click.option("--follow", is_flag=True,
              help="Keep polling for new lines until interrupted.")
@click.option("--for", "for_seconds", type=float, default=None,
              help="With --follow, stop after this many seconds.")
@click.option("--interval", type=float, default=1.0,
              help="Polling interval for --follow.")
@pass_ctx
def exp_logs(ctx, experiment_id, node, follow, for_seconds, interval):
    params = {"node": node} if node else None

    def fetch() -> list:
        resp = ctx.request("GET", f"/experiments/{experiment_id}/logs",
                           params=params)
        return resp.json()["lines"]

    lines = fetch()
    if not follow or ctx.json_mode:
        ctx.emit({"lines": lines}, lines)
        return
    for line in lines:
        click.echo(line)
    seen = len(lines)
    deadline = (time.monotonic() + for_seconds
                if for_seconds is not None else None)
    try:
        while deadline is None or time.monotonic() < deadline:
            pause = interval
            if deadline is not None:
                pause = min(pause, max(0.01, deadline - time.monotonic()))
            time.sleep(pause)
            lines = fetch()
            for line in lines[seen:]:
                click.echo(line)
            seen = len(lines)
    except KeyboardInterrupt:
        pass


@exp.command("power")
@click.argument("experiment_id")
@click.option("--node", default=None)
@click.option("--radio", default=None)
@pass_ctx
def exp_power(ctx, experiment_id, node, radio):
    """Show captured power traces; give --node and --radio for samples."""
    params = {}
    if node:
        params["node"] = node
    if radio:
        params["radio"] = radio
    payload = ctx.request("GET", f"/experiments/{experiment_id}/power",
                          params=params or None).json()
    lines = [f"traces: {t['node']}/{t['radio']}"
             for t in payload["traces"]] or ["no power traces"]
    if payload["samples"]:
        lines.append(f"{node}/{radio}: {len(payload['samples'])} samples "
                     f"at {payload['rate_hz']} Hz from t0={payload['t0']}")
    ctx.emit(payload, lines)


# --------------------------------------------------------------------- nodes

@main.group()
def nodes():
    """Inspect the node fleet."""


@nodes.command("list")
@click.option("--free", is_flag=True,
              help="Only nodes free for the whole window.")
@click.option("--from", "from_when", default=None,
              help="Window start (ISO-8601 or epoch minutes).")
@click.option("--duration", type=int, default=None,
              help="Window length in minutes.")
@pass_ctx
def nodes_list(ctx, free, from_when, duration):
    params = None
    if free:
        if from_when is None or duration is None:
            raise click.UsageError("--free needs --from and --duration")
        params = {"free": "1", "from": _epoch_minutes(from_when),
                  "duration": duration}
    payload = ctx.request("GET", "/nodes", params=params).json()
    rows = [f"{n['id']:<10} {n['state']:<10} net={n['network']:<10} "
            f"radios={','.join(n['radios'])}" for n in payload["nodes"]]
    ctx.emit(payload, rows or ["no nodes"])


# ---------------------------------------------------------------------- data

def _data_params(nodes_, metrics, sensors, from_when, to_when, downsample):
    params = {}
    if nodes_:
        params["nodes"] = nodes_
    if metrics:
        params["metrics"] = metrics
    if sensors:
        params["sensors"] = sensors
    if from_when:
        params["from"] = _epoch_seconds(from_when)
    if to_when:
        params["to"] = _epoch_seconds(to_when)
    if downsample:
        params["downsample"] = downsample
    return params


def _data_options(fn):
    fn = click.option("--nodes", "nodes_", default=None,
                      help="Comma-separated node ids.")(fn)
    fn = click.option("--metrics", default=None,
                      help="Comma-separated metric names.")(fn)
    fn = click.option("--sensors", default=None,
                      help="Comma-separated sensor instance names.")(fn)
    fn = click.option("--from", "from_when", default=None,
                      help="Range start (ISO-8601 or epoch seconds).")(fn)
    fn = click.option("--to", "to_when", default=None,
                      help="Range end (ISO-8601 or epoch seconds).")(fn)
    fn = click.option("--downsample", type=float, default=None,
                      help="Average into buckets of this many seconds.")(fn)
    return fn


@main.group()
def data():
    """Query and export collected sensor data."""


@data.command("query")
@_data_options
@pass_ctx
def data_query(ctx, nodes_, metrics, sensors, from_when, to_when, downsample):
    params = _data_params(nodes_, metrics, sensors, from_when, to_when,
                          downsample)
    payload = ctx.request("GET", "/data/query", params=params).json()
    rows = [f"{p['ts']:.1f} {p['node']} {p['metric']}={p['value']}"
            f"{p['unit']} ({p['quality']})" for p in payload["points"]]
    ctx.emit(payload, rows or ["no points"])


@data.command("export")
@_data_options
@click.option("-o", "--output", type=click.Path(dir_okay=False),
              default=None, help="Write CSV here instead of stdout.")
@pass_ctx
def data_export(ctx, nodes_, metrics, sensors, from_when, to_when,
                downsample, output):
    params = _data_params(nodes_, metrics, sensors, from_when, to_when,
                          downsample)
    resp = ctx.request("GET", "/data/export.csv", params=params)
    if output:
        Path(output).write_bytes(resp.content)
        click.echo(f"wrote {output}")
    else:
        click.echo(resp.text, nl=False)


# --------------------------------------------------------------------- admin

@main.group()
def admin():
    """Administrative actions (require the admin role)."""


@admin.command("verify-user")
@click.argument("user_ref")
@pass_ctx
def admin_verify(ctx, user_ref):
    """Mark USER_REF (id or email) as verified."""
    user = ctx.request("POST", f"/users/{user_ref}/verify").json()
    ctx.emit(user, f"verified {user['email']}")


@admin.command("grant-roles")
@click.argument("user_ref")
@click.argument("roles", nargs=-1, required=True)
@pass_ctx
def admin_roles(ctx, user_ref, roles):
    """Grant platform roles (network names, admin, operator)."""
    user = ctx.request("POST", f"/users/{user_ref}/roles",
                       {"roles": list(roles)}).json()
    ctx.emit(user, f"{user['email']} roles: {', '.join(user['roles'])}")


@admin.command("override-artifact")
@click.argument("digest")
@pass_ctx
def admin_override(ctx, digest):
    """Allow a Vulnerable artifact to run anyway (audited)."""
    art = ctx.request("POST", f"/artifacts/{digest}/override").json()
    ctx.emit(art, f"override set on {art['digest']} ({art['name']})")


# ------------------------------------------------------------------ operator

@main.group()
def operator():
    """Operator actions on gated networks."""


@operator.group("queue")
def operator_queue():
    """Inspect and activate the gated-experiment queue."""


@operator_queue.command("list")
@pass_ctx
def queue_list(ctx):
    payload = ctx.request("GET", "/queue").json()
    rows = [f"{e['experiment']} verdict={e['verdict']} "
            f"activated={e['activated']}" for e in payload["entries"]]
    ctx.emit(payload, rows or ["queue is empty"])


@operator_queue.command("activate")
@click.argument("experiment_id")
@pass_ctx
def queue_activate(ctx, experiment_id):
    e = ctx.request("POST", f"/queue/{experiment_id}/activate").json()
    ctx.emit(e, f"{e['id']} activated; deploys at its window "
                f"(start_minute={e['start_minute']})")


# --------------------------------------------------------------------- fleet

@main.group()
def fleet():
    """Boot and stop an in-process virtual fleet."""


@fleet.command("up")
@click.option("--topology", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Topology JSON; omit for the demo fleet.")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080,
              help="TCP port; 0 picks a free one.")
@click.option("--data-dir", type=click.Path(file_okay=False), default=None,
              help="Persist journals and bundles here.")
@click.option("--rate", type=float, default=1.0,
              help="Virtual seconds per wall second; 0 runs flat out.")
@click.option("--static", "static_dir",
              type=click.Path(exists=True, file_okay=False), default=None,
              help="Serve this directory as the web portal.")
@pass_ctx
def fleet_up(ctx, topology, host, port, data_dir, rate, static_dir):
    """Boot the virtual fleet and serve its API until stopped."""
    from .httpd import PlatformServer
    from .topology import DEFAULT_TOPOLOGY, build_platform, load_topology

    spec = load_topology(topology) if topology else DEFAULT_TOPOLOGY
    platform = build_platform(spec, data_dir=data_dir)
    server = PlatformServer(platform, host=host, port=port,
                            static_dir=static_dir, clock_rate=rate)
    state_path = ctx.config_path.parent / "fleet.json"
    state_path.parent.mkdir(parents=True, exist_ok=True)
    stop = threading.Event()
    for signum in (signal.SIGINT, signal.SIGTERM):
        signal.signal(signum, lambda *_: stop.set())
    server.start()
    state_path.write_text(json.dumps(
        {"pid": os.getpid(), "url": server.url()}, indent=2))
    click.echo(f"fleet up: {len(platform.nodes)} nodes at {server.url()} "
               f"(pid {os.getpid()}, clock x{rate:g})")
    sys.stdout.flush()
    try:
        while not stop.wait(0.5):
            pass
    finally:
        server.stop()
        state_path.unlink(missing_ok=True)
    click.echo("fleet stopped")


@fleet.command("down")
@pass_ctx
def fleet_down(ctx):
    """Stop the fleet previously started with `fleet up`."""
    state_path = ctx.config_path.parent / "fleet.json"
    if not state_path.exists():
        ctx.fail({"error": "not_found",
                  "message": f"no running fleet ({state_path} missing)",
                  "details": {}}, 5)
    pid = json.loads(state_path.read_text())["pid"]
    try:
        os.kill(pid, signal.SIGTERM)
    except ProcessLookupError:
        state_path.unlink(missing_ok=True)
        click.echo(f"fleet pid {pid} was already gone; removed stale state")
        return
    # `fleet up` removes its state file on the way out; that is the stop
    # signal (the pid may linger as a zombie until its parent reaps it).
    deadline = time.time() + 10
    while time.time() < deadline:
        if not state_path.exists():
            click.echo(f"fleet pid {pid} stopped")
            return
        time.sleep(0.1)
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        state_path.unlink(missing_ok=True)
        click.echo(f"fleet pid {pid} died without cleaning up; removed state")
        return
    ctx.fail({"error": "busy",
              "message": f"fleet pid {pid} did not stop in 10 s",
              "details": {}}, 1)


if __name__ == "__main__":
    main(prog_name="fleetlab")
