"""JSON API over the platform, independent of any transport.

ApiRouter.handle(method, path, body, token) returns an ApiResponse; the
HTTP server, tests, and anything else that speaks the /api/v1 contract call
it directly.  All policy lives in the Platform; this layer only maps the
wire shapes and turns error codes into status codes.
"""

from __future__ import annotations

import base64
import json
import re
import secrets
from dataclasses import dataclass
from typing import Callable, Optional
from urllib.parse import parse_qs, urlsplit

from . import errors
from .hardware.lora import ServiceProfile
from .model import (ArtifactKind, Configuration, Position, ProjectRole, User)
from .orchestrator import Platform

# FleetError code -> HTTP status.  Anything unlisted is a 400.
STATUS_BY_CODE = {
    "unauthenticated": 401,
    "denied": 403, "not_admin": 403, "not_operator": 403,
    "not_verified": 403, "acl_denied": 403,
    "unknown_entity": 404, "not_started": 404, "unknown_device": 404,
    "conflict": 409, "invalid_state": 409, "busy": 409,
    "queue_order": 409, "not_gated": 409,
    "too_large": 413,
    "invalid_config": 422, "duration_exceeded": 422, "past_start": 422,
    "target_mismatch": 422, "not_validated": 422, "not_reserved": 422,
    "range_too_large": 422, "start_failure": 422, "device_denied": 422,
    "no_gateway_coverage": 422,
    "agent_unreachable": 503, "source_missing": 503,
    "scanner_unavailable": 503,
}


@dataclass
class ApiResponse:
    status: int
    body: bytes
    content_type: str = "application/json"


def _json(status: int, payload: dict | list) -> ApiResponse:
    data = json.dumps(payload, sort_keys=True).encode("utf-8")
    return ApiResponse(status, data)


def _floats(params: dict, key: str) -> Optional[float]:
    values = params.get(key)
    return float(values[0]) if values else None


def _csv_param(params: dict, key: str) -> Optional[list[str]]:
    values = params.get(key)
    if not values:
        return None
    out: list[str] = []
    for v in values:
        out.extend(x for x in v.split(",") if x)
    return out or None


class ApiRouter:
    def __init__(self, platform: Platform):
        self.platform = platform
        self.sessions: dict[str, str] = {}  # token -> user id
        p = r"[^/]+"
        self._routes: list[tuple[str, re.Pattern, bool, Callable]] = [
            ("POST", rf"/login", False, self._login),
            ("GET", rf"/health", False, self._health),
            ("POST", rf"/users", False, self._register),
            ("GET", rf"/me", True, self._me),
            ("POST", rf"/users/(?P<uid>{p})/verify", True, self._verify),
            ("POST", rf"/users/(?P<uid>{p})/roles", True, self._roles),
            ("GET", rf"/networks", True, self._networks),
            ("GET", rf"/nodes", True, self._nodes),
            ("POST", rf"/projects", True, self._create_project),
            ("GET", rf"/projects", True, self._list_projects),
            ("POST", rf"/projects/(?P<pid>{p})/share", True, self._share),
            ("POST", rf"/projects/(?P<pid>{p})/artifacts", True, self._upload),
            ("GET", rf"/projects/(?P<pid>{p})/artifacts", True,
             self._list_artifacts),
            ("GET", rf"/artifacts/(?P<digest>{p})", True, self._artifact),
            ("POST", rf"/artifacts/(?P<digest>{p})/override", True,
             self._override),
            ("POST", rf"/projects/(?P<pid>{p})/experiments", True,
             self._create_experiment),
            ("GET", rf"/experiments", True, self._list_experiments),
            ("GET", rf"/experiments/(?P<eid>{p})", True, self._experiment),
            ("POST", rf"/experiments/(?P<eid>{p})/schedule", True,
             self._schedule),
            ("POST", rf"/experiments/(?P<eid>{p})/cancel", True, self._cancel),
            ("POST", rf"/experiments/(?P<eid>{p})/abort", True, self._abort),
            ("POST", rf"/experiments/(?P<eid>{p})/repeat", True, self._repeat),
            ("GET", rf"/experiments/(?P<eid>{p})/logs", True, self._logs),
            ("GET", rf"/experiments/(?P<eid>{p})/bundle", True, self._bundle),
            ("GET", rf"/experiments/(?P<eid>{p})/power", True, self._power),
            ("GET", rf"/experiments/(?P<eid>{p})/validation", True,
             self._validation),
            ("GET", rf"/queue", True, self._queue),
            ("POST", rf"/queue/(?P<eid>{p})/activate", True, self._activate),
            ("GET", rf"/data/query", True, self._query),
            ("GET", rf"/data/export.csv", True, self._export_csv),
            ("GET", rf"/alerts", True, self._alerts),
            ("GET", rf"/monitor", True, self._monitor),
            ("POST", rf"/lora/apps", True, self._lora_app),
            ("POST", rf"/lora/devices", True, self._lora_device),
            ("POST", rf"/lora/uplink", True, self._lora_uplink),
            ("GET", rf"/lora/apps/(?P<app>{p})/uplinks", True,
             self._lora_uplinks),
        ]
        self._compiled = [(m, re.compile("^/api/v1" + rx + "$"), auth, fn)
                          for (m, rx, auth, fn) in self._routes]

    # ------------------------------------------------------------ dispatch

    def handle(self, method: str, path: str, body: Optional[dict] = None,
               token: Optional[str] = None) -> ApiResponse:
        split = urlsplit(path)
        params = parse_qs(split.query)
        allowed: set[str] = set()
        for route_method, rx, needs_auth, fn in self._compiled:
            match = rx.match(split.path)
            if match is None:
                continue
            if route_method != method:
                allowed.add(route_method)
                continue
            try:
                user = self._session_user(token) if needs_auth else None
                return fn(user, match, params, body or {})
            except errors.FleetError as err:
                status = STATUS_BY_CODE.get(err.code, 400)
                return _json(status, {"error": err.code,
                                      "message": err.message,
                                      "details": err.details})
            except (KeyError, TypeError, ValueError) as err:
                return _json(400, {"error": "bad_request",
                                   "message": str(err), "details": {}})
        if allowed:
            return _json(405, {"error": "method_not_allowed",
                               "message": f"{method} not supported here",
                               "details": {"allowed": sorted(allowed)}})
        return _json(404, {"error": "unknown_route",
                           "message": f"no route for {split.path}",
                           "details": {}})

    def _session_user(self, token: Optional[str]) -> User:
        user_id = self.sessions.get(token or "")
        user = self.platform.users.get(user_id) if user_id else None
        if user is None:
            raise errors.Unauthenticated("missing or expired token")
        return user

    # -------------------------------------------------------------- session

    def _login(self, user, match, params, body) -> ApiResponse:
        account = self.platform.authenticate(body["email"], body["password"])
        token = secrets.token_hex(16)
        self.sessions[token] = account.id
        return _json(200, {"token": token, "user": account.to_dict()})

    def _health(self, user, match, params, body) -> ApiResponse:
        return _json(200, {"ok": True, "now": self.platform.sched.now,
                           "nodes": len(self.platform.nodes)})

    def _register(self, user, match, params, body) -> ApiResponse:
        account = self.platform.register_user(body["email"], body["password"])
        return _json(201, account.to_dict())

    def _me(self, user, match, params, body) -> ApiResponse:
        return _json(200, user.to_dict())

    def _uid(self, ref: str) -> str:
        # user endpoints accept either the id or the account email
        if "@" in ref:
            return self.platform._users_by_email.get(ref, ref)
        return ref

    def _verify(self, user, match, params, body) -> ApiResponse:
        account = self.platform.verify_user(user, self._uid(match["uid"]))
        return _json(200, account.to_dict())

    def _roles(self, user, match, params, body) -> ApiResponse:
        account = self.platform.grant_roles(user, self._uid(match["uid"]),
                                            body.get("roles", []))
        return _json(200, account.to_dict())

    # ---------------------------------------------------------------- fleet

    def _networks(self, user, match, params, body) -> ApiResponse:
        from .rbac import network_visible
        nets = [n.to_dict() for n in self.platform.networks.values()
                if network_visible(user, n)]
        return _json(200, {"networks": nets})

    def _nodes(self, user, match, params, body) -> ApiResponse:
        p = self.platform
        if params.get("free"):
            start = int(params["from"][0])
            duration = int(params["duration"][0])
            free = p.free_nodes(start, duration)
            nodes = [p.nodes[nid.render()].to_dict() for nid in free]
        else:
            nodes = [node.to_dict() for _, node in sorted(p.nodes.items())]
        return _json(200, {"nodes": nodes})

    # -------------------------------------------------------------- projects

    def _create_project(self, user, match, params, body) -> ApiResponse:
        project = self.platform.create_project(
            user, name=body["name"], description=body.get("description", ""),
            network=body["network"])
        return _json(201, project.to_dict())

    def _list_projects(self, user, match, params, body) -> ApiResponse:
        projects = [p.to_dict() for p in self.platform.list_projects(user)]
        return _json(200, {"projects": projects})

    def _share(self, user, match, params, body) -> ApiResponse:
        project = self.platform.share_project(user, match["pid"],
                                              self._uid(body["user"]),
                                              ProjectRole(body["role"]))
        return _json(200, project.to_dict())

    # ------------------------------------------------------------- artifacts

    def _upload(self, user, match, params, body) -> ApiResponse:
        art = self.platform.upload_artifact(
            user, match["pid"], kind=ArtifactKind(body["kind"]),
            target=body["target"],
            data=base64.b64decode(body["data_b64"]),
            name=body.get("name", ""),
            firmware_behavior=body.get("firmware_behavior"))
        return _json(201, art.to_dict())

    def _list_artifacts(self, user, match, params, body) -> ApiResponse:
        arts = self.platform.list_artifacts(user, match["pid"])
        return _json(200, {"artifacts": [a.to_dict() for a in arts]})

    def _artifact(self, user, match, params, body) -> ApiResponse:
        art = self.platform.get_artifact(user, match["digest"])
        return _json(200, art.to_dict())

    def _override(self, user, match, params, body) -> ApiResponse:
        art = self.platform.override_artifact(user, match["digest"])
        return _json(200, art.to_dict())

    # ----------------------------------------------------------- experiments

    def _create_experiment(self, user, match, params, body) -> ApiResponse:
        configurations = [Configuration.from_dict(c)
                          for c in body["configurations"]]
        exp = self.platform.create_experiment(
            user, match["pid"], configurations=configurations,
            duration_minutes=int(body["duration_minutes"]))
        return _json(201, exp.to_dict())

    def _list_experiments(self, user, match, params, body) -> ApiResponse:
        project = params.get("project", [None])[0]
        exps = self.platform.list_experiments(user, project)
        return _json(200, {"experiments": [e.to_dict() for e in exps]})

    def _experiment(self, user, match, params, body) -> ApiResponse:
        return _json(200, self.platform.experiment_status(user, match["eid"]))

    def _schedule(self, user, match, params, body) -> ApiResponse:
        exp = self.platform.schedule_experiment(
            user, match["eid"], start_minute=int(body["start_minute"]))
        return _json(200, exp.to_dict())

    def _cancel(self, user, match, params, body) -> ApiResponse:
        exp = self.platform.cancel_experiment(user, match["eid"])
        return _json(200, exp.to_dict())

    def _abort(self, user, match, params, body) -> ApiResponse:
        exp = self.platform.abort_experiment(user, match["eid"])
        return _json(200, exp.to_dict())

    def _repeat(self, user, match, params, body) -> ApiResponse:
        exp = self.platform.repeat_experiment(user, match["eid"])
        return _json(201, exp.to_dict())

    def _logs(self, user, match, params, body) -> ApiResponse:
        self.platform.experiment_status(user, match["eid"])  # access check
        node = params.get("node", [None])[0]
        lines = self.platform.logs.lines(match["eid"], node)
        return _json(200, {"lines": lines})

    def _bundle(self, user, match, params, body) -> ApiResponse:
        data = self.platform.bundle_of(user, match["eid"])
        return ApiResponse(200, data, "application/gzip")

    def _power(self, user, match, params, body) -> ApiResponse:
        self.platform.experiment_status(user, match["eid"])  # access check
        eid = match["eid"]
        traces = [{"node": n, "radio": r}
                  for n, r in self.platform.power.nodes_with_traces(eid)]
        node = params.get("node", [None])[0]
        radio = params.get("radio", [None])[0]
        t0, rate, samples = (None, None, [])
        if node and radio:
            t0, rate, samples = self.platform.power.trace(eid, node, radio)
        return _json(200, {"t0": t0, "rate_hz": rate, "samples": samples,
                           "traces": traces})

    def _validation(self, user, match, params, body) -> ApiResponse:
        status = self.platform.experiment_status(user, match["eid"])
        return _json(200, {"experiment": match["eid"],
                           "verdict": status["validation"],
                           "report": status["validation_report"]})

    # ----------------------------------------------------------- gated queue

    def _queue(self, user, match, params, body) -> ApiResponse:
        return _json(200, {"entries": self.platform.queue.list_entries()})

    def _activate(self, user, match, params, body) -> ApiResponse:
        exp = self.platform.activate_experiment(user, match["eid"])
        return _json(200, exp.to_dict())

    # ------------------------------------------------------------------ data

    def _query_kwargs(self, params) -> dict:
        return {
            "nodes": _csv_param(params, "nodes"),
            "metrics": _csv_param(params, "metrics"),
            "sensors": _csv_param(params, "sensors"),
            "t_from": _floats(params, "from"),
            "t_to": _floats(params, "to"),
            "downsample_s": _floats(params, "downsample"),
        }

    def _query(self, user, match, params, body) -> ApiResponse:
        rows = self.platform.tsdb.query(**self._query_kwargs(params))
        return _json(200, {"points": [s.to_dict() for s in rows]})

    def _export_csv(self, user, match, params, body) -> ApiResponse:
        text = self.platform.tsdb.export_csv(**self._query_kwargs(params))
        return ApiResponse(200, text.encode("utf-8"), "text/csv")

    def _alerts(self, user, match, params, body) -> ApiResponse:
        return _json(200, {"alerts": self.platform.alerts})

    def _monitor(self, user, match, params, body) -> ApiResponse:
        return _json(200, self.platform.monitor_snapshot())

    # ------------------------------------------------------------------ lora

    def _require_operator(self, user) -> None:
        from .rbac import is_admin, is_operator
        if not (is_admin(user) or is_operator(user)):
            raise errors.NotOperator("LoRa provisioning needs operator role")

    def _lora_app(self, user, match, params, body) -> ApiResponse:
        self._require_operator(user)
        self.platform.lora.register_app(body["app"])
        return _json(201, {"app": body["app"]})

    def _lora_device(self, user, match, params, body) -> ApiResponse:
        self._require_operator(user)
        profile = ServiceProfile(
            name=body.get("profile_name", "default"),
            min_uplink_interval_s=float(body["min_uplink_interval_s"]))
        self.platform.lora.register_device(
            body["eui"], app=body["app"],
            position=Position(float(body["x"]), float(body["y"])),
            service_profile=profile)
        return _json(201, {"eui": body["eui"], "app": body["app"]})

    def _lora_uplink(self, user, match, params, body) -> ApiResponse:
        self._require_operator(user)
        frame = self.platform.lora.uplink(body["eui"],
                                          payload=body["payload"],
                                          fcnt=int(body["fcnt"]))
        return _json(200, {"delivered": frame is not None, "frame": frame})

    def _lora_uplinks(self, user, match, params, body) -> ApiResponse:
        return _json(200, {"uplinks": self.platform.lora.uplinks(match["app"])})
