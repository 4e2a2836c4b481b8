"""Platform core: accounts, projects, fleet, and the experiment lifecycle.

One Platform object owns the virtual clock and every service hanging off it:
the topic bus, artifact registry, reservation calendar, gated queues, the
per-node agents, and the data stores.  All experiment state changes flow
through a single _transition() choke point that validates the edge against
the lifecycle table and journals a full snapshot, which is what makes crash
recovery a replay rather than a reconstruction.

Organisational records (users, networks, projects) are deliberately not
journaled; an operator re-provisions them at boot, typically from the same
topology file.  Experiments, reservations, and artifacts do persist.
"""

from __future__ import annotations

import copy
import hashlib
import json
import threading
from pathlib import Path
from typing import Callable, Iterable, Optional

from . import errors
from .agent import NodeAgent, ensure_base_artifacts
from .clock import DEFAULT_EPOCH, EventScheduler
from .config import PlatformConfig
from .dataplane.broker import Broker
from .dataplane.collector import SensorCollector
from .dataplane.logs import LogStore
from .dataplane.power import PowerStore
from .dataplane.tsdb import TimeSeriesStore
from .hardware.channel import RadioEnvironment
from .hardware.lora import LoRaCore
from .journal import Journal
from .model import (LEGAL_TRANSITIONS, TERMINAL_STATES, AgentStateKind,
                    Artifact, ArtifactKind, Configuration, Experiment,
                    ExperimentState, Network, Node, NodeId, Position, Project,
                    ProjectRole, User, ValidationVerdict, canonical_bytes)
from .rbac import Action, authorize
from .registry import ArtifactRegistry
from .scheduler import GatedQueue, ReservationBook

_PRE_DEPLOY = (ExperimentState.DRAFT, ExperimentState.SCHEDULED,
               ExperimentState.QUEUED_GATED)
_IN_FLIGHT = (ExperimentState.DEPLOYING, ExperimentState.RUNNING,
              ExperimentState.COLLECTING)


def _hash_password(password: str) -> str:
    return hashlib.sha256(password.encode("utf-8")).hexdigest()


class Platform:
    def __init__(self, config: Optional[PlatformConfig] = None, *,
                 data_dir: Optional[str | Path] = None,
                 start: float = DEFAULT_EPOCH,
                 root_email: str = "root@local", root_password: str = "root"):
        self.config = config or PlatformConfig()
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.sched = EventScheduler(start=start)
        self.lock = threading.RLock()  # held by network-facing frontends

        self.broker = Broker()
        self.env = RadioEnvironment(
            self.sched,
            path_loss_exponent=self.config.path_loss_exponent,
            path_loss_at_1m_db=self.config.path_loss_at_1m_db,
            shadowing_sigma_db=self.config.shadowing_sigma_db,
            seed=self.config.channel_seed)
        self.registry = ArtifactRegistry(self.config, self.sched, self.data_dir)
        self.base = ensure_base_artifacts(self.registry)

        self.tsdb = TimeSeriesStore(
            self.data_dir / "tsdb" if self.data_dir else None,
            max_query_points=self.config.max_query_points)
        self.logs = LogStore(self.data_dir)
        self.power = PowerStore()
        self.alerts: list[dict] = []
        self.transitions: list[dict] = []
        self.listeners: list[Callable[[dict], None]] = []
        self.collector = SensorCollector(
            self.broker, self.tsdb, alert_cb=lambda a: self.publish_alert(**a))
        self.collector.start()

        self.users: dict[str, User] = {}
        self._users_by_email: dict[str, str] = {}
        self.networks: dict[str, Network] = {}
        self.projects: dict[str, Project] = {}
        self.nodes: dict[str, Node] = {}
        self.agents: dict[str, NodeAgent] = {}
        self.experiments: dict[str, Experiment] = {}
        self.counters = {"user": 0, "project": 0, "experiment": 0}
        self._bundles: dict[str, bytes] = {}
        self._retries: dict[str, int] = {}
        self._storm_alerted: set[str] = set()
        self._offline_alerted: set[str] = set()
        self._drop_seen: dict[str, int] = {}

        self.book = ReservationBook(
            self.config, now_fn=lambda: self.sched.now,
            node_state=self._node_state,
            journal=Journal(self.data_dir / "reservations.jsonl")
            if self.data_dir else None)
        self.queue = GatedQueue(verdict_of=self._verdict_of)
        self.lora = LoRaCore(self.env, self.broker,
                             now_fn=lambda: self.sched.now)

        self.root = self.register_user(root_email, root_password)
        self.root.verified = True
        self.root.roles |= {"admin", "operator"}

        self.broker.subscribe("experiments/+/logs/+", self._on_log)
        self.broker.subscribe("experiments/+/power/+/+", self.power.on_message)
        self.broker.subscribe("nodes/+/analytics", self._on_analytics)
        self.sched.every(self.config.heartbeat_interval_s, self._monitor_tick)

        self._journal = (Journal(self.data_dir / "experiments.jsonl")
                         if self.data_dir else Journal())
        self._replay_experiments()
        # Recovery acts only on journaled records; experiments created after
        # boot but before the clock first runs must not be touched.
        replayed = list(self.experiments.values())
        if replayed:
            self.sched.after(0.0, lambda: self._recover(replayed))

    # ------------------------------------------------------------ wiring

    def _node_state(self, node: NodeId) -> AgentStateKind:
        rec = self.nodes.get(node.render())
        return rec.state if rec is not None else AgentStateKind.OFFLINE

    def _verdict_of(self, experiment: str) -> str:
        exp = self.experiments.get(experiment)
        return exp.validation.value if exp else ValidationVerdict.PENDING.value

    def _on_log(self, topic: str, payload: bytes) -> bool:
        experiment = topic.split("/")[1]
        rec = json.loads(payload.decode("utf-8"))
        self.logs.append(experiment, rec["node"], rec["ts"], rec["stream"],
                         rec["line"])
        return True

    def _on_analytics(self, topic: str, payload: bytes) -> bool:
        beat = json.loads(payload.decode("utf-8"))
        node = self.nodes.get(beat["node"])
        if node is None:
            return True
        node.last_heartbeat = beat["ts"]
        agent = self.agents.get(beat["node"])
        if node.state is AgentStateKind.OFFLINE and agent and agent.online:
            agent._refresh_state()
            self._offline_alerted.discard(beat["node"])
        return True

    def publish_alert(self, kind: str, **fields) -> dict:
        alert = {"kind": kind, "at": self.sched.now, **fields}
        self.alerts.append(alert)
        self.broker.publish("platform", "alerts", canonical_bytes(alert))
        self._emit({"event": "alert", "data": alert})
        return alert

    def _emit(self, event: dict) -> None:
        for listener in list(self.listeners):
            try:
                listener(event)
            except Exception:
                pass  # a dead stream must never stall the platform

    # ------------------------------------------------------ fleet assembly

    def add_network(self, name: str, *, default_roles: Iterable[str],
                    gated: bool = False, description: str = "") -> Network:
        if name in self.networks:
            return self.networks[name]
        net = Network(name=name, default_roles=set(default_roles),
                      gated=gated, description=description)
        self.networks[name] = net
        return net

    def add_node(self, node_id: str, *, x: float, y: float,
                 network: str) -> Node:
        nid = NodeId.parse(node_id)
        name = nid.render()
        if name in self.nodes:
            return self.nodes[name]
        if network not in self.networks:
            raise errors.UnknownEntity(f"no network named {network!r}")
        node = Node(id=nid, position=Position(x, y), network=network)
        self.nodes[name] = node
        self.networks[network].nodes.append(nid)
        self.agents[name] = NodeAgent(
            node, env=self.env, broker=self.broker, sched=self.sched,
            config=self.config, registry=self.registry,
            factory_firmware=self.base["firmware"],
            seed=self.config.sensor_seed)
        return node

    # ------------------------------------------------------------ accounts

    def register_user(self, email: str, password: str) -> User:
        if email in self._users_by_email:
            raise errors.Conflict(f"{email} is already registered")
        self.counters["user"] += 1
        user = User(id=f"u-{self.counters['user']:04d}", email=email,
                    password_hash=_hash_password(password))
        self.users[user.id] = user
        self._users_by_email[email] = user.id
        return user

    def authenticate(self, email: str, password: str) -> User:
        user_id = self._users_by_email.get(email)
        user = self.users.get(user_id) if user_id else None
        if user is None or user.password_hash != _hash_password(password):
            raise errors.Unauthenticated("bad email or password")
        return user

    def verify_user(self, actor: User, user_id: str) -> User:
        self._require(actor, Action.VERIFY_USER)
        user = self._user(user_id)
        user.verified = True
        return user

    def grant_roles(self, actor: User, user_id: str,
                    roles: Iterable[str]) -> User:
        self._require(actor, Action.ADMINISTER)
        user = self._user(user_id)
        user.roles |= set(roles)
        return user

    # ------------------------------------------------------------ projects

    def create_project(self, user: User, *, name: str, description: str,
                       network: str) -> Project:
        net = self._network(network)
        self._require(user, Action.CREATE_PROJECT, network=net)
        self.counters["project"] += 1
        project = Project(id=f"prj-{self.counters['project']:04d}", name=name,
                          description=description, network=network,
                          owner=user.id)
        self.projects[project.id] = project
        return project

    def share_project(self, actor: User, project_id: str, user_id: str,
                      role: ProjectRole) -> Project:
        project = self._project(project_id)
        self._require(actor, Action.SHARE_PROJECT, project=project)
        self._user(user_id)
        project.members[user_id] = role
        return project

    def list_projects(self, user: User) -> list[Project]:
        return [p for p in self.projects.values()
                if authorize(user, Action.VIEW_PROJECT, project=p,
                             network=self.networks.get(p.network))]

    # ------------------------------------------------------------ artifacts

    def upload_artifact(self, user: User, project_id: str, *,
                        kind: ArtifactKind, target: str, data: bytes,
                        name: str = "",
                        firmware_behavior: Optional[dict] = None) -> Artifact:
        project = self._project(project_id)
        self._require(user, Action.MODIFY_ARTIFACTS, project=project)
        return self.registry.upload(project=project_id, kind=kind,
                                    target=target, data=data,
                                    uploaded_by=user.id, name=name,
                                    firmware_behavior=firmware_behavior)

    def list_artifacts(self, user: User, project_id: str) -> list[Artifact]:
        project = self._project(project_id)
        self._require(user, Action.VIEW_PROJECT, project=project)
        return self.registry.list_for_project(project_id)

    def get_artifact(self, user: User, digest: str) -> Artifact:
        art = self.registry.get(digest)
        if art.project:  # base artifacts are visible to any account
            project = self._project(art.project)
            self._require(user, Action.VIEW_PROJECT, project=project)
        return art

    def override_artifact(self, actor: User, digest: str) -> Artifact:
        self._require(actor, Action.OVERRIDE_ARTIFACT)
        art = self.registry.override(digest, actor.id)
        self.publish_alert("artifact_override", digest=digest,
                           by=actor.email)
        return art

    # ---------------------------------------------------------- experiments

    def create_experiment(self, user: User, project_id: str, *,
                          configurations: list[Configuration],
                          duration_minutes: int) -> Experiment:
        project = self._project(project_id)
        self._require(user, Action.RUN_EXPERIMENT, project=project)
        network = self.networks[project.network]
        if not configurations:
            raise errors.InvalidConfig("experiment needs at least one "
                                       "configuration")
        if duration_minutes > self.config.max_duration_minutes:
            raise errors.DurationExceeded(
                f"duration {duration_minutes} exceeds "
                f"{self.config.max_duration_minutes} minutes",
                duration=duration_minutes)
        if duration_minutes <= self.config.cleanup_budget_minutes:
            raise errors.InvalidConfig(
                f"duration must exceed the {self.config.cleanup_budget_minutes}"
                " minute cleanup budget")

        seen: set[str] = set()
        for cfg in configurations:
            if not cfg.nodes:
                raise errors.InvalidConfig(
                    f"configuration {cfg.name!r} lists no nodes")
            for nid in cfg.nodes:
                name = nid.render()
                if name not in self.nodes:
                    raise errors.UnknownEntity(f"no node named {name}")
                if self.nodes[name].network != network.name:
                    raise errors.InvalidConfig(
                        f"{name} is not part of network {network.name!r}")
                if name in seen:
                    raise errors.InvalidConfig(
                        f"{name} appears in more than one configuration")
                seen.add(name)
            self._check_config_artifacts(project, cfg)

        self.counters["experiment"] += 1
        exp = Experiment(id=f"exp-{self.counters['experiment']:04d}",
                         project=project_id,
                         configurations=copy.deepcopy(configurations),
                         created_by=user.id,
                         duration_minutes=duration_minutes)
        self.experiments[exp.id] = exp
        self._snapshot(exp)
        return exp

    def _check_config_artifacts(self, project: Project,
                                cfg: Configuration) -> None:
        for kind, digest in sorted(cfg.firmware.items(),
                                   key=lambda kv: kv[0].value):
            art = self._visible_artifact(project, digest)
            for nid in cfg.nodes:
                if kind not in self.nodes[nid.render()].radio_kinds():
                    raise errors.InvalidConfig(
                        f"{nid.render()} has no {kind.value} radio")
            if art.kind is not ArtifactKind.FIRMWARE or art.target != kind.value:
                raise errors.TargetMismatch(
                    f"{art.name or art.digest} targets "
                    f"{art.kind.value}/{art.target}, not firmware for "
                    f"{kind.value}")
            self._require_usable(art)
        if cfg.workload:
            art = self._visible_artifact(project, cfg.workload)
            if art.kind is not ArtifactKind.WORKLOAD:
                raise errors.TargetMismatch(
                    f"{art.name or art.digest} is not a workload")
            self._require_usable(art)
            if art.target == "ARM64":
                for nid in cfg.nodes:
                    if not self.nodes[nid.render()].cls.has_edge_compute:
                        raise errors.InvalidConfig(
                            f"{nid.render()} cannot run ARM64 workloads")

    def _visible_artifact(self, project: Project, digest: str) -> Artifact:
        art = self.registry.get(digest)
        if art.project not in ("", project.id):
            raise errors.UnknownEntity(f"no artifact {digest} in project "
                                       f"{project.id}")
        return art

    def _require_usable(self, art: Artifact) -> None:
        if art.usable:
            return
        if art.scan.value == "Pending":
            detail = "awaiting scan verdict"
        else:
            detail = f"scan verdict {art.scan.value}"
        raise errors.InvalidConfig(
            f"artifact {art.name or art.digest} is not deployable: {detail}")

    def schedule_experiment(self, user: User, exp_id: str,
                            start_minute: int) -> Experiment:
        exp = self._experiment(exp_id)
        project = self._project(exp.project)
        self._require(user, Action.RUN_EXPERIMENT, project=project)
        if exp.state is not ExperimentState.DRAFT:
            raise errors.InvalidState(f"{exp.id} is {exp.state.value}, "
                                      "only drafts can be scheduled")
        for cfg in exp.configurations:  # verdicts may have changed since draft
            self._check_config_artifacts(project, cfg)
        self.book.reserve(exp.id, exp.nodes(), start_minute,
                          exp.duration_minutes)
        exp.start_minute = start_minute
        exp.submitted_at = self.sched.now
        self._transition(exp, ExperimentState.SCHEDULED, "reservation made")
        network = self.networks[project.network]
        if network.gated:
            self._transition(exp, ExperimentState.QUEUED_GATED,
                             "network requires operator activation")
            self.queue.enqueue(exp.id, self.sched.now)
            self.sched.after(0.0, lambda: self._validate(exp))
        else:
            self._arm_deploy(exp)
        return exp

    def activate_experiment(self, user: User, exp_id: str) -> Experiment:
        exp = self._experiment(exp_id)
        project = self._project(exp.project)
        network = self.networks[project.network]
        if not authorize(user, Action.ACTIVATE_GATED, network=network):
            raise errors.NotOperator(
                "gated experiments are activated by operators")
        if exp.state is not ExperimentState.QUEUED_GATED:
            raise errors.InvalidState(f"{exp.id} is {exp.state.value}")
        end_of_use = (exp.start_minute + exp.duration_minutes
                      - self.config.cleanup_budget_minutes) * 60.0
        if self.sched.now >= end_of_use:
            raise errors.InvalidState(
                f"reservation window for {exp.id} has already passed")
        self.queue.activate(exp.id)
        self._arm_deploy(exp)
        return exp

    def cancel_experiment(self, user: User, exp_id: str) -> Experiment:
        exp = self._experiment(exp_id)
        project = self._project(exp.project)
        self._require(user, Action.RUN_EXPERIMENT, project=project)
        if exp.state not in _PRE_DEPLOY:
            raise errors.InvalidState(
                f"{exp.id} is {exp.state.value}; use abort for experiments "
                "already on the nodes")
        self.book.cancel(exp.id)
        self.queue.remove(exp.id)
        self._transition(exp, ExperimentState.CANCELLED,
                         f"cancelled by {user.email}")
        return exp

    def abort_experiment(self, user: User, exp_id: str) -> Experiment:
        exp = self._experiment(exp_id)
        project = self._project(exp.project)
        self._require(user, Action.RUN_EXPERIMENT, project=project)
        if exp.state in _PRE_DEPLOY:
            return self.cancel_experiment(user, exp_id)
        if exp.state not in _IN_FLIGHT:
            raise errors.InvalidState(f"{exp.id} is {exp.state.value}")
        self._fail(exp, f"aborted by {user.email}")
        return exp

    def repeat_experiment(self, user: User, exp_id: str) -> Experiment:
        exp = self._experiment(exp_id)
        return self.create_experiment(
            user, exp.project,
            configurations=copy.deepcopy(exp.configurations),
            duration_minutes=exp.duration_minutes)

    def experiment_status(self, user: User, exp_id: str) -> dict:
        exp = self._experiment(exp_id)
        project = self._project(exp.project)
        self._require(user, Action.VIEW_PROJECT, project=project)
        return exp.to_dict()

    def list_experiments(self, user: User,
                         project_id: Optional[str] = None) -> list[Experiment]:
        out = []
        for exp in self.experiments.values():
            if project_id is not None and exp.project != project_id:
                continue
            project = self.projects.get(exp.project)
            if project is None:
                continue
            if authorize(user, Action.VIEW_PROJECT, project=project,
                         network=self.networks.get(project.network)):
                out.append(exp)
        return out

    def bundle_of(self, user: User, exp_id: str) -> bytes:
        exp = self._experiment(exp_id)
        project = self._project(exp.project)
        self._require(user, Action.VIEW_PROJECT, project=project)
        if not exp.results_ref:
            raise errors.NotStarted(f"{exp.id} has no results yet")
        data = self._bundles.get(exp.id)
        if data is None and self.data_dir is not None:
            path = self.data_dir / exp.results_ref
            if path.exists():
                data = path.read_bytes()
        if data is None:
            raise errors.UnknownEntity(f"result bundle for {exp.id} is gone")
        return data

    def free_nodes(self, from_minute: int, duration_minutes: int) -> list[NodeId]:
        wanted = [NodeId.parse(name) for name in sorted(self.nodes)]
        return self.book.availability(wanted, from_minute, duration_minutes)

    def monitor_snapshot(self) -> dict:
        counts = {state.value: 0 for state in ExperimentState}
        for exp in self.experiments.values():
            counts[exp.state.value] += 1
        return {
            "now": self.sched.now,
            "nodes": [n.to_dict() for _, n in sorted(self.nodes.items())],
            "experiments": counts,
            "queue": self.queue.list_entries(),
            "alerts": self.alerts[-50:],
            "broker": dict(self.broker.metrics),
            "collector": {
                "received": self.collector.received,
                "stored": self.collector.stored,
                "duplicates": self.collector.duplicates,
                "write_failures": self.collector.write_failures,
            },
        }

    # ------------------------------------------------------------ lifecycle

    def _transition(self, exp: Experiment, new: ExperimentState,
                    reason: str = "") -> None:
        if (exp.state, new) not in LEGAL_TRANSITIONS:
            raise errors.InvalidState(
                f"illegal transition {exp.state.value} -> {new.value}")
        record = {"experiment": exp.id, "from": exp.state.value,
                  "to": new.value, "at": self.sched.now, "reason": reason}
        exp.state = new
        self.transitions.append(record)
        self._snapshot(exp)
        self._emit({"event": "transition", "data": record})

    def _snapshot(self, exp: Experiment) -> None:
        self._journal.append({"type": "experiment", "at": self.sched.now,
                              "record": exp.to_dict()})

    def _arm_deploy(self, exp: Experiment) -> None:
        deploy_at = exp.start_minute * 60.0
        if deploy_at <= self.sched.now:
            self.sched.after(0.0, lambda: self._deploy(exp))
        else:
            self.sched.at(deploy_at, lambda: self._deploy(exp))

    def _validate(self, exp: Experiment) -> None:
        if exp.state is not ExperimentState.QUEUED_GATED:
            return
        self._transition(exp, ExperimentState.VALIDATING, "dry run started")
        report, passed = self._dry_run(exp)
        exp.validation = (ValidationVerdict.PASSED if passed
                          else ValidationVerdict.FAILED)
        exp.validation_report = report
        self._transition(exp, ExperimentState.QUEUED_GATED,
                         f"validation {exp.validation.value.lower()}")

    def _dry_run(self, exp: Experiment) -> tuple[str, bool]:
        """Replay the deployment on a throwaway twin fleet.

        The scratch rig shares the artifact registry (content is what we are
        vetting) but nothing else, so a misbehaving workload can only violate
        policy on a bus nobody real is attached to.
        """
        cfg = self.config
        sched = EventScheduler(start=0.0)
        broker = Broker()
        env = RadioEnvironment(sched,
                               path_loss_exponent=cfg.path_loss_exponent,
                               path_loss_at_1m_db=cfg.path_loss_at_1m_db,
                               shadowing_sigma_db=cfg.shadowing_sigma_db,
                               seed=cfg.channel_seed)
        agents: dict[str, NodeAgent] = {}
        for nid in exp.nodes():
            real = self.nodes[nid.render()]
            twin = Node(id=real.id, position=real.position,
                        network=real.network)
            agents[nid.render()] = NodeAgent(
                twin, env=env, broker=broker, sched=sched, config=cfg,
                registry=self.registry,
                factory_firmware=self.base["firmware"],
                seed=cfg.sensor_seed)

        lines: list[str] = []
        failed = False
        flashes_done = 0.0
        for c in exp.configurations:
            for nid in c.nodes:
                name = nid.render()
                agent = agents[name]
                agent.serve_control({"op": "assign",
                                     "request_id": f"dry:{name}:assign",
                                     "experiment": exp.id})
                for kind in sorted(c.firmware, key=lambda k: k.value):
                    resp = agent.serve_control({
                        "op": "flash",
                        "request_id": f"dry:{name}:{kind.value}",
                        "experiment": exp.id, "radio": kind.value,
                        "digest": c.firmware[kind]})
                    if resp.get("ok"):
                        lines.append(f"{name}: flash {kind.value} ok")
                        flashes_done = max(flashes_done, resp["completed_at"])
                    else:
                        lines.append(f"{name}: flash {kind.value} failed: "
                                     f"{resp.get('error')}")
                        failed = True
        sched.run_until(flashes_done)
        for c in exp.configurations:
            if not c.workload:
                continue
            for nid in c.nodes:
                name = nid.render()
                resp = agents[name].serve_control({
                    "op": "start_workload",
                    "request_id": f"dry:{name}:start",
                    "experiment": exp.id, "digest": c.workload,
                    "parameters": dict(c.parameters)})
                if resp.get("ok"):
                    lines.append(f"{name}: workload started")
                else:
                    lines.append(f"{name}: workload start failed: "
                                 f"{resp.get('error')}")
                    failed = True
        sched.run_for(cfg.validation_window_s)
        for name, agent in sorted(agents.items()):
            run = agent.workloads.get(exp.id)
            if run is None:
                continue
            if run.state == "faulted":
                tail = run.stdout[-1] if run.stdout else ""
                lines.append(f"{name}: workload faulted ({tail})")
                failed = True
            elif run.state == "exited" and run.exit_code != 0:
                lines.append(f"{name}: workload exited {run.exit_code}")
                failed = True
        for v in broker.violations:
            lines.append(f"acl violation: {v['identity']} on {v['topic']}")
            failed = True
        lines.append("result: fail" if failed else "result: pass")
        return "\n".join(lines), not failed

    # -------------------------------------------------------------- deploy

    def _deploy(self, exp: Experiment) -> None:
        if exp.state not in (ExperimentState.SCHEDULED,
                             ExperimentState.QUEUED_GATED):
            return
        self._transition(exp, ExperimentState.DEPLOYING,
                         "reservation window opened")
        plan = [(nid, cfg) for cfg in exp.configurations for nid in cfg.nodes]
        self._deploy_wave(exp, plan, 0)

    def _deploy_wave(self, exp: Experiment,
                     plan: list[tuple[NodeId, Configuration]],
                     offset: int) -> None:
        if exp.state is not ExperimentState.DEPLOYING:
            return
        batch = plan[offset:offset + self.config.deploy_parallelism]
        if not batch:
            self._begin_running(exp)
            return
        pending = {"count": len(batch)}

        def node_done(ok: bool, reason: str) -> None:
            if exp.state is not ExperimentState.DEPLOYING:
                return
            if not ok:
                self._fail(exp, reason)
                return
            pending["count"] -= 1
            if pending["count"] == 0:
                self._deploy_wave(exp, plan, offset + len(batch))

        for nid, cfg in batch:
            self._deploy_node(exp, nid, cfg, node_done)

    def _deploy_node(self, exp: Experiment, nid: NodeId, cfg: Configuration,
                     done: Callable[[bool, str], None]) -> None:
        name = nid.render()
        agent = self.agents.get(name)
        if agent is None:
            done(False, f"{name} has no agent registered")
            return
        max_attempts = 1 + self.config.deploy_retries

        def retry_or_fail(attempt: int, reason: str) -> None:
            if attempt >= max_attempts:
                done(False, reason)
                return
            self._retries[exp.id] = self._retries.get(exp.id, 0) + 1
            if (self._retries[exp.id] >= self.config.retry_storm_threshold
                    and exp.id not in self._storm_alerted):
                self._storm_alerted.add(exp.id)
                self.publish_alert("retry_storm", experiment=exp.id,
                                   retries=self._retries[exp.id])
            self.sched.after(1.0, lambda: attempt_deploy(attempt + 1))

        def attempt_deploy(attempt: int) -> None:
            if exp.state is not ExperimentState.DEPLOYING:
                return
            try:
                agent.serve_control({
                    "op": "assign",
                    "request_id": f"{exp.id}:{name}:assign:{attempt}",
                    "experiment": exp.id})
                flashed_by = self.sched.now
                for kind in sorted(cfg.firmware, key=lambda k: k.value):
                    resp = agent.serve_control({
                        "op": "flash",
                        "request_id": f"{exp.id}:{name}:{kind.value}:{attempt}",
                        "experiment": exp.id, "radio": kind.value,
                        "digest": cfg.firmware[kind]})
                    if not resp.get("ok"):
                        retry_or_fail(attempt,
                                      f"{name}: flash {kind.value} failed: "
                                      f"{resp.get('error')}")
                        return
                    flashed_by = max(flashed_by, resp["completed_at"])
            except errors.AgentUnreachable:
                retry_or_fail(attempt, f"{name} unreachable during deploy")
                return

            def start_step() -> None:
                if exp.state is not ExperimentState.DEPLOYING:
                    return
                if not cfg.workload:
                    done(True, "")
                    return
                try:
                    resp = agent.serve_control({
                        "op": "start_workload",
                        "request_id": f"{exp.id}:{name}:start:{attempt}",
                        "experiment": exp.id, "digest": cfg.workload,
                        "parameters": dict(cfg.parameters)})
                except errors.AgentUnreachable:
                    retry_or_fail(attempt,
                                  f"{name} unreachable during deploy")
                    return
                if not resp.get("ok"):
                    done(False, f"{name}: workload start failed: "
                                f"{resp.get('error')}")
                    return
                run = agent.workloads.get(exp.id)
                if run is not None and run.state == "faulted":
                    done(False, f"{name}: workload faulted at start")
                    return
                done(True, "")

            self.sched.at(flashed_by, start_step)

        attempt_deploy(1)

    def _begin_running(self, exp: Experiment) -> None:
        if exp.state is not ExperimentState.DEPLOYING:
            return
        self._transition(exp, ExperimentState.RUNNING, "all nodes deployed")
        collect_at = (exp.start_minute + exp.duration_minutes
                      - self.config.cleanup_budget_minutes) * 60.0
        self.sched.at(max(collect_at, self.sched.now),
                      lambda: self._collect(exp))

    # -------------------------------------------------------------- collect

    def _collect(self, exp: Experiment) -> None:
        if exp.state is not ExperimentState.RUNNING:
            return
        self._transition(exp, ExperimentState.COLLECTING,
                         "cleanup budget reached")
        for nid in exp.nodes():
            agent = self.agents.get(nid.render())
            if agent is None:
                continue
            try:
                agent.serve_control({
                    "op": "stop_workload",
                    "request_id": f"{exp.id}:{nid.render()}:stop",
                    "experiment": exp.id})
            except errors.AgentUnreachable:
                self._fail(exp, f"{nid.render()} unreachable during "
                                "collection")
                return
        self.sched.after(self.config.stop_grace_s,
                         lambda: self._finalize(exp))

    def _finalize(self, exp: Experiment) -> None:
        if exp.state is not ExperimentState.COLLECTING:
            return
        data = self.logs.bundle(exp.id)
        self._bundles[exp.id] = data
        exp.results_ref = f"bundles/{exp.id}.tar.gz"
        if self.data_dir is not None:
            path = self.data_dir / "bundles" / f"{exp.id}.tar.gz"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        self._transition(exp, ExperimentState.CLEANING_UP, "results bundled")
        self._cleanup(exp, success=True)

    # -------------------------------------------------------------- cleanup

    def _cleanup(self, exp: Experiment, *, success: bool) -> None:
        issues: list[str] = []
        done_at = self.sched.now
        for nid in exp.nodes():
            name = nid.render()
            agent = self.agents.get(name)
            if agent is None:
                issues.append(f"{name} has no agent registered")
                continue
            try:
                resp = agent.serve_control({
                    "op": "reset",
                    "request_id": f"{exp.id}:{name}:cleanup",
                    "experiment": exp.id})
                done_at = max(done_at, resp["completed_at"])
            except errors.AgentUnreachable:
                issues.append(f"{name} unreachable during cleanup")

        def finish() -> None:
            for nid in exp.nodes():
                agent = self.agents.get(nid.render())
                if agent is None or not agent.online:
                    continue
                ok, problems = agent.verify_factory()
                if not ok:
                    issues.extend(f"{nid.render()}: {p}" for p in problems)
            self.book.cancel(exp.id)
            if success and not issues:
                self._transition(exp, ExperimentState.COMPLETED,
                                 "factory state verified")
            else:
                if not exp.failure_reason:
                    exp.failure_reason = "; ".join(issues) or "cleanup failed"
                self._transition(exp, ExperimentState.FAILED,
                                 exp.failure_reason)

        self.sched.at(done_at, finish)

    def _fail(self, exp: Experiment, reason: str) -> None:
        if exp.state not in _IN_FLIGHT:
            return
        if not exp.failure_reason:
            exp.failure_reason = reason
        self._transition(exp, ExperimentState.CLEANING_UP, reason)
        self._cleanup(exp, success=False)

    # ------------------------------------------------------------- monitor

    def _monitor_tick(self) -> None:
        now = self.sched.now
        window = self.config.offline_after_beats * self.config.heartbeat_interval_s
        for name, node in self.nodes.items():
            agent = self.agents.get(name)
            seen = node.last_heartbeat
            if seen is None and agent is not None:
                seen = agent._boot_time
            if seen is None or now - seen <= window:
                continue
            if node.state is not AgentStateKind.OFFLINE:
                node.state = AgentStateKind.OFFLINE
            if name not in self._offline_alerted:
                self._offline_alerted.add(name)
                self.publish_alert("node_offline", node=name,
                                   last_heartbeat=node.last_heartbeat)

        for name, agent in self.agents.items():
            dropped = agent.power_dropped
            if dropped > self._drop_seen.get(name, 0):
                self._drop_seen[name] = dropped
                self.publish_alert("power_drop", node=name, dropped=dropped)

        for exp in list(self.experiments.values()):
            if exp.state is not ExperimentState.RUNNING:
                continue
            for nid in exp.nodes():
                name = nid.render()
                node = self.nodes.get(name)
                agent = self.agents.get(name)
                if node is None or node.state is AgentStateKind.OFFLINE:
                    self._fail(exp, f"{name} went offline during the run")
                    break
                run = agent.workloads.get(exp.id) if agent else None
                if run is not None and run.state == "faulted":
                    self._fail(exp, f"workload faulted on {name}")
                    break

    # ------------------------------------------------------------- recovery

    def _replay_experiments(self) -> None:
        for entry in self._journal.replay():
            if entry.get("type") != "experiment":
                continue
            exp = Experiment.from_dict(entry["record"])
            self.experiments[exp.id] = exp
            ordinal = int(exp.id.split("-")[1])
            self.counters["experiment"] = max(self.counters["experiment"],
                                              ordinal)

    def _recover(self, replayed: list[Experiment]) -> None:
        queued = []
        for exp in replayed:
            if exp.state in TERMINAL_STATES or exp.state is ExperimentState.DRAFT:
                continue
            if exp.state is ExperimentState.SCHEDULED:
                if exp.start_minute * 60.0 > self.sched.now:
                    self._arm_deploy(exp)
                else:
                    self.book.cancel(exp.id)
                    self._transition(exp, ExperimentState.CANCELLED,
                                     "window missed during downtime")
                continue
            if exp.state is ExperimentState.VALIDATING:
                self._transition(exp, ExperimentState.QUEUED_GATED,
                                 "validation interrupted by restart")
                exp.validation = ValidationVerdict.PENDING
            if exp.state is ExperimentState.QUEUED_GATED:
                queued.append(exp)
                continue
            if exp.state in _IN_FLIGHT:
                exp.failure_reason = "interrupted by platform restart"
                self._transition(exp, ExperimentState.CLEANING_UP,
                                 exp.failure_reason)
                self._cleanup(exp, success=False)
            elif exp.state is ExperimentState.CLEANING_UP:
                if not exp.failure_reason:
                    exp.failure_reason = "interrupted by platform restart"
                self._cleanup(exp, success=False)
        for exp in sorted(queued, key=lambda e: e.submitted_at):
            self.queue.enqueue(exp.id, exp.submitted_at)
            if exp.validation is ValidationVerdict.PENDING:
                self.sched.after(0.0, lambda e=exp: self._validate(e))

    # -------------------------------------------------------------- lookups

    def _user(self, user_id: str) -> User:
        user = self.users.get(user_id)
        if user is None:
            raise errors.UnknownEntity(f"no user {user_id}")
        return user

    def _network(self, name: str) -> Network:
        net = self.networks.get(name)
        if net is None:
            raise errors.UnknownEntity(f"no network named {name!r}")
        return net

    def _project(self, project_id: str) -> Project:
        project = self.projects.get(project_id)
        if project is None:
            raise errors.UnknownEntity(f"no project {project_id}")
        return project

    def _experiment(self, exp_id: str) -> Experiment:
        exp = self.experiments.get(exp_id)
        if exp is None:
            raise errors.UnknownEntity(f"no experiment {exp_id}")
        return exp

    def _require(self, user: User, action: Action,
                 project: Optional[Project] = None,
                 network: Optional[Network] = None) -> None:
        if project is not None and network is None:
            network = self.networks.get(project.network)
        if not authorize(user, action, project=project, network=network):
            raise errors.Denied(f"{user.email} may not {action.value}")
