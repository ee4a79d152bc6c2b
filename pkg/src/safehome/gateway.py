"""The runnable gateway: configuration, window sources, the periodic
evaluation tick, and scenario execution.

A tick is one full pass: sync leases, advance the RSSI source, evaluate
every CAD, compile and emit rule scripts for devices whose enforcement
changed, persist, publish a status snapshot. Stage failures degrade the
tick (flagged in the snapshot) instead of aborting it.
"""

from __future__ import annotations

import json
import os
import threading
from collections import deque
from dataclasses import dataclass, field, fields as dataclass_fields
from datetime import datetime, timedelta, timezone
from importlib import resources
from typing import Optional, Sequence

from .enforcement import emit_dns_policy, emit_script, compile_rules, load_domain_list
from .errors import ConfigurationError, ValidationError
from .ingest import CalendarConfig, load_calendar, parse_lease_file
from .model import (
    AccessLevel,
    CalendarEvent,
    Device,
    DeviceId,
    DeviceRole,
    PairWindow,
    PolicyDecision,
    RssiSample,
    ScheduleRule,
    default_access_for_role,
    format_timestamp,
)
from .policy import HysteresisState, evaluate_all
from .proximity import (
    Classifier,
    LogisticClassifier,
    ThresholdClassifier,
    load_model,
)
from .registry import (
    Registry,
    load_registry,
    save_registry,
    set_access,
    set_role,
    sync_registry,
)
from .sim import (
    FloorPlan,
    PathLossParams,
    ScenarioSpec,
    SIM_EPOCH,
    TICK_SECONDS,
    default_floor_plan,
    read_trace,
    simulate_scenario,
)

ENV_PREFIX = "SAFEHOME_"


@dataclass
class GatewayConfig:
    """Flat gateway configuration; every key can be overridden by an
    environment variable ``SAFEHOME_<UPPER_KEY>``."""

    lan_cidr: str = "192.168.4.0/24"
    tick_interval: float = 2.0
    sensitivity_x: int = 10
    consecutive_required: int = 3
    lease_path: Optional[str] = None
    registry_path: str = "registry.json"
    schedules_path: Optional[str] = None
    decision_log_path: Optional[str] = None
    rules_dir: Optional[str] = None
    emit_backend: str = "netfilter"
    calendar_provider: str = "none"
    calendar_path: Optional[str] = None
    calendar_url: Optional[str] = None
    calendar_timeout_s: float = 5.0
    classifier: str = "logistic"
    model_path: Optional[str] = None
    threshold_db: float = 10.0
    trace_path: Optional[str] = None
    allowlist_path: Optional[str] = None
    denylist_path: Optional[str] = None
    scenario_path: Optional[str] = None
    scenarios_dir: Optional[str] = None
    api_bind: str = "127.0.0.1:8787"
    console_dir: Optional[str] = None
    seed: int = 1
    sim_p0_dbm: float = -40.0
    sim_d0_m: float = 1.0
    sim_exponent_n: float = 2.5
    sim_shadow_sigma_db: float = 4.0

    def __post_init__(self) -> None:
        if self.tick_interval < 1.0:
            raise ValidationError("tick_interval must be >= 1 second")
        if self.sensitivity_x < 1:
            raise ValidationError("sensitivity_x must be >= 1")
        if self.consecutive_required < 1:
            raise ValidationError("consecutive_required must be >= 1")
        if self.classifier not in ("logistic", "threshold"):
            raise ValidationError(f"unknown classifier {self.classifier!r}")

    @property
    def scenario_mode(self) -> bool:
        return self.scenario_path is not None

    def path_loss_params(self) -> PathLossParams:
        return PathLossParams(
            p0_dbm=self.sim_p0_dbm,
            d0_m=self.sim_d0_m,
            exponent_n=self.sim_exponent_n,
            shadow_sigma_db=self.sim_shadow_sigma_db,
        )

    def calendar_config(self) -> CalendarConfig:
        return CalendarConfig(
            provider=self.calendar_provider,
            path=self.calendar_path,
            url=self.calendar_url,
            timeout_s=self.calendar_timeout_s,
        )


def _coerce(raw: str, target_type) -> object:
    if target_type is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw


def load_config(path: Optional[str] = None) -> GatewayConfig:
    """Config file (flat JSON object) merged with SAFEHOME_* environment
    overrides; either source is optional."""
    values: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                document = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"bad config file {path}: {exc}") from exc
        if not isinstance(document, dict):
            raise ConfigurationError("config file must hold a single flat JSON object")
        values.update(document)

    known = {f.name: f.type for f in dataclass_fields(GatewayConfig)}
    unknown = set(values) - set(known)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")

    for config_field in dataclass_fields(GatewayConfig):
        env_key = ENV_PREFIX + config_field.name.upper()
        if env_key in os.environ:
            base = {"int": int, "float": float, "str": str, "bool": bool}.get(
                str(config_field.type).replace("Optional[", "").rstrip("]"), str
            )
            values[config_field.name] = _coerce(os.environ[env_key], base)

    try:
        return GatewayConfig(**values)
    except TypeError as exc:
        raise ConfigurationError(f"bad config: {exc}") from exc


# ---------------------------------------------------------------------------
# window sources
# ---------------------------------------------------------------------------

class BufferedWindowSource:
    """Keeps the trailing X samples per device and serves interleaved
    (CAD, GD) windows once both buffers are full."""

    def __init__(self, sensitivity_x: int):
        if sensitivity_x < 1:
            raise ValidationError("sensitivity_x must be >= 1")
        self.sensitivity_x = sensitivity_x
        self._buffers: dict[DeviceId, deque[RssiSample]] = {}
        self._online: frozenset[DeviceId] = frozenset()

    def ingest(self, samples: Sequence[RssiSample]) -> None:
        seen = set()
        for sample in samples:
            buffer = self._buffers.setdefault(
                sample.device, deque(maxlen=self.sensitivity_x)
            )
            buffer.append(sample)
            seen.add(sample.device)
        self._online = frozenset(seen)

    def online(self) -> frozenset[DeviceId]:
        return self._online

    def window(self, cad: DeviceId, gd: DeviceId) -> Optional[PairWindow]:
        cad_buffer = self._buffers.get(cad)
        gd_buffer = self._buffers.get(gd)
        if cad_buffer is None or gd_buffer is None:
            return None
        if len(cad_buffer) < self.sensitivity_x or len(gd_buffer) < self.sensitivity_x:
            return None
        interleaved = []
        for cad_sample, gd_sample in zip(cad_buffer, gd_buffer):
            interleaved.append(cad_sample)
            interleaved.append(gd_sample)
        return PairWindow(
            cad=cad, gd=gd, samples=tuple(interleaved), sensitivity_x=self.sensitivity_x
        )


class SimulatedWindowSource(BufferedWindowSource):
    """Feeds scenario samples one simulated tick at a time, looping when the
    scripted duration is exhausted (so ``serve`` can run indefinitely)."""

    def __init__(
        self,
        spec: ScenarioSpec,
        plan: FloorPlan,
        params: PathLossParams,
        seed: int,
        sensitivity_x: int,
    ):
        super().__init__(sensitivity_x)
        self._by_tick: dict[int, list[RssiSample]] = {}
        for sample in simulate_scenario(spec, plan, params, seed):
            tick = int((sample.at - SIM_EPOCH).total_seconds() / TICK_SECONDS)
            self._by_tick.setdefault(tick, []).append(sample)
        self._duration = spec.duration_ticks
        self._cursor = 0

    def advance(self) -> None:
        self.ingest(self._by_tick.get(self._cursor % self._duration, []))
        self._cursor += 1


class ReplayWindowSource(BufferedWindowSource):
    """Replays a recorded JSON-lines trace, one distinct timestamp per tick;
    after the trace ends every device goes offline."""

    def __init__(self, trace_path: str, sensitivity_x: int):
        super().__init__(sensitivity_x)
        groups: dict[datetime, list[RssiSample]] = {}
        for sample in read_trace(trace_path):
            groups.setdefault(sample.at, []).append(sample)
        self._ticks = [groups[at] for at in sorted(groups)]
        self._cursor = 0

    def advance(self) -> None:
        batch = self._ticks[self._cursor] if self._cursor < len(self._ticks) else []
        self.ingest(batch)
        self._cursor += 1


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioFile:
    """A shipped scenario: the placement spec plus the device roster the
    guardian would have classified during setup."""

    spec: ScenarioSpec
    devices: tuple[Device, ...]
    media_flags: dict[DeviceId, bool]
    description: str = ""


def load_scenario_data(data: dict) -> ScenarioFile:
    devices = []
    media: dict[DeviceId, bool] = {}
    for entry in data.get("devices", []):
        role = DeviceRole(entry["role"])
        device = Device(
            id=DeviceId(entry["id"]),
            role=role,
            access=default_access_for_role(role),
            ip=entry["ip"],
            hostname=entry.get("hostname", ""),
            last_seen=SIM_EPOCH,
        )
        devices.append(device)
        media[device.id] = bool(entry.get("media", False))

    known = {d.id for d in devices}
    placements = {}
    for mac, pos in data.get("placements", {}).items():
        device_id = DeviceId(mac)
        if device_id not in known:
            raise ConfigurationError(f"placement references unknown device {mac}")
        placements[device_id] = tuple(pos) if pos is not None else None

    spec = ScenarioSpec(
        scenario_id=int(data["scenario_id"]),
        placements=placements,
        calendar_event_active=bool(data.get("calendar_event_active", False)),
        duration_ticks=int(data.get("duration_ticks", 20)),
    )
    return ScenarioFile(
        spec=spec,
        devices=tuple(devices),
        media_flags=media,
        description=str(data.get("description", "")),
    )


def load_scenario_file(path: str) -> ScenarioFile:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario_data(json.load(fh))


def packaged_scenario(scenario_id: int) -> ScenarioFile:
    """One of the six scenario files shipped inside the package."""
    if scenario_id not in range(1, 7):
        raise ValidationError(f"scenario id must be 1..6, got {scenario_id}")
    ref = resources.files("safehome").joinpath(f"scenarios/scenario_{scenario_id}.json")
    return load_scenario_data(json.loads(ref.read_text(encoding="utf-8")))


def default_domain_lists() -> tuple[tuple[str, ...], tuple[str, ...]]:
    allow = resources.files("safehome").joinpath("data/allowlist.txt")
    deny = resources.files("safehome").joinpath("data/denylist.txt")
    from .enforcement import normalize_domains

    parse = lambda text: normalize_domains(
        line.strip() for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    )
    return parse(allow.read_text(encoding="utf-8")), parse(deny.read_text(encoding="utf-8"))


def scenario_calendar(spec: ScenarioSpec) -> list[CalendarEvent]:
    if not spec.calendar_event_active:
        return []
    return [
        CalendarEvent(
            start=SIM_EPOCH - timedelta(hours=1),
            end=SIM_EPOCH + timedelta(days=10),
            title="guardian-out",
        )
    ]


def run_scenario(
    scenario: ScenarioFile,
    classifier: Classifier,
    plan: Optional[FloorPlan] = None,
    params: Optional[PathLossParams] = None,
    sensitivity_x: int = 10,
    consecutive_required: int = 3,
    seed: int = 1,
) -> list[list[PolicyDecision]]:
    """Run a scenario end to end in memory; returns the decision list of
    every tick (the last entry is the settled outcome)."""
    plan = plan or default_floor_plan()
    params = params or PathLossParams()
    source = SimulatedWindowSource(scenario.spec, plan, params, seed, sensitivity_x)
    hysteresis = HysteresisState(consecutive_required=consecutive_required)
    last_decisions: dict[DeviceId, PolicyDecision] = {}
    events = scenario_calendar(scenario.spec)

    timeline = []
    for tick in range(scenario.spec.duration_ticks):
        now = SIM_EPOCH + timedelta(seconds=tick * TICK_SECONDS)
        source.advance()
        decisions = evaluate_all(
            scenario.devices,
            scenario.media_flags,
            source,
            events,
            [],
            classifier,
            hysteresis,
            now,
            last_decisions,
        )
        timeline.append(decisions)
    return timeline


# ---------------------------------------------------------------------------
# the gateway proper
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StatusSnapshot:
    """Consistent view published after each tick; API reads serve the most
    recently published snapshot without blocking the tick."""

    tick: int
    at: datetime
    registry_version: int
    degraded: tuple[str, ...]
    scripts_written: int
    scenario_id: Optional[int]
    devices: tuple[Device, ...]
    media: dict[DeviceId, bool]
    decisions: dict[DeviceId, PolicyDecision]

    def to_dict(self) -> dict:
        return {
            "tick": self.tick,
            "at": format_timestamp(self.at),
            "registry_version": self.registry_version,
            "degraded": list(self.degraded),
            "scripts_written": self.scripts_written,
            "scenario_mode": self.scenario_id is not None,
            "scenario_id": self.scenario_id,
            "devices": [
                {**d.to_dict(), "media": bool(self.media.get(d.id, False))}
                for d in self.devices
            ],
            "decisions": {str(cad): d.to_dict() for cad, d in self.decisions.items()},
        }


class Gateway:
    """Single-writer gateway state machine.

    The tick loop and admin mutations serialize on one lock; API readers
    consume the immutable snapshot reference without taking it.
    """

    def __init__(self, config: GatewayConfig):
        self.config = config
        self.lock = threading.RLock()
        self.plan = default_floor_plan()
        self.params = config.path_loss_params()

        self.registry = (
            load_registry(config.registry_path)
            if os.path.exists(config.registry_path)
            else Registry()
        )
        self.schedules: list[ScheduleRule] = self._load_schedules()
        self.hysteresis = HysteresisState(consecutive_required=config.consecutive_required)
        self.last_decisions: dict[DeviceId, PolicyDecision] = {}
        self.last_rulesets: dict[DeviceId, object] = {}
        self.tick_counter = 0
        self._logged_decisions: dict[DeviceId, PolicyDecision] = {}

        allowlist, denylist = default_domain_lists()
        if config.allowlist_path:
            allowlist = load_domain_list(config.allowlist_path)
        if config.denylist_path:
            denylist = load_domain_list(config.denylist_path)
        self.allowlist, self.denylist = allowlist, denylist

        self.classifier: Optional[Classifier] = None
        self.classifier_error: Optional[str] = None
        self._load_classifier()

        self.scenario: Optional[ScenarioFile] = None
        self.source: Optional[BufferedWindowSource] = None
        if config.scenario_mode:
            self._enter_scenario(load_scenario_file(config.scenario_path))
        elif config.trace_path:
            self.source = ReplayWindowSource(config.trace_path, config.sensitivity_x)

        self._snapshot = self._build_snapshot(
            at=self._now_for_tick(0), degraded=(), scripts_written=0
        )

    # -- setup helpers ----------------------------------------------------

    def _load_schedules(self) -> list[ScheduleRule]:
        path = self._schedules_path()
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as fh:
                return [ScheduleRule.from_dict(item) for item in json.load(fh)]
        return []

    def _schedules_path(self) -> Optional[str]:
        if self.config.schedules_path:
            return self.config.schedules_path
        base = os.path.dirname(os.path.abspath(self.config.registry_path))
        return os.path.join(base, "schedules.json")

    def _decision_log_path(self) -> str:
        if self.config.decision_log_path:
            return self.config.decision_log_path
        base = os.path.dirname(os.path.abspath(self.config.registry_path))
        return os.path.join(base, "decisions.jsonl")

    def _rules_dir(self) -> str:
        if self.config.rules_dir:
            return self.config.rules_dir
        base = os.path.dirname(os.path.abspath(self.config.registry_path))
        return os.path.join(base, "rules")

    def _load_classifier(self) -> None:
        if self.config.classifier == "threshold":
            self.classifier = ThresholdClassifier(near_max_diff_db=self.config.threshold_db)
            return
        if not self.config.model_path:
            self.classifier_error = "no model_path configured"
            return
        try:
            self.classifier = LogisticClassifier(load_model(self.config.model_path))
        except (OSError, ValidationError, ValueError) as exc:
            self.classifier_error = f"model unavailable: {exc}"

    def _enter_scenario(self, scenario: ScenarioFile) -> None:
        self.scenario = scenario
        self.source = SimulatedWindowSource(
            scenario.spec, self.plan, self.params, self.config.seed,
            self.config.sensitivity_x,
        )
        # Seed the registry as if the guardian had classified these devices
        # during setup; existing classifications are preserved.
        for device in scenario.devices:
            if device.id not in self.registry.devices:
                devices = dict(self.registry.devices)
                devices[device.id] = device
                media = dict(self.registry.media_flags)
                if scenario.media_flags.get(device.id):
                    media[device.id] = True
                self.registry = Registry(
                    devices=devices, media_flags=media,
                    version=self.registry.version + 1,
                )
        self.hysteresis.reset()

    def switch_scenario(self, scenario_id: int) -> None:
        """Load another shipped (or scenarios_dir) scenario; scenario mode only."""
        with self.lock:
            if not self.config.scenario_mode:
                raise ConfigurationError("gateway is not in scenario mode")
            if self.config.scenarios_dir:
                path = os.path.join(
                    self.config.scenarios_dir, f"scenario_{scenario_id}.json"
                )
                scenario = load_scenario_file(path)
            else:
                scenario = packaged_scenario(scenario_id)
            self._enter_scenario(scenario)

    # -- time -------------------------------------------------------------

    def _now_for_tick(self, tick: int) -> datetime:
        if self.config.scenario_mode:
            return SIM_EPOCH + timedelta(seconds=tick * TICK_SECONDS)
        return datetime.now(timezone.utc)

    # -- the tick ---------------------------------------------------------

    def tick(self, now: Optional[datetime] = None) -> StatusSnapshot:
        with self.lock:
            self.tick_counter += 1
            at = now if now is not None else self._now_for_tick(self.tick_counter - 1)
            degraded: list[str] = []

            self._sync_leases(at, degraded)
            events = self._calendar_events(at, degraded)

            if self.source is not None:
                self.source.advance()
            if self.classifier is None and self.classifier_error:
                degraded.append(f"classifier: {self.classifier_error}")

            decisions = evaluate_all(
                self.registry.snapshot_devices(),
                self.registry.media_flags,
                self.source,
                events,
                self.schedules,
                self.classifier,
                self.hysteresis,
                at,
                self.last_decisions,
            )

            self._apply_decision_levels(decisions, degraded)
            scripts_written = self._emit_changed_rulesets(degraded)
            self._log_decisions(decisions, degraded)
            self._persist_registry(degraded)

            snapshot = self._build_snapshot(
                at=at, degraded=tuple(degraded), scripts_written=scripts_written
            )
            self._snapshot = snapshot
            return snapshot

    def _sync_leases(self, now: datetime, degraded: list[str]) -> None:
        if not self.config.lease_path:
            return
        try:
            with open(self.config.lease_path, "rb") as fh:
                leases, _warnings = parse_lease_file(fh.read())
        except OSError as exc:
            degraded.append(f"lease-file: {exc}")
            return
        self.registry = sync_registry(self.registry, leases, now)

    def _calendar_events(self, now: datetime, degraded: list[str]) -> list[CalendarEvent]:
        if self.scenario is not None:
            return scenario_calendar(self.scenario.spec)
        events, calendar_degraded = load_calendar(
            self.config.calendar_config(),
            now - timedelta(days=1),
            now + timedelta(days=1),
        )
        if calendar_degraded:
            degraded.append("calendar: provider unreachable, treating guardian as home")
        return events

    def _apply_decision_levels(
        self, decisions: Sequence[PolicyDecision], degraded: list[str]
    ) -> None:
        for decision in decisions:
            try:
                self.registry = set_access(self.registry, decision.cad, decision.access)
            except ValidationError as exc:
                degraded.append(f"registry: {exc}")

    def _emit_changed_rulesets(self, degraded: list[str]) -> int:
        rules_dir = self._rules_dir()
        written = 0
        for device in self.registry.snapshot_devices():
            try:
                ruleset = compile_rules(
                    device, device.access, self.config.lan_cidr,
                    self.allowlist, self.denylist,
                )
            except ConfigurationError as exc:
                degraded.append(f"enforcement {device.id}: {exc}")
                continue
            if self.last_rulesets.get(device.id) == ruleset:
                continue
            try:
                os.makedirs(rules_dir, exist_ok=True)
                script = emit_script(ruleset, self.config.emit_backend)
                with open(os.path.join(rules_dir, f"{ruleset.chain}.rules"), "w",
                          encoding="utf-8") as fh:
                    fh.write(script)
                with open(os.path.join(rules_dir, f"{ruleset.chain}.dns"), "w",
                          encoding="utf-8") as fh:
                    fh.write(emit_dns_policy(ruleset.dns_policy))
            except (OSError, ConfigurationError) as exc:
                degraded.append(f"enforcement {device.id}: {exc}")
                continue
            self.last_rulesets[device.id] = ruleset
            written += 1
        return written

    @staticmethod
    def _decision_core(decision: PolicyDecision) -> tuple:
        # log-worthy content: everything but the evaluation timestamp
        return (decision.access, decision.actions, decision.factors)

    def _log_decisions(self, decisions: Sequence[PolicyDecision], degraded: list[str]) -> None:
        changed = [
            d for d in decisions
            if self._logged_decisions.get(d.cad) is None
            or self._decision_core(self._logged_decisions[d.cad]) != self._decision_core(d)
        ]
        if not changed:
            return
        try:
            path = self._decision_log_path()
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, "a", encoding="utf-8") as fh:
                for decision in changed:
                    fh.write(json.dumps(decision.to_dict(), sort_keys=True) + "\n")
                    self._logged_decisions[decision.cad] = decision
        except OSError as exc:
            degraded.append(f"decision-log: {exc}")

    def _persist_registry(self, degraded: list[str]) -> None:
        try:
            save_registry(self.registry, self.config.registry_path)
        except OSError as exc:
            degraded.append(f"registry-store: {exc}")

    def _build_snapshot(
        self, at: datetime, degraded: tuple[str, ...], scripts_written: int
    ) -> StatusSnapshot:
        decisions = {
            cad: decision
            for cad, decision in self.last_decisions.items()
            if cad in self.registry.devices
        }
        return StatusSnapshot(
            tick=self.tick_counter,
            at=at,
            registry_version=self.registry.version,
            degraded=degraded,
            scripts_written=scripts_written,
            scenario_id=self.scenario.spec.scenario_id if self.scenario else None,
            devices=self.registry.snapshot_devices(),
            media=dict(self.registry.media_flags),
            decisions=decisions,
        )

    # -- reads ------------------------------------------------------------

    @property
    def snapshot(self) -> StatusSnapshot:
        return self._snapshot

    def recent_decisions(self, limit: int = 50) -> list[dict]:
        path = self._decision_log_path()
        if not os.path.exists(path):
            return []
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
        return [json.loads(line) for line in lines[-max(0, limit):]]

    # -- admin mutations ---------------------------------------------------

    def set_device_role(
        self,
        device_id: DeviceId,
        role: DeviceRole,
        media: Optional[bool] = None,
        access: Optional[AccessLevel] = None,
    ) -> Device:
        with self.lock:
            self.registry = set_role(self.registry, device_id, role, media=media, access=access)
            # Any standing decision for a device that is no longer a CAD is dropped.
            if role is not DeviceRole.CAD:
                self.last_decisions.pop(device_id, None)
                self.hysteresis.reset(device_id)
            self._persist_registry([])
            return self.registry.devices[device_id]

    def set_schedules(self, rules: Sequence[ScheduleRule]) -> None:
        with self.lock:
            self.schedules = list(rules)
            path = self._schedules_path()
            if path:
                os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump([r.to_dict() for r in rules], fh, indent=2)
                    fh.write("\n")
