"""Shared domain types for the access-control gateway.

Every type here is an immutable value object that validates its own
invariants on construction, and round-trips through a stable JSON form
(``to_dict`` / ``from_dict``).  Timestamps serialize as RFC 3339 strings
in UTC; enums serialize as lower-case strings.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from datetime import datetime, time, timezone
from enum import Enum
from typing import Optional

from .errors import ValidationError

_MAC_RE = re.compile(r"^([0-9a-f]{2}:){5}[0-9a-f]{2}$")

RSSI_MIN = -120
RSSI_MAX = 0


# ---------------------------------------------------------------------------
# timestamps
# ---------------------------------------------------------------------------

def format_timestamp(dt: datetime) -> str:
    """Render a UTC datetime as an RFC 3339 string (``2024-01-01T12:00:00Z``)."""
    if dt.tzinfo is None:
        raise ValidationError("timestamps must be timezone-aware")
    dt = dt.astimezone(timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.%f").rstrip("0") + "Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    if not isinstance(text, str):
        raise ValidationError(f"timestamp must be a string, got {type(text).__name__}")
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValidationError(f"bad timestamp {text!r}: {exc}") from exc
    if dt.tzinfo is None:
        raise ValidationError(f"timestamp {text!r} has no timezone")
    return dt.astimezone(timezone.utc)


def format_time_of_day(t: time) -> str:
    return t.strftime("%H:%M:%S") if t.second else t.strftime("%H:%M")


def parse_time_of_day(text: str) -> time:
    for fmt in ("%H:%M", "%H:%M:%S"):
        try:
            return datetime.strptime(text, fmt).time()
        except ValueError:
            continue
    raise ValidationError(f"bad time of day {text!r} (expected HH:MM or HH:MM:SS)")


# ---------------------------------------------------------------------------
# identity and roles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class DeviceId:
    """Canonical lower-case MAC address, the registry key for a device."""

    value: str

    def __post_init__(self) -> None:
        if not isinstance(self.value, str):
            raise ValidationError("device id must be a string")
        normalized = self.value.strip().lower().replace("-", ":")
        if not _MAC_RE.match(normalized):
            raise ValidationError(f"not a MAC address: {self.value!r}")
        object.__setattr__(self, "value", normalized)

    def __str__(self) -> str:
        return self.value

    @property
    def chain_suffix(self) -> str:
        """Last 4 hex digits, used to scope per-device firewall chains."""
        return self.value.replace(":", "")[-4:]


class DeviceRole(str, Enum):
    CAD = "cad"            # child-accessible device
    GD = "gd"              # guardian's device
    ACTUATOR = "actuator"  # local-only smart plug / light
    UNKNOWN = "unknown"    # never classified by the guardian


class AccessLevel(str, Enum):
    NO_ACCESS = "no_access"
    LOCAL_ONLY = "local_only"
    LIMITED_INTERNET = "limited_internet"
    ELEVATED_INTERNET = "elevated_internet"
    FULL_ACCESS = "full_access"


_ACCESS_RANK = {
    AccessLevel.NO_ACCESS: 0,
    AccessLevel.LOCAL_ONLY: 1,
    AccessLevel.LIMITED_INTERNET: 2,
    AccessLevel.ELEVATED_INTERNET: 3,
    AccessLevel.FULL_ACCESS: 4,
}

# Access a role is pinned to; CAD floats between limited and elevated.
_ROLE_ACCESS = {
    DeviceRole.GD: AccessLevel.FULL_ACCESS,
    DeviceRole.ACTUATOR: AccessLevel.LOCAL_ONLY,
    DeviceRole.UNKNOWN: AccessLevel.NO_ACCESS,
}

CAD_LEVELS = frozenset({AccessLevel.LIMITED_INTERNET, AccessLevel.ELEVATED_INTERNET})


def access_rank(level: AccessLevel) -> int:
    """Position of ``level`` in the five-step order, 0 (no access) .. 4 (full)."""
    return _ACCESS_RANK[level]


def default_access_for_role(role: DeviceRole) -> AccessLevel:
    """Access level a freshly (re)classified device starts at."""
    if role is DeviceRole.CAD:
        return AccessLevel.LIMITED_INTERNET
    return _ROLE_ACCESS[role]


def validate_role_access(role: DeviceRole, access: AccessLevel) -> None:
    if role is DeviceRole.CAD:
        if access not in CAD_LEVELS:
            raise ValidationError(
                f"a CAD must be at limited or elevated internet access, not {access.value}"
            )
    elif _ROLE_ACCESS[role] is not access:
        raise ValidationError(
            f"role {role.value} is pinned to {_ROLE_ACCESS[role].value}, not {access.value}"
        )


def _validate_ipv4(ip: str) -> str:
    try:
        return str(ipaddress.IPv4Address(ip))
    except (ipaddress.AddressValueError, ValueError) as exc:
        raise ValidationError(f"bad IPv4 address {ip!r}") from exc


@dataclass(frozen=True)
class Device:
    """A network client known to the gateway."""

    id: DeviceId
    role: DeviceRole
    access: AccessLevel
    ip: str
    hostname: str
    last_seen: datetime

    def __post_init__(self) -> None:
        validate_role_access(self.role, self.access)
        object.__setattr__(self, "ip", _validate_ipv4(self.ip))
        if self.last_seen.tzinfo is None:
            raise ValidationError("last_seen must be timezone-aware")

    def to_dict(self) -> dict:
        return {
            "id": self.id.value,
            "role": self.role.value,
            "access": self.access.value,
            "ip": self.ip,
            "hostname": self.hostname,
            "last_seen": format_timestamp(self.last_seen),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Device":
        return cls(
            id=DeviceId(data["id"]),
            role=DeviceRole(data["role"]),
            access=AccessLevel(data["access"]),
            ip=data["ip"],
            hostname=data["hostname"],
            last_seen=parse_timestamp(data["last_seen"]),
        )


# ---------------------------------------------------------------------------
# RSSI observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RssiSample:
    """One signal-strength reading for a device, as seen by the access point."""

    device: DeviceId
    rssi: int
    at: datetime

    def __post_init__(self) -> None:
        if not isinstance(self.rssi, int) or isinstance(self.rssi, bool):
            raise ValidationError(f"rssi must be an integer dBm value, got {self.rssi!r}")
        if not RSSI_MIN <= self.rssi <= RSSI_MAX:
            raise ValidationError(f"rssi {self.rssi} outside [{RSSI_MIN}, {RSSI_MAX}] dBm")
        if self.at.tzinfo is None:
            raise ValidationError("sample timestamp must be timezone-aware")

    def to_dict(self) -> dict:
        return {"device": self.device.value, "rssi": self.rssi, "at": format_timestamp(self.at)}

    @classmethod
    def from_dict(cls, data: dict) -> "RssiSample":
        return cls(device=DeviceId(data["device"]), rssi=int(data["rssi"]), at=parse_timestamp(data["at"]))


@dataclass(frozen=True)
class PairWindow:
    """A classification window: X interleaved (CAD, GD) sample pairs.

    Even indices hold the CAD's samples, odd indices the GD's.
    """

    cad: DeviceId
    gd: DeviceId
    samples: tuple[RssiSample, ...]
    sensitivity_x: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.sensitivity_x < 1:
            raise ValidationError("sensitivity_x must be >= 1")
        if len(self.samples) != 2 * self.sensitivity_x:
            raise ValidationError(
                f"window must hold {2 * self.sensitivity_x} samples, got {len(self.samples)}"
            )
        for i, sample in enumerate(self.samples):
            expected = self.cad if i % 2 == 0 else self.gd
            if sample.device != expected:
                raise ValidationError(
                    f"sample {i} belongs to {sample.device}, expected {expected}"
                )

    def to_dict(self) -> dict:
        return {
            "cad": self.cad.value,
            "gd": self.gd.value,
            "samples": [s.to_dict() for s in self.samples],
            "sensitivity_x": self.sensitivity_x,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PairWindow":
        return cls(
            cad=DeviceId(data["cad"]),
            gd=DeviceId(data["gd"]),
            samples=tuple(RssiSample.from_dict(s) for s in data["samples"]),
            sensitivity_x=int(data["sensitivity_x"]),
        )


def anonymize(window: PairWindow) -> tuple[int, ...]:
    """Strip device identifiers from a window, keeping only the interleaved
    RSSI values in their original order.

    The result is what a training record stores and what the classifier sees;
    MAC addresses never leave this boundary.
    """
    return tuple(sample.rssi for sample in window.samples)


@dataclass(frozen=True)
class Label:
    """Near/far ground truth or prediction: true means near."""

    near: bool

    def to_dict(self) -> dict:
        return {"near": self.near}

    @classmethod
    def from_dict(cls, data: dict) -> "Label":
        return cls(near=bool(data["near"]))


@dataclass(frozen=True)
class TrainingRecord:
    """An anonymized window plus its label. Carries no device identity."""

    rssi_values: tuple[int, ...]
    label: Label

    def __post_init__(self) -> None:
        object.__setattr__(self, "rssi_values", tuple(int(v) for v in self.rssi_values))
        if len(self.rssi_values) < 2 or len(self.rssi_values) % 2 != 0:
            raise ValidationError(
                f"training record needs an even number (>= 2) of values, got {len(self.rssi_values)}"
            )

    def to_dict(self) -> dict:
        return {"rssi_values": list(self.rssi_values), "label": self.label.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingRecord":
        return cls(rssi_values=tuple(data["rssi_values"]), label=Label.from_dict(data["label"]))


# ---------------------------------------------------------------------------
# schedule and calendar
# ---------------------------------------------------------------------------

class Weekday(str, Enum):
    MON = "mon"
    TUE = "tue"
    WED = "wed"
    THU = "thu"
    FRI = "fri"
    SAT = "sat"
    SUN = "sun"

    @property
    def index(self) -> int:
        return _WEEKDAY_ORDER.index(self)


_WEEKDAY_ORDER = [Weekday.MON, Weekday.TUE, Weekday.WED, Weekday.THU,
                  Weekday.FRI, Weekday.SAT, Weekday.SUN]


@dataclass(frozen=True)
class ScheduleRule:
    """Guardian-configured allow window. Cross-midnight ranges are two rules."""

    days: frozenset[Weekday]
    start: time
    end: time

    def __post_init__(self) -> None:
        object.__setattr__(self, "days", frozenset(self.days))
        if not self.days:
            raise ValidationError("schedule rule needs at least one weekday")
        if not self.start < self.end:
            raise ValidationError(
                f"schedule start {self.start} must precede end {self.end} within one day"
            )

    def to_dict(self) -> dict:
        return {
            "days": [d.value for d in sorted(self.days, key=lambda d: d.index)],
            "start": format_time_of_day(self.start),
            "end": format_time_of_day(self.end),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleRule":
        return cls(
            days=frozenset(Weekday(d) for d in data["days"]),
            start=parse_time_of_day(data["start"]),
            end=parse_time_of_day(data["end"]),
        )


@dataclass(frozen=True)
class CalendarEvent:
    start: datetime
    end: datetime
    title: str

    def __post_init__(self) -> None:
        if self.start.tzinfo is None or self.end.tzinfo is None:
            raise ValidationError("calendar events must be timezone-aware")
        if not self.start < self.end:
            raise ValidationError("calendar event must start before it ends")

    def to_dict(self) -> dict:
        return {
            "start": format_timestamp(self.start),
            "end": format_timestamp(self.end),
            "title": self.title,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalendarEvent":
        return cls(
            start=parse_timestamp(data["start"]),
            end=parse_timestamp(data["end"]),
            title=str(data.get("title", "")),
        )


# ---------------------------------------------------------------------------
# policy outcomes
# ---------------------------------------------------------------------------

class DeviceAction(str, Enum):
    LOCK_VOLUME = "lock_volume"
    UNLOCK_VOLUME = "unlock_volume"


@dataclass(frozen=True)
class DecisionFactors:
    """The inputs that produced a decision, recorded verbatim.

    ``guardian_near`` is None when no guardian device was online to classify
    against (or proximity was skipped because the calendar already says the
    guardian is out).
    """

    schedule_allows: bool
    guardian_away: bool
    guardian_near: Optional[bool] = None
    nearest_gd: Optional[DeviceId] = None

    def __post_init__(self) -> None:
        if self.guardian_away and self.guardian_near is True:
            raise ValidationError(
                "guardian cannot be classified near while the calendar says away"
            )

    def to_dict(self) -> dict:
        return {
            "schedule_allows": self.schedule_allows,
            "guardian_away": self.guardian_away,
            "guardian_near": self.guardian_near,
            "nearest_gd": self.nearest_gd.value if self.nearest_gd else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionFactors":
        nearest = data.get("nearest_gd")
        return cls(
            schedule_allows=bool(data["schedule_allows"]),
            guardian_away=bool(data["guardian_away"]),
            guardian_near=data.get("guardian_near"),
            nearest_gd=DeviceId(nearest) if nearest else None,
        )


@dataclass(frozen=True)
class PolicyDecision:
    """Per-CAD outcome of one evaluation pass."""

    cad: DeviceId
    access: AccessLevel
    actions: frozenset[DeviceAction]
    factors: DecisionFactors
    at: datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", frozenset(self.actions))
        if self.access not in CAD_LEVELS:
            raise ValidationError(
                f"decisions only move CADs between limited and elevated, not {self.access.value}"
            )
        volume = {DeviceAction.LOCK_VOLUME, DeviceAction.UNLOCK_VOLUME} & self.actions
        if len(volume) > 1:
            raise ValidationError("a decision carries at most one volume action")
        if self.at.tzinfo is None:
            raise ValidationError("decision timestamp must be timezone-aware")

    def to_dict(self) -> dict:
        return {
            "cad": self.cad.value,
            "access": self.access.value,
            "actions": sorted(a.value for a in self.actions),
            "factors": self.factors.to_dict(),
            "at": format_timestamp(self.at),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyDecision":
        return cls(
            cad=DeviceId(data["cad"]),
            access=AccessLevel(data["access"]),
            actions=frozenset(DeviceAction(a) for a in data["actions"]),
            factors=DecisionFactors.from_dict(data["factors"]),
            at=parse_timestamp(data["at"]),
        )
