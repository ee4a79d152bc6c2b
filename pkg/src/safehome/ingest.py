"""Lease-file parsing and calendar providers.

Lease parsing is total: arbitrary byte input never raises, malformed
lines come back as warnings. Calendar loading degrades to an empty event
list plus a flag when the provider is unreachable; the policy engine then
treats the guardian as home and relies on proximity alone.
"""

from __future__ import annotations

import ipaddress
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Sequence

from .errors import ValidationError
from .model import CalendarEvent, DeviceId, parse_timestamp


@dataclass(frozen=True)
class Lease:
    """One DHCP address assignment."""

    expiry: datetime
    mac: DeviceId
    ip: str
    hostname: str
    client_id: str

    def __post_init__(self) -> None:
        str(ipaddress.IPv4Address(self.ip))  # raises on bad address
        if self.expiry.tzinfo is None:
            raise ValidationError("lease expiry must be timezone-aware")


def _lease_from_fields(fields: Sequence[str]) -> Lease:
    if len(fields) != 5:
        raise ValidationError(f"expected 5 fields, got {len(fields)}")
    epoch_text, mac, ip, hostname, client_id = fields
    try:
        expiry = datetime.fromtimestamp(int(epoch_text), tz=timezone.utc)
    except (ValueError, OverflowError, OSError) as exc:
        raise ValidationError(f"bad expiry {epoch_text!r}") from exc
    return Lease(expiry=expiry, mac=DeviceId(mac), ip=ip, hostname=hostname, client_id=client_id)


def _lease_from_json_obj(obj) -> Lease:
    if not isinstance(obj, dict):
        raise ValidationError("lease entry must be an object")
    expiry_raw = obj.get("expiry")
    if isinstance(expiry_raw, (int, float)) and not isinstance(expiry_raw, bool):
        try:
            expiry = datetime.fromtimestamp(expiry_raw, tz=timezone.utc)
        except (ValueError, OverflowError, OSError) as exc:
            raise ValidationError(f"bad expiry {expiry_raw!r}") from exc
    elif isinstance(expiry_raw, str):
        expiry = parse_timestamp(expiry_raw)
    else:
        raise ValidationError(f"bad expiry {expiry_raw!r}")
    try:
        return Lease(
            expiry=expiry,
            mac=DeviceId(str(obj["mac"])),
            ip=str(obj["ip"]),
            hostname=str(obj.get("hostname", "*")),
            client_id=str(obj.get("client_id", "")),
        )
    except KeyError as exc:
        raise ValidationError(f"lease entry missing {exc}") from exc


def parse_lease_file(data: "str | bytes") -> tuple[list[Lease], list[str]]:
    """Parse a DHCP lease list, returning (leases, warnings).

    Two formats are auto-detected: the 5-field line format
    ``expiry-epoch mac ip hostname client-id`` (one lease per line, blank
    lines skipped), and a JSON array of objects with the same field names
    (detected by a leading ``{`` or ``[``). Never raises: every malformed
    line or entry becomes a warning instead.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8", errors="replace")
    else:
        text = data

    leases: list[Lease] = []
    warnings: list[str] = []

    stripped = text.lstrip()
    if stripped[:1] in ("{", "["):
        try:
            parsed = json.loads(text)
        except (json.JSONDecodeError, RecursionError) as exc:
            warnings.append(f"unparseable JSON lease file: {exc}")
            return leases, warnings
        entries = parsed if isinstance(parsed, list) else [parsed]
        for i, entry in enumerate(entries):
            try:
                leases.append(_lease_from_json_obj(entry))
            except (ValidationError, ValueError, TypeError) as exc:
                warnings.append(f"entry {i}: {exc}")
        return leases, warnings

    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            leases.append(_lease_from_fields(line.split()))
        except (ValidationError, ValueError) as exc:
            warnings.append(f"line {line_number}: {exc}")
    return leases, warnings


# ---------------------------------------------------------------------------
# calendar providers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalendarConfig:
    """``file`` reads a JSON array of events from ``path``; ``http`` GETs
    the same schema from ``url``; ``none`` disables the factor."""

    provider: str = "none"
    path: Optional[str] = None
    url: Optional[str] = None
    timeout_s: float = 5.0

    def __post_init__(self) -> None:
        if self.provider not in ("none", "file", "http"):
            raise ValidationError(f"unknown calendar provider {self.provider!r}")
        if self.provider == "file" and not self.path:
            raise ValidationError("file calendar provider needs a path")
        if self.provider == "http" and not self.url:
            raise ValidationError("http calendar provider needs a url")


def _events_from_json(payload) -> list[CalendarEvent]:
    if not isinstance(payload, list):
        raise ValidationError("calendar payload must be a JSON array")
    return [CalendarEvent.from_dict(item) for item in payload]


def load_calendar(
    config: CalendarConfig,
    window_start: datetime,
    window_end: datetime,
) -> tuple[list[CalendarEvent], bool]:
    """Events overlapping [window_start, window_end), sorted by start.

    Returns (events, degraded): an unreachable or unparseable provider
    yields an empty list with degraded=True rather than an error.
    """
    if config.provider == "none":
        return [], False

    try:
        if config.provider == "file":
            with open(config.path, "r", encoding="utf-8") as fh:
                events = _events_from_json(json.load(fh))
        else:
            import urllib.request

            with urllib.request.urlopen(config.url, timeout=config.timeout_s) as response:
                events = _events_from_json(json.loads(response.read().decode("utf-8")))
    except Exception:
        return [], True

    overlapping = [
        e for e in events if e.start < window_end and e.end > window_start
    ]
    overlapping.sort(key=lambda e: e.start)
    return overlapping, False
