"""Persistent device registry: the gateway's source of truth for devices.

Single-writer discipline: the sync loop and admin mutations go through
one lock in the gateway; every successful mutation bumps ``version`` by
exactly one. Persistence is a single JSON file written atomically
(temp file + rename).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Optional, Sequence

from .errors import ValidationError
from .ingest import Lease
from .model import (
    AccessLevel,
    Device,
    DeviceId,
    DeviceRole,
    default_access_for_role,
    validate_role_access,
)


@dataclass
class Registry:
    devices: dict[DeviceId, Device] = field(default_factory=dict)
    media_flags: dict[DeviceId, bool] = field(default_factory=dict)
    version: int = 0

    def snapshot_devices(self) -> tuple[Device, ...]:
        return tuple(self.devices.values())

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "devices": [d.to_dict() for d in self.devices.values()],
            "media_flags": {str(k): v for k, v in self.media_flags.items() if v},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Registry":
        devices = {}
        for item in data.get("devices", []):
            device = Device.from_dict(item)
            devices[device.id] = device
        media = {DeviceId(k): bool(v) for k, v in data.get("media_flags", {}).items()}
        return cls(devices=devices, media_flags=media, version=int(data.get("version", 0)))


def sync_registry(registry: Registry, leases: Sequence[Lease], now: datetime) -> Registry:
    """Fold a lease list into the registry.

    Unknown MACs are inserted unclassified (no access by default); known
    MACs only get ip/hostname/last_seen refreshed, their role and access
    are untouched. A ``*`` lease hostname keeps the existing name. Devices
    are never auto-removed. Returns a new registry; the version bumps by
    one iff anything changed.
    """
    devices = dict(registry.devices)
    changed = False
    for lease in leases:
        existing = devices.get(lease.mac)
        if existing is None:
            devices[lease.mac] = Device(
                id=lease.mac,
                role=DeviceRole.UNKNOWN,
                access=AccessLevel.NO_ACCESS,
                ip=lease.ip,
                hostname="" if lease.hostname == "*" else lease.hostname,
                last_seen=now,
            )
            changed = True
        else:
            hostname = existing.hostname if lease.hostname == "*" else lease.hostname
            updated = replace(existing, ip=lease.ip, hostname=hostname, last_seen=now)
            if updated != existing:
                devices[lease.mac] = updated
                changed = True
    if not changed:
        return registry
    return Registry(
        devices=devices,
        media_flags=dict(registry.media_flags),
        version=registry.version + 1,
    )


def set_role(
    registry: Registry,
    device_id: DeviceId,
    role: DeviceRole,
    media: Optional[bool] = None,
    access: Optional[AccessLevel] = None,
) -> Registry:
    """Guardian classification of a device: assign a role and derive (or
    validate an explicitly requested) access level."""
    device = registry.devices.get(device_id)
    if device is None:
        raise ValidationError(f"unknown device {device_id}")
    new_access = access if access is not None else default_access_for_role(role)
    validate_role_access(role, new_access)
    devices = dict(registry.devices)
    devices[device_id] = replace(device, role=role, access=new_access)
    media_flags = dict(registry.media_flags)
    if media is not None:
        media_flags[device_id] = bool(media)
    return Registry(devices=devices, media_flags=media_flags, version=registry.version + 1)


def set_access(registry: Registry, device_id: DeviceId, access: AccessLevel) -> Registry:
    """Move a device between access levels within its role's envelope
    (used by the policy engine to apply decisions)."""
    device = registry.devices.get(device_id)
    if device is None:
        raise ValidationError(f"unknown device {device_id}")
    if device.access is access:
        return registry
    validate_role_access(device.role, access)
    devices = dict(registry.devices)
    devices[device_id] = replace(device, access=access)
    return Registry(
        devices=devices, media_flags=dict(registry.media_flags), version=registry.version + 1
    )


def save_registry(registry: Registry, path) -> None:
    """Atomic replace-on-write: readers never observe a torn file."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".registry-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(registry.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


def load_registry(path) -> Registry:
    with open(path, "r", encoding="utf-8") as fh:
        return Registry.from_dict(json.load(fh))
