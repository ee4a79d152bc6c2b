"""Lease parsing (incl. fuzz totality), calendar providers, and the registry."""

import json
import random
from datetime import datetime, timedelta, timezone

import pytest

from safehome.errors import ValidationError
from safehome.ingest import CalendarConfig, Lease, load_calendar, parse_lease_file
from safehome.model import AccessLevel, DeviceId, DeviceRole, access_rank
from safehome.registry import (
    Registry,
    load_registry,
    save_registry,
    set_access,
    set_role,
    sync_registry,
)

UTC = timezone.utc
NOW = datetime(2024, 1, 1, 12, 0, 0, tzinfo=UTC)

GOOD_LINE = "1700000000 aa:bb:cc:dd:ee:ff 192.168.4.10 kids-tablet 01:aa:bb:cc:dd:ee:ff"


class TestParseLeaseFile:
    def test_single_line(self):
        leases, warnings = parse_lease_file(GOOD_LINE)
        assert warnings == []
        assert len(leases) == 1
        lease = leases[0]
        assert lease.mac == DeviceId("aa:bb:cc:dd:ee:ff")
        assert lease.ip == "192.168.4.10"
        assert lease.hostname == "kids-tablet"
        assert lease.client_id == "01:aa:bb:cc:dd:ee:ff"
        assert lease.expiry == datetime.fromtimestamp(1700000000, tz=UTC)

    def test_empty_file(self):
        assert parse_lease_file("") == ([], [])

    def test_blank_lines_skipped(self):
        leases, warnings = parse_lease_file(f"\n\n{GOOD_LINE}\n\n")
        assert len(leases) == 1 and not warnings

    def test_three_field_line_is_a_warning(self):
        leases, warnings = parse_lease_file("1700000000 aa:bb:cc:dd:ee:ff 192.168.4.10")
        assert leases == []
        assert len(warnings) == 1

    def test_mixed_good_and_bad_lines(self):
        text = f"{GOOD_LINE}\nnot a lease\n1700000001 11:22:33:44:55:66 192.168.4.11 * *\n"
        leases, warnings = parse_lease_file(text)
        assert len(leases) == 2
        assert len(warnings) == 1

    def test_bad_mac_and_ip_warn(self):
        text = ("1700000000 zz:bb:cc:dd:ee:ff 192.168.4.10 host id\n"
                "1700000000 aa:bb:cc:dd:ee:ff 999.999.1.1 host id\n")
        leases, warnings = parse_lease_file(text)
        assert leases == []
        assert len(warnings) == 2

    def test_json_array_format(self):
        payload = json.dumps([
            {"expiry": 1700000000, "mac": "AA:BB:CC:DD:EE:FF", "ip": "192.168.4.10",
             "hostname": "tv", "client_id": "x"},
            {"expiry": "2024-01-01T00:00:00Z", "mac": "11:22:33:44:55:66",
             "ip": "192.168.4.11"},
        ])
        leases, warnings = parse_lease_file(payload)
        assert not warnings
        assert len(leases) == 2
        assert leases[1].hostname == "*"

    def test_json_with_bad_entry_warns(self):
        payload = json.dumps([
            {"expiry": 1700000000, "mac": "aa:bb:cc:dd:ee:ff", "ip": "192.168.4.10"},
            {"mac": "no-expiry"},
            "not an object",
        ])
        leases, warnings = parse_lease_file(payload)
        assert len(leases) == 1
        assert len(warnings) == 2

    def test_unparseable_json_degrades(self):
        leases, warnings = parse_lease_file("{broken json")
        assert leases == [] and warnings

    def test_fuzz_never_raises(self):
        rng = random.Random(1234)
        for _ in range(1000):
            blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 200)))
            leases, warnings = parse_lease_file(blob)  # must not raise
            assert isinstance(leases, list) and isinstance(warnings, list)

    def test_huge_epoch_is_a_warning(self):
        leases, warnings = parse_lease_file(
            "99999999999999999999 aa:bb:cc:dd:ee:ff 192.168.4.10 h c")
        assert leases == [] and len(warnings) == 1


def lease(mac="aa:bb:cc:dd:ee:ff", ip="192.168.4.10", hostname="tv"):
    return Lease(expiry=NOW + timedelta(hours=12), mac=DeviceId(mac), ip=ip,
                 hostname=hostname, client_id="cid")


class TestSyncRegistry:
    def test_new_mac_lands_unclassified_with_no_access(self):
        registry = sync_registry(Registry(), [lease()], NOW)
        device = registry.devices[DeviceId("aa:bb:cc:dd:ee:ff")]
        assert device.role is DeviceRole.UNKNOWN
        assert device.access is AccessLevel.NO_ACCESS
        assert registry.version == 1

    def test_known_device_keeps_role_and_access(self):
        registry = sync_registry(Registry(), [lease()], NOW)
        registry = set_role(registry, DeviceId("aa:bb:cc:dd:ee:ff"), DeviceRole.CAD)
        registry = set_access(registry, DeviceId("aa:bb:cc:dd:ee:ff"),
                              AccessLevel.ELEVATED_INTERNET)
        before = registry.devices[DeviceId("aa:bb:cc:dd:ee:ff")]
        registry = sync_registry(registry, [lease(ip="192.168.4.99")], NOW + timedelta(hours=1))
        after = registry.devices[DeviceId("aa:bb:cc:dd:ee:ff")]
        assert after.role is before.role
        assert after.access is before.access
        assert after.ip == "192.168.4.99"
        assert after.last_seen == NOW + timedelta(hours=1)

    def test_sync_never_deletes(self):
        registry = sync_registry(Registry(), [lease(), lease(mac="11:22:33:44:55:66",
                                                             ip="192.168.4.11")], NOW)
        registry = sync_registry(registry, [lease()], NOW + timedelta(hours=1))
        assert len(registry.devices) == 2

    def test_idempotent_modulo_timestamps(self):
        leases = [lease(), lease(mac="11:22:33:44:55:66", ip="192.168.4.11")]
        first = sync_registry(Registry(), leases, NOW)
        second = sync_registry(first, leases, NOW + timedelta(seconds=30))
        for device_id, device in first.devices.items():
            again = second.devices[device_id]
            assert (again.role, again.access, again.ip, again.hostname) == (
                device.role, device.access, device.ip, device.hostname)
        assert set(first.devices) == set(second.devices)

    def test_sync_never_demotes_access(self):
        rng = random.Random(77)
        registry = sync_registry(Registry(), [lease()], NOW)
        registry = set_role(registry, DeviceId("aa:bb:cc:dd:ee:ff"), DeviceRole.CAD)
        for i in range(20):
            before = {d: dev.access for d, dev in registry.devices.items()}
            new_leases = [lease(ip=f"192.168.4.{rng.randrange(2, 250)}")]
            registry = sync_registry(registry, new_leases, NOW + timedelta(minutes=i))
            for device_id, old_access in before.items():
                assert access_rank(registry.devices[device_id].access) >= access_rank(old_access) or \
                    registry.devices[device_id].access == old_access

    def test_star_hostname_keeps_existing_name(self):
        registry = sync_registry(Registry(), [lease(hostname="kids-tablet")], NOW)
        registry = sync_registry(registry, [lease(hostname="*")], NOW + timedelta(hours=1))
        assert registry.devices[DeviceId("aa:bb:cc:dd:ee:ff")].hostname == "kids-tablet"

    def test_no_change_no_version_bump(self):
        registry = sync_registry(Registry(), [lease()], NOW)
        version = registry.version
        unchanged = sync_registry(registry, [], NOW + timedelta(hours=1))
        assert unchanged.version == version


class TestRoleManagement:
    def setup_method(self):
        self.registry = sync_registry(Registry(), [lease()], NOW)
        self.device_id = DeviceId("aa:bb:cc:dd:ee:ff")

    def test_role_derives_access(self):
        registry = set_role(self.registry, self.device_id, DeviceRole.GD)
        assert registry.devices[self.device_id].access is AccessLevel.FULL_ACCESS
        registry = set_role(registry, self.device_id, DeviceRole.CAD)
        assert registry.devices[self.device_id].access is AccessLevel.LIMITED_INTERNET

    def test_explicit_access_validated_against_role(self):
        with pytest.raises(ValidationError):
            set_role(self.registry, self.device_id, DeviceRole.CAD,
                     access=AccessLevel.FULL_ACCESS)

    def test_media_flag_stored(self):
        registry = set_role(self.registry, self.device_id, DeviceRole.CAD, media=True)
        assert registry.media_flags[self.device_id] is True

    def test_unknown_device_rejected(self):
        with pytest.raises(ValidationError):
            set_role(self.registry, DeviceId("00:00:00:00:00:01"), DeviceRole.GD)

    def test_version_bumps_by_one_per_mutation(self):
        v = self.registry.version
        registry = set_role(self.registry, self.device_id, DeviceRole.CAD)
        assert registry.version == v + 1
        registry = set_access(registry, self.device_id, AccessLevel.ELEVATED_INTERNET)
        assert registry.version == v + 2


class TestPersistence:
    def test_round_trip_including_version(self, tmp_path):
        registry = sync_registry(Registry(), [lease()], NOW)
        registry = set_role(registry, DeviceId("aa:bb:cc:dd:ee:ff"), DeviceRole.CAD, media=True)
        path = tmp_path / "registry.json"
        save_registry(registry, path)
        loaded = load_registry(path)
        assert loaded.version == registry.version
        assert loaded.devices == registry.devices
        assert loaded.media_flags == {k: v for k, v in registry.media_flags.items() if v}

    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        registry = sync_registry(Registry(), [lease()], NOW)
        path = tmp_path / "registry.json"
        for _ in range(3):
            save_registry(registry, path)
        assert [p.name for p in tmp_path.iterdir()] == ["registry.json"]


class TestCalendar:
    def write_events(self, tmp_path, events):
        path = tmp_path / "calendar.json"
        path.write_text(json.dumps(events))
        return path

    def test_file_provider_returns_overlapping_events(self, tmp_path):
        path = self.write_events(tmp_path, [
            {"start": "2024-01-01T09:00:00Z", "end": "2024-01-01T17:00:00Z", "title": "office"},
        ])
        config = CalendarConfig(provider="file", path=str(path))
        events, degraded = load_calendar(config, NOW - timedelta(hours=1), NOW + timedelta(hours=1))
        assert not degraded
        assert len(events) == 1 and events[0].title == "office"

    def test_event_outside_window_excluded(self, tmp_path):
        path = self.write_events(tmp_path, [
            {"start": "2023-12-25T09:00:00Z", "end": "2023-12-25T17:00:00Z", "title": "past"},
        ])
        config = CalendarConfig(provider="file", path=str(path))
        events, degraded = load_calendar(config, NOW, NOW + timedelta(days=1))
        assert events == [] and not degraded

    def test_events_sorted_by_start(self, tmp_path):
        path = self.write_events(tmp_path, [
            {"start": "2024-01-01T15:00:00Z", "end": "2024-01-01T16:00:00Z", "title": "b"},
            {"start": "2024-01-01T09:00:00Z", "end": "2024-01-01T10:00:00Z", "title": "a"},
        ])
        config = CalendarConfig(provider="file", path=str(path))
        events, _ = load_calendar(config, NOW - timedelta(hours=12), NOW + timedelta(hours=12))
        assert [e.title for e in events] == ["a", "b"]

    def test_missing_file_degrades(self, tmp_path):
        config = CalendarConfig(provider="file", path=str(tmp_path / "absent.json"))
        events, degraded = load_calendar(config, NOW, NOW + timedelta(hours=1))
        assert events == [] and degraded is True

    def test_unreachable_http_degrades(self):
        config = CalendarConfig(provider="http", url="http://127.0.0.1:1/events", timeout_s=0.2)
        events, degraded = load_calendar(config, NOW, NOW + timedelta(hours=1))
        assert events == [] and degraded is True

    def test_none_provider(self):
        events, degraded = load_calendar(CalendarConfig(), NOW, NOW + timedelta(hours=1))
        assert events == [] and degraded is False

    def test_provider_validation(self):
        with pytest.raises(ValidationError):
            CalendarConfig(provider="carrier-pigeon")
        with pytest.raises(ValidationError):
            CalendarConfig(provider="file")
