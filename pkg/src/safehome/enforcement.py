"""Compile access decisions into firewall/DNS rules.

The intermediate representation is backend-agnostic: an ordered list of
match/verdict rules ending in exactly one terminal default, plus a DNS
policy. Emitters render it as netfilter command lines or as canonical
JSON (the ``mock`` backend used by tests). Rules are never executed
here; scripts are written to disk by the gateway.
"""

from __future__ import annotations

import ipaddress
import json
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from .errors import ConfigurationError, ContractError, ValidationError
from .model import AccessLevel, Device, DeviceId, access_rank


class Destination(str, Enum):
    LAN = "lan"
    WAN = "wan"
    ANY = "any"


class Protocol(str, Enum):
    ANY = "any"
    TCP = "tcp"
    UDP = "udp"


class Verdict(str, Enum):
    ACCEPT = "accept"
    DROP = "drop"


# Ports a limited device may reach on the WAN: DNS plus plain/TLS web.
LIMITED_WAN_PORTS = frozenset({53, 80, 443})

_DEST_RANK = {Destination.LAN: 0, Destination.WAN: 1, Destination.ANY: 2}
_PROTO_RANK = {Protocol.ANY: 0, Protocol.TCP: 1, Protocol.UDP: 2}


@dataclass(frozen=True)
class Rule:
    destination: Destination
    protocol: Protocol
    ports: Optional[frozenset[int]]
    verdict: Verdict

    def __post_init__(self) -> None:
        if self.ports is not None:
            ports = frozenset(int(p) for p in self.ports)
            if not ports:
                raise ValidationError("port set must be None or non-empty")
            if any(not 0 < p <= 65535 for p in ports):
                raise ValidationError("ports must be in 1..65535")
            object.__setattr__(self, "ports", ports)

    @property
    def is_terminal(self) -> bool:
        """Matches every packet: the default at the end of a rule list."""
        return (
            self.destination is Destination.ANY
            and self.protocol is Protocol.ANY
            and self.ports is None
        )

    def sort_key(self) -> tuple:
        return (
            self.is_terminal,
            _DEST_RANK[self.destination],
            _PROTO_RANK[self.protocol],
            tuple(sorted(self.ports)) if self.ports else (),
            self.verdict.value,
        )

    def to_dict(self) -> dict:
        return {
            "destination": self.destination.value,
            "protocol": self.protocol.value,
            "ports": sorted(self.ports) if self.ports else None,
            "verdict": self.verdict.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Rule":
        ports = data.get("ports")
        return cls(
            destination=Destination(data["destination"]),
            protocol=Protocol(data["protocol"]),
            ports=frozenset(ports) if ports else None,
            verdict=Verdict(data["verdict"]),
        )


ACCEPT_ALL = Rule(Destination.ANY, Protocol.ANY, None, Verdict.ACCEPT)
DROP_ALL = Rule(Destination.ANY, Protocol.ANY, None, Verdict.DROP)


class DnsMode(str, Enum):
    BLOCK_ALL = "blockall"
    ALLOWLIST = "allowlist"
    DENYLIST = "denylist"
    UNFILTERED = "unfiltered"


def normalize_domains(domains: Iterable[str]) -> tuple[str, ...]:
    """Lower-case, strip, and deduplicate a domain list (sorted)."""
    cleaned = {d.strip().lower() for d in domains if d and d.strip()}
    return tuple(sorted(cleaned))


@dataclass(frozen=True)
class DnsPolicy:
    """Name-resolution policy attached to a rule set. List modes
    (allowlist/denylist) must carry at least one domain."""

    mode: DnsMode
    domains: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "domains", normalize_domains(self.domains))
        if self.mode in (DnsMode.ALLOWLIST, DnsMode.DENYLIST):
            if not self.domains:
                raise ValidationError(f"{self.mode.value} DNS policy needs domains")
        elif self.domains:
            raise ValidationError(f"{self.mode.value} DNS policy carries no domains")

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "domains": list(self.domains)}

    @classmethod
    def from_dict(cls, data: dict) -> "DnsPolicy":
        return cls(mode=DnsMode(data["mode"]), domains=tuple(data.get("domains", ())))


@dataclass(frozen=True)
class RuleSet:
    """All enforcement state for one device at one access level."""

    device: DeviceId
    ip: str
    lan_cidr: str
    verdicts: tuple[Rule, ...]
    dns_policy: DnsPolicy

    def __post_init__(self) -> None:
        object.__setattr__(self, "verdicts", tuple(self.verdicts))
        terminals = [r for r in self.verdicts if r.is_terminal]
        if len(terminals) != 1 or not self.verdicts[-1].is_terminal:
            raise ValidationError("rule list must end with exactly one terminal default")

    @property
    def chain(self) -> str:
        return f"sh_{self.device.chain_suffix}"

    def to_dict(self) -> dict:
        return {
            "device": self.device.value,
            "ip": self.ip,
            "lan_cidr": self.lan_cidr,
            "verdicts": [r.to_dict() for r in self.verdicts],
            "dns_policy": self.dns_policy.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RuleSet":
        return cls(
            device=DeviceId(data["device"]),
            ip=data["ip"],
            lan_cidr=data["lan_cidr"],
            verdicts=tuple(Rule.from_dict(r) for r in data["verdicts"]),
            dns_policy=DnsPolicy.from_dict(data["dns_policy"]),
        )


def compile_rules(
    device: Device,
    level: AccessLevel,
    lan_cidr: str,
    allowlist: Sequence[str] = (),
    denylist: Sequence[str] = (),
) -> RuleSet:
    """Rule set realizing one access level:

    * no access:  drop everything, DNS blocked
    * local only: LAN allowed, everything else dropped, DNS blocked
    * limited:    LAN allowed, WAN only on DNS/web ports, allowlist DNS
    * elevated:   everything allowed, denylist-filtered DNS
    * full:       everything allowed, unfiltered DNS
    """
    try:
        network = ipaddress.IPv4Network(lan_cidr)
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"bad LAN CIDR {lan_cidr!r}: {exc}") from exc
    if ipaddress.IPv4Address(device.ip) not in network:
        raise ConfigurationError(f"device ip {device.ip} outside LAN {lan_cidr}")

    accept_lan = Rule(Destination.LAN, Protocol.ANY, None, Verdict.ACCEPT)
    if level is AccessLevel.NO_ACCESS:
        verdicts = (DROP_ALL,)
        dns = DnsPolicy(DnsMode.BLOCK_ALL)
    elif level is AccessLevel.LOCAL_ONLY:
        verdicts = (accept_lan, DROP_ALL)
        dns = DnsPolicy(DnsMode.BLOCK_ALL)
    elif level is AccessLevel.LIMITED_INTERNET:
        if not normalize_domains(allowlist):
            raise ConfigurationError("limited internet access requires a non-empty allowlist")
        verdicts = (
            accept_lan,
            Rule(Destination.WAN, Protocol.ANY, LIMITED_WAN_PORTS, Verdict.ACCEPT),
            DROP_ALL,
        )
        dns = DnsPolicy(DnsMode.ALLOWLIST, tuple(allowlist))
    elif level is AccessLevel.ELEVATED_INTERNET:
        verdicts = (ACCEPT_ALL,)
        denied = normalize_domains(denylist)
        dns = DnsPolicy(DnsMode.DENYLIST, denied) if denied else DnsPolicy(DnsMode.UNFILTERED)
    else:  # full access
        verdicts = (ACCEPT_ALL,)
        dns = DnsPolicy(DnsMode.UNFILTERED)
    return RuleSet(
        device=device.id, ip=device.ip, lan_cidr=str(network), verdicts=verdicts, dns_policy=dns
    )


# ---------------------------------------------------------------------------
# emitters
# ---------------------------------------------------------------------------

def _emit_netfilter(ruleset: RuleSet) -> str:
    """One netfilter command per line, scoped to a per-device chain."""
    chain = ruleset.chain
    lines = [
        f"# device {ruleset.device} ({ruleset.ip}) via chain {chain}",
        f"iptables -t filter -N {chain}",
        f"iptables -t filter -F {chain}",
    ]
    for rule in ruleset.verdicts:
        target = "ACCEPT" if rule.verdict is Verdict.ACCEPT else "DROP"
        dest = {
            Destination.LAN: f"-d {ruleset.lan_cidr} ",
            Destination.WAN: f"! -d {ruleset.lan_cidr} ",
            Destination.ANY: "",
        }[rule.destination]
        if rule.ports:
            ports = ",".join(str(p) for p in sorted(rule.ports))
            protocols = (
                ["tcp", "udp"] if rule.protocol is Protocol.ANY else [rule.protocol.value]
            )
            for proto in protocols:
                lines.append(
                    f"iptables -t filter -A {chain} {dest}-p {proto} "
                    f"-m multiport --dports {ports} -j {target}"
                )
        else:
            proto = "" if rule.protocol is Protocol.ANY else f"-p {rule.protocol.value} "
            lines.append(f"iptables -t filter -A {chain} {dest}{proto}-j {target}")
    lines.append(f"iptables -t filter -A FORWARD -s {ruleset.ip} -j {chain}")
    return "\n".join(lines) + "\n"


def _emit_mock(ruleset: RuleSet) -> str:
    """Canonical JSON of the IR; parses back to an equal rule set."""
    return json.dumps(ruleset.to_dict(), sort_keys=True, indent=2) + "\n"


_EMITTERS: dict[str, Callable[[RuleSet], str]] = {
    "netfilter": _emit_netfilter,
    "mock": _emit_mock,
}


def emit_script(ruleset: RuleSet, backend: str = "netfilter") -> str:
    """Deterministic rule-script text for a registered backend."""
    try:
        emitter = _EMITTERS[backend]
    except KeyError:
        raise ConfigurationError(
            f"unknown backend {backend!r}; registered: {sorted(_EMITTERS)}"
        ) from None
    return emitter(ruleset)


def parse_mock_script(text: str) -> RuleSet:
    return RuleSet.from_dict(json.loads(text))


def emit_dns_policy(policy: DnsPolicy) -> str:
    """DNS filter file: a ``mode=`` header line, then one domain per line."""
    lines = [f"mode={policy.mode.value}"]
    lines.extend(policy.domains)
    return "\n".join(lines) + "\n"


def load_domain_list(path) -> tuple[str, ...]:
    """Domain list file: one domain per line, ``#`` comments and blanks skipped."""
    domains = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                domains.append(line)
    return normalize_domains(domains)


# ---------------------------------------------------------------------------
# changesets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Changeset:
    """Rules to remove from / add to an old set to reach a new one."""

    added: tuple[Rule, ...]
    removed: tuple[Rule, ...]
    dns_changed: bool

    @property
    def empty(self) -> bool:
        return not self.added and not self.removed and not self.dns_changed


def diff_rulesets(old: RuleSet, new: RuleSet) -> Changeset:
    """Minimal multiset difference of the two verdict lists."""
    if old.device != new.device:
        raise ContractError("cannot diff rule sets of different devices")
    old_counts = Counter(old.verdicts)
    new_counts = Counter(new.verdicts)
    removed = list((old_counts - new_counts).elements())
    added = list((new_counts - old_counts).elements())
    return Changeset(
        added=tuple(sorted(added, key=Rule.sort_key)),
        removed=tuple(sorted(removed, key=Rule.sort_key)),
        dns_changed=old.dns_policy != new.dns_policy,
    )


def apply_changeset(rules: Sequence[Rule], changeset: Changeset) -> tuple[Rule, ...]:
    """Rule list after removing/adding per the changeset, in canonical
    evaluation order (specific accepts first, terminal default last)."""
    counts = Counter(rules)
    counts.subtract(Counter(changeset.removed))
    if any(v < 0 for v in counts.values()):
        raise ContractError("changeset removes a rule the set does not contain")
    counts.update(Counter(changeset.added))
    return tuple(sorted(counts.elements(), key=Rule.sort_key))


# ---------------------------------------------------------------------------
# probe evaluator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Probe:
    """A packet to test a rule set against."""

    name: str
    dest_ip: str
    protocol: Protocol
    port: int


def packet_allowed(ruleset: RuleSet, probe: Probe) -> bool:
    """First-match-wins interpretation of the IR for one probe packet."""
    network = ipaddress.IPv4Network(ruleset.lan_cidr)
    dest = (
        Destination.LAN
        if ipaddress.IPv4Address(probe.dest_ip) in network
        else Destination.WAN
    )
    for rule in ruleset.verdicts:
        if rule.destination not in (Destination.ANY, dest):
            continue
        if rule.protocol not in (Protocol.ANY, probe.protocol):
            continue
        if rule.ports is not None and probe.port not in rule.ports:
            continue
        return rule.verdict is Verdict.ACCEPT
    raise ContractError("rule list had no terminal default")  # unreachable by invariant


def standard_probes(lan_cidr: str) -> tuple[Probe, ...]:
    """The level-monotonicity probe set: a LAN host, WAN web, WAN SMTP."""
    network = ipaddress.IPv4Network(lan_cidr)
    lan_host = str(network.network_address + 2)
    return (
        Probe("lan-host", lan_host, Protocol.TCP, 445),
        Probe("wan-https", "203.0.113.10", Protocol.TCP, 443),
        Probe("wan-smtp", "203.0.113.10", Protocol.TCP, 25),
    )


def allowed_probes(ruleset: RuleSet, probes: Sequence[Probe]) -> frozenset[str]:
    return frozenset(p.name for p in probes if packet_allowed(ruleset, p))


def check_level_monotonicity(
    device: Device, lan_cidr: str, allowlist: Sequence[str], denylist: Sequence[str]
) -> bool:
    """Whether every ordered level pair satisfies allowed(A) <= allowed(B)
    over the standard probes."""
    probes = standard_probes(lan_cidr)
    levels = sorted(AccessLevel, key=access_rank)
    allowed = {
        level: allowed_probes(
            compile_rules(device, level, lan_cidr, allowlist, denylist), probes
        )
        for level in levels
    }
    for i, low in enumerate(levels):
        for high in levels[i + 1:]:
            if not allowed[low] <= allowed[high]:
                return False
    return True
