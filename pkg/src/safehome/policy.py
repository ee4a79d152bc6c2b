"""Per-CAD access decisions from schedule, calendar, and proximity.

The decision table is evaluated strictly in order: schedule first, then
the guardian's calendar, then classified proximity. Elevations must
survive a configurable number of consecutive ticks (hysteresis) before
they apply; restrictions always apply immediately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from .errors import ContractError
from .model import (
    AccessLevel,
    CalendarEvent,
    DecisionFactors,
    Device,
    DeviceAction,
    DeviceId,
    DeviceRole,
    PairWindow,
    PolicyDecision,
    ScheduleRule,
    access_rank,
    anonymize,
)
from .proximity import Classifier, extract_features

_WEEKDAY_VALUES = ["mon", "tue", "wed", "thu", "fri", "sat", "sun"]


def schedule_allows(rules: Sequence[ScheduleRule], now: datetime) -> bool:
    """True when no schedule is configured (always allowed) or ``now`` falls
    inside any rule's window: matching weekday, start <= t < end."""
    if not rules:
        return True
    weekday = _WEEKDAY_VALUES[now.weekday()]
    t = now.time()
    for rule in rules:
        if any(day.value == weekday for day in rule.days) and rule.start <= t < rule.end:
            return True
    return False


def guardian_away(events: Sequence[CalendarEvent], now: datetime) -> bool:
    """The guardian counts as out of the home while any calendar event is in
    progress (start <= now < end)."""
    return any(event.start <= now < event.end for event in events)


def decide_access(
    cad: Device,
    factors: DecisionFactors,
    media: bool = False,
    at: Optional[datetime] = None,
) -> PolicyDecision:
    """Decision table, first match wins:

    a) outside schedule        -> limited, lock volume on media devices
    b) guardian away (calendar)-> limited
    c) no guardian near        -> limited, lock volume on media devices
    d) guardian near           -> elevated, unlock volume on media devices
    """
    if cad.role is not DeviceRole.CAD:
        raise ContractError(f"decisions are only produced for CADs, got role {cad.role.value}")
    when = at if at is not None else datetime.now(timezone.utc)

    actions: frozenset[DeviceAction] = frozenset()
    if not factors.schedule_allows:
        access = AccessLevel.LIMITED_INTERNET
        if media:
            actions = frozenset({DeviceAction.LOCK_VOLUME})
    elif factors.guardian_away:
        access = AccessLevel.LIMITED_INTERNET
    elif not factors.guardian_near:
        access = AccessLevel.LIMITED_INTERNET
        if media:
            actions = frozenset({DeviceAction.LOCK_VOLUME})
    else:
        access = AccessLevel.ELEVATED_INTERNET
        if media:
            actions = frozenset({DeviceAction.UNLOCK_VOLUME})

    return PolicyDecision(cad=cad.id, access=access, actions=actions, factors=factors, at=when)


@dataclass
class HysteresisState:
    """Per-CAD counters that gate elevations.

    An access increase must be proposed ``consecutive_required`` times in a
    row before it applies; any decrease applies immediately (fail-safe
    toward the restrictive outcome). Counters never exceed the requirement.
    """

    consecutive_required: int = 3
    _pending: dict[DeviceId, tuple[AccessLevel, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.consecutive_required < 1:
            raise ContractError("consecutive_required must be >= 1")

    def pending_count(self, cad: DeviceId) -> int:
        return self._pending.get(cad, (None, 0))[1]

    def reset(self, cad: Optional[DeviceId] = None) -> None:
        if cad is None:
            self._pending.clear()
        else:
            self._pending.pop(cad, None)


def apply_hysteresis(
    state: HysteresisState,
    cad: DeviceId,
    candidate: PolicyDecision,
    current: PolicyDecision,
) -> PolicyDecision:
    """Stabilized decision for this tick.

    Returns ``current`` until the same elevated level has been proposed
    ``consecutive_required`` ticks in a row; a restrictive candidate (or one
    at the current level) applies immediately and clears the counter.
    """
    if candidate.cad != cad or current.cad != cad:
        raise ContractError("candidate/current decision refer to a different CAD")

    if access_rank(candidate.access) <= access_rank(current.access):
        state._pending.pop(cad, None)
        return candidate

    level, count = state._pending.get(cad, (candidate.access, 0))
    count = count + 1 if level == candidate.access else 1
    if count >= state.consecutive_required:
        state._pending.pop(cad, None)
        return candidate
    state._pending[cad] = (candidate.access, count)
    return current


class WindowSource(Protocol):
    """Supplies classification windows for the current tick."""

    def online(self) -> frozenset[DeviceId]:
        """Devices that produced a sample this tick."""
        ...

    def window(self, cad: DeviceId, gd: DeviceId) -> Optional[PairWindow]:
        """Latest full window for the pair, or None if not enough samples."""
        ...


def evaluate_all(
    devices: Iterable[Device],
    media_flags: Mapping[DeviceId, bool],
    source: Optional[WindowSource],
    events: Sequence[CalendarEvent],
    rules: Sequence[ScheduleRule],
    classifier: Optional[Classifier],
    hysteresis: HysteresisState,
    now: datetime,
    last_decisions: dict[DeviceId, PolicyDecision],
) -> list[PolicyDecision]:
    """One evaluation pass: exactly one decision per CAD.

    Each CAD is paired with every online guardian device one by one;
    guardian_near is the OR over those classifications and nearest_gd the
    guardian with the highest near-probability. CADs with no online
    guardian (or when the classifier is unavailable) get guardian_near
    absent and fall to the restrictive branch. ``last_decisions`` is
    updated in place and feeds the hysteresis comparison on the next tick.
    """
    schedule_ok = schedule_allows(rules, now.astimezone())
    away = guardian_away(events, now)

    online = source.online() if source is not None else frozenset()
    online_gds = [
        d.id for d in devices if d.role is DeviceRole.GD and d.id in online
    ]

    decisions = []
    for device in devices:
        if device.role is not DeviceRole.CAD:
            continue
        guardian_near: Optional[bool] = None
        nearest: Optional[DeviceId] = None
        if not away and source is not None and classifier is not None:
            best_probability = -1.0
            for gd in online_gds:
                window = source.window(device.id, gd)
                if window is None:
                    continue
                probability, label = classifier.classify(
                    extract_features(anonymize(window))
                )
                guardian_near = bool(guardian_near) or label.near
                if probability > best_probability:
                    best_probability, nearest = probability, gd

        factors = DecisionFactors(
            schedule_allows=schedule_ok,
            guardian_away=away,
            guardian_near=guardian_near,
            nearest_gd=nearest,
        )
        candidate = decide_access(
            device, factors, media=bool(media_flags.get(device.id, False)), at=now
        )
        current = last_decisions.get(device.id)
        final = candidate if current is None else apply_hysteresis(
            hysteresis, device.id, candidate, current
        )
        last_decisions[device.id] = final
        decisions.append(final)
    return decisions
