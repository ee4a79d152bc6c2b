"""Synthetic RSSI generation over an indoor log-distance path-loss channel.

Stands in for live wireless-driver telemetry: produces per-device sample
streams for scripted scenarios and labeled near/far datasets for training
the proximity classifier.

Reproducibility contract: all randomness comes from numpy's PCG64 generator
(``RNG_ALGORITHM``) seeded explicitly, noise is drawn per sample (i.i.d.),
and rounding of dBm values is half-away-from-zero-free "floor(x + 0.5)".
The same seed therefore reproduces byte-identical datasets and traces.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ValidationError
from .model import (
    DeviceId,
    Label,
    RssiSample,
    TrainingRecord,
    RSSI_MAX,
    RSSI_MIN,
)

RNG_ALGORITHM = "pcg64"

# Devices are never simulated closer to the access point than this; the
# log-distance model diverges as d -> 0.
MIN_AP_DISTANCE_M = 0.1

# Minimum separation between a far-labeled pair of devices.
FAR_MIN_SEPARATION_M = 8.0

# Fixed epoch for simulated clocks, one tick per second.
SIM_EPOCH = datetime(2024, 1, 1, 12, 0, 0, tzinfo=timezone.utc)
TICK_SECONDS = 1.0

Point = tuple[float, float]


def _distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance channel: p0 at reference distance d0, exponent n,
    zero-mean Gaussian shadowing with standard deviation sigma (dB)."""

    p0_dbm: float = -40.0
    d0_m: float = 1.0
    exponent_n: float = 2.5
    shadow_sigma_db: float = 4.0

    def __post_init__(self) -> None:
        if not self.d0_m > 0:
            raise ValidationError("reference distance d0 must be positive")
        if not 0 < self.exponent_n <= 10:
            raise ValidationError("path-loss exponent must be in (0, 10]")
        if not 0 <= self.shadow_sigma_db <= 20:
            raise ValidationError("shadowing sigma must be in [0, 20] dB")


@dataclass(frozen=True)
class FloorPlan:
    """Access-point position, named room positions, and the distance that
    separates near from far ground truth."""

    ap_position: Point = (0.0, 0.0)
    rooms: dict[str, Point] = field(default_factory=dict)
    near_threshold_m: float = 4.0

    def __post_init__(self) -> None:
        if not self.near_threshold_m > 0:
            raise ValidationError("near threshold must be positive")
        for name, pos in list(self.rooms.items()) + [("ap", self.ap_position)]:
            if not all(math.isfinite(c) for c in pos):
                raise ValidationError(f"position {name!r} is not finite")


def default_floor_plan() -> FloorPlan:
    """Small flat used by the shipped scenarios.

    Room geometry is chosen so that rooms paired as "far" in a scenario are
    both >= 8 m apart and at clearly different ranges from the access point;
    physical separation then shows up as a signal-level difference the
    classifier can see.
    """
    return FloorPlan(
        ap_position=(0.0, 0.0),
        rooms={
            "lounge": (2.0, 1.5),
            "kids_room": (3.0, -1.0),
            "kitchen": (-2.0, 2.5),
            "guardian_room": (-3.0, 12.0),
        },
        near_threshold_m=4.0,
    )


@dataclass(frozen=True)
class ScenarioSpec:
    """A scripted placement of devices for one evaluation scenario.

    ``placements`` maps device id to a 2D position in meters, or None when
    the device is out of the home and emits no samples.
    """

    scenario_id: int
    placements: dict[DeviceId, Optional[Point]]
    calendar_event_active: bool
    duration_ticks: int

    def __post_init__(self) -> None:
        if self.scenario_id not in range(1, 7):
            raise ValidationError(f"scenario id must be 1..6, got {self.scenario_id}")
        if self.duration_ticks < 1:
            raise ValidationError("duration_ticks must be >= 1")
        placements = {}
        for device, pos in self.placements.items():
            if pos is not None:
                pos = (float(pos[0]), float(pos[1]))
                if not all(math.isfinite(c) for c in pos):
                    raise ValidationError(f"placement for {device} is not finite")
            placements[device] = pos
        object.__setattr__(self, "placements", placements)

    @property
    def present_devices(self) -> list[DeviceId]:
        return [d for d, pos in self.placements.items() if pos is not None]


def rssi_at(distance_m: float, params: PathLossParams, noise_draw: float) -> int:
    """Signal strength in dBm at ``distance_m`` from the access point.

    rssi = p0 - 10 * n * log10(d / d0) + sigma * noise_draw, rounded to the
    nearest integer (ties toward +inf) and clamped to the driver range.
    ``noise_draw`` is a standard-normal variate supplied by the caller, so
    the function itself is deterministic.
    """
    if not distance_m > 0:
        raise DomainError(f"distance must be positive, got {distance_m}")
    raw = (
        params.p0_dbm
        - 10.0 * params.exponent_n * math.log10(distance_m / params.d0_m)
        + params.shadow_sigma_db * noise_draw
    )
    rounded = math.floor(raw + 0.5)
    return int(min(RSSI_MAX, max(RSSI_MIN, rounded)))


def simulate_scenario(
    spec: ScenarioSpec,
    plan: FloorPlan,
    params: PathLossParams,
    seed: int,
) -> list[RssiSample]:
    """Time-ordered sample stream for a scenario: one sample per present
    device per tick, absent devices emit nothing.

    Iteration order inside a tick follows the placement order of the spec,
    so identical (spec, plan, params, seed) yields an identical stream.
    """
    rng = np.random.default_rng(seed)
    samples: list[RssiSample] = []
    for tick in range(spec.duration_ticks):
        at = SIM_EPOCH + timedelta(seconds=tick * TICK_SECONDS)
        for device, pos in spec.placements.items():
            if pos is None:
                continue
            distance = max(_distance(pos, plan.ap_position), MIN_AP_DISTANCE_M)
            rssi = rssi_at(distance, params, float(rng.standard_normal()))
            samples.append(RssiSample(device=device, rssi=rssi, at=at))
    return samples


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowTruth:
    """Ground truth behind one generated window, kept for audit."""

    index: int
    pair_distance_m: float
    cad_ap_distance_m: float
    gd_ap_distance_m: float
    near: bool

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "pair_distance_m": round(self.pair_distance_m, 6),
            "cad_ap_distance_m": round(self.cad_ap_distance_m, 6),
            "gd_ap_distance_m": round(self.gd_ap_distance_m, 6),
            "near": self.near,
        }


def generate_labeled_windows(
    plan: FloorPlan,
    params: PathLossParams,
    n_windows: int,
    sensitivity_x: int,
    seed: int,
    far_min_separation_m: float = FAR_MIN_SEPARATION_M,
) -> tuple[list[TrainingRecord], list[WindowTruth]]:
    """Generate training windows together with the geometry that produced them.

    Windows alternate near/far so any n >= 2 is class-balanced. Each pair is
    placed on a random ray from the access point with the guardian device
    outward of the CAD: separation along the ray maps directly to a
    signal-level difference, which keeps the classes separable while
    per-sample shadowing keeps them noisy.  Far pairs put the CAD in the
    nearer half of the home (a child's device by the living area, the
    guardian off in a distant room).

    The label is recomputed from the sampled pair distance against the
    plan's near threshold, never assumed from the sampling branch.
    """
    if n_windows < 1:
        raise ValidationError("n_windows must be >= 1")
    if sensitivity_x < 1:
        raise ValidationError("sensitivity_x must be >= 1")
    if far_min_separation_m <= plan.near_threshold_m:
        raise ValidationError("far separation must exceed the near threshold")

    rng = np.random.default_rng(seed)
    records: list[TrainingRecord] = []
    truths: list[WindowTruth] = []
    for index in range(n_windows):
        sample_near = index % 2 == 0
        if sample_near:
            cad_dist = rng.uniform(2.0, 9.0)
            separation = rng.uniform(0.05, 0.75) * plan.near_threshold_m
        else:
            cad_dist = rng.uniform(1.5, 4.0)
            separation = rng.uniform(far_min_separation_m, far_min_separation_m + 6.0)
        gd_dist = cad_dist + separation

        values: list[int] = []
        for _ in range(sensitivity_x):
            values.append(rssi_at(cad_dist, params, float(rng.standard_normal())))
            values.append(rssi_at(gd_dist, params, float(rng.standard_normal())))

        near = separation <= plan.near_threshold_m
        records.append(TrainingRecord(rssi_values=tuple(values), label=Label(near=near)))
        truths.append(
            WindowTruth(
                index=index,
                pair_distance_m=separation,
                cad_ap_distance_m=cad_dist,
                gd_ap_distance_m=gd_dist,
                near=near,
            )
        )
    return records, truths


def generate_dataset(
    plan: FloorPlan,
    params: PathLossParams,
    n_windows: int,
    sensitivity_x: int,
    seed: int,
) -> list[TrainingRecord]:
    """Labeled dataset of ``n_windows`` anonymized windows (see
    :func:`generate_labeled_windows` for the geometry)."""
    records, _ = generate_labeled_windows(plan, params, n_windows, sensitivity_x, seed)
    return records


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def dataset_to_csv(records: Sequence[TrainingRecord]) -> str:
    """CSV with header ``r0,...,r{2X-1},label``; label is 0/1."""
    if not records:
        raise ValidationError("cannot write an empty dataset")
    width = len(records[0].rssi_values)
    lines = [",".join([f"r{i}" for i in range(width)] + ["label"])]
    for record in records:
        if len(record.rssi_values) != width:
            raise ValidationError("dataset mixes window lengths")
        lines.append(
            ",".join([str(v) for v in record.rssi_values] + ["1" if record.label.near else "0"])
        )
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str) -> list[TrainingRecord]:
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty dataset file") from None
    if not header or header[-1] != "label":
        raise ValidationError("dataset header must end with 'label'")
    width = len(header) - 1
    records = []
    for row_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != width + 1:
            raise ValidationError(f"line {row_number}: expected {width + 1} columns")
        try:
            values = tuple(int(v) for v in row[:-1])
            label = Label(near=bool(int(row[-1])))
        except ValueError as exc:
            raise ValidationError(f"line {row_number}: {exc}") from exc
        records.append(TrainingRecord(rssi_values=values, label=label))
    if not records:
        raise ValidationError("dataset file has no rows")
    return records


def write_dataset_csv(records: Sequence[TrainingRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dataset_to_csv(records))


def read_dataset_csv(path) -> list[TrainingRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return dataset_from_csv(fh.read())


def write_truth_sidecar(truths: Sequence[WindowTruth], path) -> None:
    """JSON-lines audit trail: the geometry behind each dataset row."""
    with open(path, "w", encoding="utf-8") as fh:
        for truth in truths:
            fh.write(json.dumps(truth.to_dict(), sort_keys=True) + "\n")


def trace_lines(
    samples: Sequence[RssiSample],
    spec: ScenarioSpec,
    plan: FloorPlan,
) -> Iterator[str]:
    """JSON-lines trace: one sample object per line plus the ground-truth
    distance between the device and the access point."""
    for sample in samples:
        pos = spec.placements.get(sample.device)
        if pos is None:
            raise ConfigurationError(f"sample from unplaced device {sample.device}")
        record = sample.to_dict()
        record["distance_m"] = round(max(_distance(pos, plan.ap_position), MIN_AP_DISTANCE_M), 6)
        yield json.dumps(record, sort_keys=True)


def write_trace(samples: Sequence[RssiSample], spec: ScenarioSpec, plan: FloorPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in trace_lines(samples, spec, plan):
            fh.write(line + "\n")


def read_trace(path) -> list[RssiSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            samples.append(RssiSample.from_dict(json.loads(line)))
    return samples
