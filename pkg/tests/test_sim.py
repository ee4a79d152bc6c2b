"""Path-loss model, scenario sample streams, and dataset generation."""

import json
import math

import pytest

from safehome.errors import DomainError, ValidationError
from safehome.model import DeviceId
from safehome.sim import (
    FloorPlan,
    PathLossParams,
    ScenarioSpec,
    dataset_from_csv,
    dataset_to_csv,
    default_floor_plan,
    generate_dataset,
    generate_labeled_windows,
    rssi_at,
    simulate_scenario,
    trace_lines,
)

TV = DeviceId("02:00:00:00:00:10")
PHONE = DeviceId("02:00:00:00:00:30")

NO_NOISE = PathLossParams(p0_dbm=-40.0, d0_m=1.0, exponent_n=2.5, shadow_sigma_db=0.0)


class TestRssiAt:
    def test_reference_distance_yields_p0(self):
        assert rssi_at(1.0, NO_NOISE, 0.0) == -40

    def test_decade_with_exponent_two(self):
        params = PathLossParams(p0_dbm=-40.0, d0_m=1.0, exponent_n=2.0, shadow_sigma_db=0.0)
        assert rssi_at(10.0, params, 0.0) == -60

    def test_hand_computed_noisy_value(self):
        # -40 - 25*log10(4) + 4*1 = -51.0515... -> -51
        params = PathLossParams(p0_dbm=-40.0, d0_m=1.0, exponent_n=2.5, shadow_sigma_db=4.0)
        assert rssi_at(4.0, params, 1.0) == -51

    def test_clamped_to_driver_range(self):
        assert rssi_at(1e6, NO_NOISE, 0.0) == -120
        assert rssi_at(0.0001, NO_NOISE, 0.0) == 0

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_non_positive_distance_is_domain_error(self, bad):
        with pytest.raises(DomainError):
            rssi_at(bad, NO_NOISE, 0.0)

    def test_strictly_decreasing_without_noise(self):
        import random

        rng = random.Random(17)
        distances = sorted(rng.uniform(0.5, 50.0) for _ in range(200))
        values = [rssi_at(d, NO_NOISE, 0.0) for d in distances]
        for earlier, later in zip(values, values[1:]):
            assert later <= earlier  # integer rounding allows plateaus, never increases

        # on a coarse grid the decrease is strict
        coarse = [rssi_at(d, NO_NOISE, 0.0) for d in (1, 2, 4, 8, 16, 32)]
        assert all(b < a for a, b in zip(coarse, coarse[1:]))


class TestParamAndPlanValidation:
    def test_param_bounds(self):
        with pytest.raises(ValidationError):
            PathLossParams(d0_m=0.0)
        with pytest.raises(ValidationError):
            PathLossParams(exponent_n=0.0)
        with pytest.raises(ValidationError):
            PathLossParams(exponent_n=11.0)
        with pytest.raises(ValidationError):
            PathLossParams(shadow_sigma_db=-1.0)
        with pytest.raises(ValidationError):
            PathLossParams(shadow_sigma_db=25.0)

    def test_plan_threshold_positive(self):
        with pytest.raises(ValidationError):
            FloorPlan(near_threshold_m=0.0)

    def test_plan_positions_finite(self):
        with pytest.raises(ValidationError):
            FloorPlan(rooms={"void": (float("nan"), 0.0)})


class TestSimulateScenario:
    def spec(self, placements, ticks=5, calendar=False, scenario_id=1):
        return ScenarioSpec(
            scenario_id=scenario_id,
            placements=placements,
            calendar_event_active=calendar,
            duration_ticks=ticks,
        )

    def test_absent_device_emits_nothing(self):
        spec = self.spec({TV: (2.0, 1.5), PHONE: None}, ticks=5)
        samples = simulate_scenario(spec, default_floor_plan(), NO_NOISE, seed=1)
        assert len(samples) == 5  # one per tick for the single present device
        assert all(s.device == TV for s in samples)

    def test_two_placed_devices_two_samples_per_tick(self):
        spec = self.spec({TV: (2.0, 1.5), PHONE: (2.0, 1.5)}, ticks=5)
        samples = simulate_scenario(spec, default_floor_plan(), NO_NOISE, seed=1)
        assert len(samples) == 10

    def test_equidistant_devices_equal_every_tick_without_noise(self):
        spec = self.spec({TV: (3.0, 0.0), PHONE: (0.0, 3.0)}, ticks=8, scenario_id=6)
        samples = simulate_scenario(spec, default_floor_plan(), NO_NOISE, seed=3)
        by_tick = {}
        for sample in samples:
            by_tick.setdefault(sample.at, []).append(sample.rssi)
        for values in by_tick.values():
            assert len(values) == 2 and values[0] == values[1]

    def test_same_seed_same_stream(self):
        spec = self.spec({TV: (2.0, 1.5), PHONE: (-3.0, 12.0)}, ticks=20)
        params = PathLossParams()
        a = simulate_scenario(spec, default_floor_plan(), params, seed=42)
        b = simulate_scenario(spec, default_floor_plan(), params, seed=42)
        assert a == b

    def test_different_seed_differs(self):
        spec = self.spec({TV: (2.0, 1.5)}, ticks=20)
        params = PathLossParams()
        a = simulate_scenario(spec, default_floor_plan(), params, seed=1)
        b = simulate_scenario(spec, default_floor_plan(), params, seed=2)
        assert a != b

    def test_scenario_id_range(self):
        with pytest.raises(ValidationError):
            self.spec({TV: (1.0, 1.0)}, scenario_id=7)


class TestGenerateDataset:
    def test_record_shape(self):
        records = generate_dataset(default_floor_plan(), PathLossParams(), 1, 3, seed=0)
        assert len(records) == 1
        assert len(records[0].rssi_values) == 6
        assert isinstance(records[0].label.near, bool)

    def test_labels_match_recorded_ground_truth(self):
        plan = default_floor_plan()
        records, truths = generate_labeled_windows(plan, PathLossParams(), 300, 4, seed=11)
        for record, truth in zip(records, truths):
            assert record.label.near == (truth.pair_distance_m <= plan.near_threshold_m)
            assert truth.gd_ap_distance_m == pytest.approx(
                truth.cad_ap_distance_m + truth.pair_distance_m
            )

    def test_near_pairs_below_threshold_by_construction(self):
        plan = default_floor_plan()
        _, truths = generate_labeled_windows(plan, PathLossParams(), 100, 2, seed=5)
        for truth in truths:
            if truth.near:
                assert truth.pair_distance_m <= plan.near_threshold_m
            else:
                assert truth.pair_distance_m >= 8.0

    def test_class_balance(self):
        records = generate_dataset(default_floor_plan(), PathLossParams(), 1001, 2, seed=9)
        near = sum(r.label.near for r in records)
        assert 0.45 <= near / len(records) <= 0.55

    def test_deterministic_csv(self):
        plan, params = default_floor_plan(), PathLossParams()
        a = dataset_to_csv(generate_dataset(plan, params, 200, 10, seed=123))
        b = dataset_to_csv(generate_dataset(plan, params, 200, 10, seed=123))
        assert a == b

    def test_csv_round_trip(self):
        records = generate_dataset(default_floor_plan(), PathLossParams(), 50, 3, seed=2)
        assert dataset_from_csv(dataset_to_csv(records)) == records

    def test_csv_header(self):
        text = dataset_to_csv(generate_dataset(default_floor_plan(), PathLossParams(), 2, 2, seed=0))
        assert text.splitlines()[0] == "r0,r1,r2,r3,label"

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValidationError):
            generate_dataset(default_floor_plan(), PathLossParams(), 0, 2, seed=0)
        with pytest.raises(ValidationError):
            generate_dataset(default_floor_plan(), PathLossParams(), 5, 0, seed=0)


class TestTrace:
    def test_trace_carries_ground_truth_distance(self):
        plan = default_floor_plan()
        spec = ScenarioSpec(
            scenario_id=2,
            placements={TV: plan.rooms["lounge"], PHONE: plan.rooms["guardian_room"]},
            calendar_event_active=False,
            duration_ticks=3,
        )
        samples = simulate_scenario(spec, plan, NO_NOISE, seed=0)
        lines = list(trace_lines(samples, spec, plan))
        assert len(lines) == len(samples)
        first = json.loads(lines[0])
        expected = math.hypot(2.0, 1.5)
        assert first["distance_m"] == pytest.approx(expected, abs=1e-6)
        assert {"device", "rssi", "at", "distance_m"} <= set(first)
