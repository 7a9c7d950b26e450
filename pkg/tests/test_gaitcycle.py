import numpy as np
import pytest

from regait.errors import (
    CycleRejectedError,
    EventFileError,
    InsufficientEventsError,
    NoEventsError,
    NonMonotonicEventsError,
)
from regait.gaitcycle import (
    build_ensembles,
    ensemble_stats,
    ensembles_from_csv,
    ensembles_to_csv,
    load_events,
    normalize_cycle,
    plot_data_to_csv,
    save_events,
    segment_cycles,
)
from regait.kinematics import JointAngleSeries
from regait.model import GaitEvent, Side
from regait.svgplot import render_cycle_panels


def events_csv(tmp_path, rows):
    path = tmp_path / "events.csv"
    path.write_text("frame,side,kind\n" + "\n".join(rows) + ("\n" if rows else ""))
    return path


def angle_series(values, valid=None, side=Side.RIGHT):
    values = np.asarray(values, dtype=float)
    n = len(values)
    valid = np.ones(n, bool) if valid is None else np.asarray(valid, bool)
    return JointAngleSeries(
        side=side,
        hip_deg=values, knee_deg=values.copy(), ankle_deg=values.copy(),
        hip_valid=valid, knee_valid=valid.copy(), ankle_valid=valid.copy(),
    )


class TestLoadEvents:
    def test_two_rows_one_cycle(self, tmp_path):
        events = load_events(events_csv(tmp_path, ["12,R,HS", "45,R,HS"]))
        assert len(events) == 2
        assert segment_cycles(events, Side.RIGHT) == [(12, 45)]

    def test_out_of_order_rejected(self, tmp_path):
        with pytest.raises(NonMonotonicEventsError):
            load_events(events_csv(tmp_path, ["45,R,HS", "12,R,HS"]))

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(NoEventsError):
            load_events(events_csv(tmp_path, []))
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(NoEventsError):
            load_events(empty)

    def test_unknown_side_and_kind_rejected(self, tmp_path):
        with pytest.raises(EventFileError):
            load_events(events_csv(tmp_path, ["3,middle,HS"]))
        with pytest.raises(EventFileError):
            load_events(events_csv(tmp_path, ["3,R,toe_off"]))

    def test_full_names_accepted_and_round_trip(self, tmp_path):
        events = load_events(
            events_csv(tmp_path, ["3,left,heel_strike", "33,left,heel_strike"])
        )
        path = save_events(events, tmp_path / "roundtrip.csv")
        assert load_events(path) == events


class TestSegment:
    def test_five_strikes_four_cycles(self):
        events = [GaitEvent(f, Side.RIGHT) for f in (10, 42, 75, 108, 140)]
        cycles = segment_cycles(events, Side.RIGHT)
        assert len(cycles) == 4
        assert cycles[0] == (10, 42)

    def test_single_event_insufficient(self):
        with pytest.raises(InsufficientEventsError):
            segment_cycles([GaitEvent(10, Side.RIGHT)], Side.RIGHT)


class TestNormalize:
    def test_sampling_positions(self):
        # cycle [10, 40]: sample k lands at frame 10 + 0.3 k; k=50 -> 25.0
        n = 60
        series = angle_series(np.arange(n, dtype=float))
        cycle = normalize_cycle(series, (10, 40))
        assert cycle.hip_deg[50] == pytest.approx(25.0)
        assert cycle.hip_deg[0] == pytest.approx(10.0)
        assert cycle.hip_deg[100] == pytest.approx(40.0)

    def test_constant_series(self):
        cycle = normalize_cycle(angle_series(np.full(50, 7.0)), (5, 45))
        assert np.allclose(cycle.hip_deg, 7.0)
        assert cycle.hip_valid.all()

    def test_linear_ramp_exact_everywhere(self):
        # 0 -> 30 degrees across the cycle: sample k must be exactly 0.3 k.
        n = 101
        frames = np.arange(n, dtype=float)
        series = angle_series(frames * 30.0 / 100.0)
        cycle = normalize_cycle(series, (0, 100))
        assert np.max(np.abs(cycle.knee_deg - 0.3 * np.arange(101))) < 1e-9

    def test_validity_below_90_percent_rejects(self):
        valid = np.ones(100, bool)
        valid[10:22] = False  # 12 of 101 frames in [0, 100] span invalid
        series = angle_series(np.arange(100.0), valid=valid)
        with pytest.raises(CycleRejectedError):
            normalize_cycle(series, (0, 99))

    def test_invalid_span_marks_samples_invalid(self):
        valid = np.ones(101, bool)
        valid[50:53] = False  # 3 frames: under the 10% budget
        series = angle_series(np.arange(101.0), valid=valid)
        cycle = normalize_cycle(series, (0, 100))
        assert not cycle.hip_valid[50:53].any()
        assert cycle.hip_valid[:49].all()


class TestEnsemble:
    def test_single_cycle_mean_is_cycle_sd_zero(self):
        series = angle_series(np.arange(40.0))
        cycle = normalize_cycle(series, (0, 30))
        ens = ensemble_stats([cycle])
        assert np.allclose(ens.mean["hip"], cycle.hip_deg)
        assert np.allclose(ens.sd["hip"], 0.0)

    def test_two_constant_cycles_hand_stats(self):
        a = normalize_cycle(angle_series(np.full(40, 10.0)), (0, 30))
        b = normalize_cycle(angle_series(np.full(40, 20.0)), (5, 35))
        ens = ensemble_stats([a, b])
        assert np.allclose(ens.mean["hip"], 15.0)
        # sample SD of {10, 20}: |10 - 20| / sqrt(2)
        assert np.allclose(ens.sd["hip"], 10.0 / np.sqrt(2.0))
        assert np.allclose(ens.sd["hip"], 7.0711, atol=1e-4)

    def test_masked_points_use_remaining_cycles(self):
        valid = np.ones(101, bool)
        valid[93:] = False  # 93/101 valid: above the 90% acceptance gate
        a = normalize_cycle(angle_series(np.full(101, 10.0), valid=valid), (0, 100))
        b = normalize_cycle(angle_series(np.full(101, 20.0)), (0, 100))
        ens = ensemble_stats([a, b])
        assert np.allclose(ens.mean["hip"][:93], 15.0)
        assert np.allclose(ens.mean["hip"][93:], 20.0)
        assert list(ens.count["hip"][93:]) == [1] * 8

    def test_permutation_invariant(self):
        cycles = [
            normalize_cycle(angle_series(np.full(40, v)), (0, 30))
            for v in (5.0, 10.0, 30.0)
        ]
        a = ensemble_stats(cycles)
        b = ensemble_stats(cycles[::-1])
        assert np.allclose(a.mean["hip"], b.mean["hip"])
        assert np.allclose(a.sd["hip"], b.sd["hip"])

    def test_identical_cycles_sd_zero(self):
        series = angle_series(np.sin(np.arange(40.0)))
        c = normalize_cycle(series, (0, 30))
        ens = ensemble_stats([c, c])
        assert np.allclose(ens.sd["hip"], 0.0)

    def test_mixed_sides_rejected(self):
        a = normalize_cycle(angle_series(np.full(40, 1.0), side=Side.LEFT), (0, 30))
        b = normalize_cycle(angle_series(np.full(40, 1.0), side=Side.RIGHT), (0, 30))
        with pytest.raises(ValueError):
            ensemble_stats([a, b])

    def test_no_cycles_rejected(self):
        with pytest.raises(ValueError):
            ensemble_stats([])


class TestEndToEnd:
    def test_build_ensembles_from_oracle(self, walk, walk_angles):
        ensembles, notes = build_ensembles(walk_angles, walk.events)
        assert notes == []
        # 6 strikes per side -> 5 cycles per side
        assert ensembles[Side.LEFT].n_cycles == 5
        assert ensembles[Side.RIGHT].n_cycles == 5
        # All cycles of a strictly periodic model are identical.
        assert np.nanmax(ensembles[Side.LEFT].sd["knee"]) < 1e-6

    def test_csv_round_trip_and_plots(self, tmp_path, walk, walk_angles):
        ensembles, _ = build_ensembles(walk_angles, walk.events)
        path = ensembles_to_csv(ensembles, tmp_path / "ens.csv")
        back = ensembles_from_csv(path)
        assert np.allclose(
            back[Side.LEFT]["hip"]["mean"], ensembles[Side.LEFT].mean["hip"], atol=1e-6
        )
        plot_csv = plot_data_to_csv({"m": ensembles}, tmp_path / "plot.csv")
        assert plot_csv.read_text().startswith("percent,method,side,joint")
        svg = render_cycle_panels({"m": ensembles}, tmp_path / "panels.svg")
        text = svg.read_text()
        assert text.startswith("<svg") and "polyline" in text
