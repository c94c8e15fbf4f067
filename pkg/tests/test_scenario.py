import json
import math

import numpy as np
import pytest

from articnav.geom2d import point_segment_distance
from articnav.scenario import (Entry, RoundaboutSpec, ScenarioError, ScenarioFormatError, analytic_route_length,
                               dumps_scenario, first_exit_route, generate_roundabout, load_scenario, loads_scenario,
                               route_plan, routes_by_entry, save_scenario, scenario_to_dict)


def test_benchmark_family_route_counts(family):
    counts = {k: len(v.routes) for k, v in family.items()}
    assert counts == {"roundabout_16m": 20, "roundabout_20m": 20, "roundabout_32m": 20,
                      "roundabout_40m": 12, "roundabout_50m": 20}


def test_five_routes_per_entry_on_four_entry_roundabout(s16):
    assert [len(v) for v in routes_by_entry(s16).values()] == [5, 5, 5, 5]


def test_three_entry_roundabout_gets_four_routes_per_entry(family):
    plan = route_plan(family["roundabout_40m"].spec)
    per_entry = {}
    for entry, exit_, lane in plan:
        per_entry.setdefault(entry, []).append((exit_, lane))
    assert all(len(v) == 4 for v in per_entry.values())


def test_inner_ring_radius_for_16m():
    assert RoundaboutSpec.evenly_spaced(16, 4).ring_radius(0) == pytest.approx(9.85)


def test_waypoint_spacing_and_forward_invariants(family):
    for sc in family.values():
        for r in sc.routes:
            gaps = np.hypot(*np.diff(r.positions, axis=0).T)
            assert np.abs(gaps - 1.0).max() < 1e-6
            chords = np.diff(r.positions, axis=0) / gaps[:, None]
            ang = np.arctan2(chords[:, 0] * r.forwards[:-1, 1] - chords[:, 1] * r.forwards[:-1, 0],
                             (chords * r.forwards[:-1]).sum(axis=1))
            assert np.abs(ang).max() < 0.05


def test_waypoints_keep_half_lane_clearance_from_kerbs(family):
    for sc in family.values():
        segs = sc.kerb_segments
        for r in sc.routes:
            d = point_segment_distance(r.positions, segs).min()
            assert d >= sc.spec.lane_width / 2 - 0.05


def test_first_exit_length_matches_analytic_arc_sum(family):
    for sc in family.values():
        r = sc.routes[first_exit_route(sc)]
        analytic = analytic_route_length(sc.spec, r.entry_index, r.exit_index, 1)
        assert r.length == pytest.approx(analytic, rel=0.02)


def test_generation_is_deterministic():
    spec = RoundaboutSpec.evenly_spaced(20, 4)
    assert dumps_scenario(generate_roundabout(spec)) == dumps_scenario(generate_roundabout(spec))


def test_round_trip_is_byte_identical(tmp_path, s16):
    p = save_scenario(s16, tmp_path / "s.json")
    again = load_scenario(p)
    assert dumps_scenario(again) == p.read_text()
    assert again.routes[3] == s16.routes[3]


def test_negative_lane_width_in_file_is_rejected(s16):
    d = scenario_to_dict(s16)
    d["spec"]["lane_width"] = -3.7
    with pytest.raises((ScenarioFormatError, ScenarioError)):
        loads_scenario(json.dumps(d))


def test_version_mismatch_is_explicit(s16):
    d = scenario_to_dict(s16)
    d["version"] = 99
    with pytest.raises(ScenarioFormatError, match="unsupported version"):
        loads_scenario(json.dumps(d))


def test_malformed_json_reports_line():
    with pytest.raises(ScenarioFormatError, match="line 2"):
        loads_scenario('{\n  "format": oops\n}')


def test_overlapping_entries_are_rejected():
    spec = RoundaboutSpec(16, (Entry(0.0), Entry(0.3), Entry(math.pi)))
    with pytest.raises(ScenarioError):
        generate_roundabout(spec)


@pytest.mark.parametrize("kw", [dict(diameter=-1), dict(lane_width=0), dict(entries=(Entry(0.0), Entry(0.0),
                                                                                     Entry(2.0)))])
def test_invalid_specs_rejected(kw):
    base = dict(diameter=16, entries=(Entry(0.0), Entry(2.0), Entry(4.0)))
    base.update(kw)
    with pytest.raises(ScenarioError):
        RoundaboutSpec(**base)


def test_route_lookup_out_of_range(s16):
    with pytest.raises(IndexError):
        s16.route(99)
