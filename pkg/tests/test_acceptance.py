"""Acceptance gate: one test per shipped guarantee.

Each test exercises a user-facing guarantee end to end at its stated
tolerance and prints a single ``[PASS]``/``[FAIL]`` line with the measured
value (written past the capture plumbing so the line shows up in normal
pytest output). Expected values come from the independent oracles in
``oracles.py`` or from closed forms re-derived here, never from the library
under test.
"""

import json
import math
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from oracles import integrate_spiral, lidar_oracle, random_polygon_pairs
from test_events import fixture_map, run_script, state, tiny_map

from roadsim.agents import (
    Action,
    IdmParams,
    ParticipantSpec,
    ParticipantState,
    RuleBasedModel,
    WorldView,
    behavior_decide,
    footprint_of,
    idm_accel,
    step_bicycle,
)
from roadsim.cli import map_from_json, map_to_json
from roadsim.jsonfmt import dumps as json_dumps
from roadsim.env import (
    MapSource,
    config_from_dict,
    load_map,
    reset,
    run_episode,
    step,
    substream,
)
from roadsim.events import detect_collisions
from roadsim.geometry import ConvexPolygon, Polyline, Pose2, convex_overlap
from roadsim.map_parsers import (
    ProjectionSpec,
    parse_opendrive,
    parse_osm_lanelet2,
)
from roadsim.map_parsers.opendrive import (
    DEFAULT_DS,
    PlanViewSegment,
    sample_plan_view,
)
from roadsim.policies import make_policy
from roadsim.sensors import LidarSpec, beam_angles, scan_lidar
from roadsim.traffic_data import synth_fixture

FIXTURES = Path(__file__).parent / "fixtures"
ORIGIN = {"lat": 49.0, "lon": 8.4}
CAR = ParticipantSpec.for_class("car")


def _report(name: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    print(f"[{verdict}] {name}: {detail}", file=sys.__stdout__, flush=True)


def test_geometry_overlap_matches_bruteforce_oracle():
    total = 1000
    agree = 0
    start = time.perf_counter()
    for a, b, expected in random_polygon_pairs(
        seed=2026, count=total, min_margin=1e-3
    ):
        if convex_overlap(ConvexPolygon(a), ConvexPolygon(b)) == expected:
            agree += 1
    elapsed = time.perf_counter() - start
    ok = agree == total and elapsed < 5.0
    _report(
        "geometry oracle equivalence", ok,
        f"{agree}/{total} seeded pairs (margin > 1e-3 m) agree with the "
        f"brute-force oracle in {elapsed:.2f} s (limit 5 s)",
    )
    assert ok


def test_opendrive_arc_and_clothoid_endpoint_accuracy():
    rng = random.Random(7)
    worst_arc = 0.0
    for _ in range(20):
        x0, y0 = rng.uniform(-50, 50), rng.uniform(-50, 50)
        hdg = rng.uniform(-math.pi, math.pi)
        length = rng.uniform(5.0, 80.0)
        curv = rng.choice([-1.0, 1.0]) * rng.uniform(0.005, 0.08)
        seg = PlanViewSegment(
            "arc", 0.0, Pose2.of(x0, y0, hdg), length, {"curvature": curv}
        )
        end = sample_plan_view(seg, DEFAULT_DS).pts[-1]
        # Closed form re-derived independently: rotate the start point about
        # the turn center (start + radius * left normal) by curv * length.
        r = 1.0 / curv
        cx, cy = x0 - r * math.sin(hdg), y0 + r * math.cos(hdg)
        phi = curv * length
        vx, vy = x0 - cx, y0 - cy
        ex = cx + vx * math.cos(phi) - vy * math.sin(phi)
        ey = cy + vx * math.sin(phi) + vy * math.cos(phi)
        worst_arc = max(worst_arc, math.hypot(end[0] - ex, end[1] - ey))

    worst_spiral = 0.0
    for _ in range(20):
        x0, y0 = rng.uniform(-50, 50), rng.uniform(-50, 50)
        hdg = rng.uniform(-math.pi, math.pi)
        length = rng.uniform(10.0, 60.0)
        c0 = rng.uniform(-0.05, 0.05)
        c1 = rng.uniform(-0.05, 0.05)
        seg = PlanViewSegment(
            "spiral", 0.0, Pose2.of(x0, y0, hdg), length,
            {"curv_start": c0, "curv_end": c1},
        )
        end = sample_plan_view(seg, DEFAULT_DS).pts[-1]
        ex, ey, _ = integrate_spiral(x0, y0, hdg, length, c0, c1)
        worst_spiral = max(worst_spiral, math.hypot(end[0] - ex, end[1] - ey))

    ok = worst_arc <= 1e-6 and worst_spiral <= 1e-4
    _report(
        "opendrive geometry accuracy", ok,
        f"20 arcs worst endpoint error {worst_arc:.2e} m (tol 1e-6); "
        f"20 clothoids worst {worst_spiral:.2e} m vs 10,000-step "
        f"integration (tol 1e-4)",
    )
    assert ok


def test_map_parsers_round_trip_fixture_maps():
    manifest = json.loads((FIXTURES / "manifest.json").read_text())
    origin = ProjectionSpec(
        manifest["origin"]["lat"], manifest["origin"]["lon"]
    )
    worst = 0.0
    counts_ok = True
    ids_ok = True
    checked = []
    for name, expected in sorted(manifest["files"].items()):
        text = (FIXTURES / name).read_text()
        if expected["format"] == "osm":
            tmap = parse_osm_lanelet2(text, origin)
        else:
            tmap = parse_opendrive(text)
        for attr in ("lanes", "linestrings", "areas", "regulatory"):
            if len(getattr(tmap, attr)) != expected[attr]:
                counts_ok = False
        # Same serialization the CLI --dump path uses (9-decimal floats).
        back = map_from_json(json.loads(json_dumps(map_to_json(tmap))))
        for attr in ("lanes", "linestrings", "areas", "regulatory"):
            if set(getattr(back, attr)) != set(getattr(tmap, attr)):
                ids_ok = False
        for ls_id, ls in tmap.linestrings.items():
            delta = np.abs(ls.geometry.pts - back.linestrings[ls_id].geometry.pts)
            worst = max(worst, float(delta.max()))
        for lane_id, lane in tmap.lanes.items():
            delta = np.abs(
                lane.centerline.pts - back.lanes[lane_id].centerline.pts
            )
            worst = max(worst, float(delta.max()))
        for area_id, area in tmap.areas.items():
            delta = np.abs(area.ring - back.areas[area_id].ring)
            worst = max(worst, float(delta.max()))
        checked.append(name)
    ok = counts_ok and ids_ok and worst <= 1e-9
    _report(
        "parser round-trip", ok,
        f"{len(checked)} fixture maps: element counts match manifest "
        f"({'yes' if counts_ok else 'NO'}), ids identical after dump/reparse "
        f"({'yes' if ids_ok else 'NO'}), worst coordinate delta "
        f"{worst:.2e} m (tol 1e-9)",
    )
    assert ok


def test_lidar_matches_analytic_intersections():
    spec = LidarSpec(n_beams=36, fov=2.0 * math.pi, max_range=50.0)
    worst = 0.0
    for case in range(50):
        rng = random.Random(1000 + case)
        ex, ey = rng.uniform(-10, 10), rng.uniform(-10, 10)
        eh = rng.uniform(-math.pi, math.pi)
        dist = rng.uniform(5.0, 25.0)
        bearing = rng.uniform(-math.pi, math.pi)
        obs_pose = Pose2.of(
            ex + dist * math.cos(bearing),
            ey + dist * math.sin(bearing),
            rng.uniform(-math.pi, math.pi),
        )
        states = {
            "ego": ParticipantState(0.0, Pose2.of(ex, ey, eh), 0.0),
            "obstacle": ParticipantState(0.0, obs_pose, 0.0),
        }
        view = WorldView(
            time=0.0, dt=0.1, states=states,
            specs={"ego": CAR, "obstacle": CAR}, paths={},
        )
        got = scan_lidar(view, "ego", spec)
        verts = footprint_of(CAR, states["obstacle"]).vertices
        segs = [
            (
                verts[k, 0], verts[k, 1],
                verts[(k + 1) % len(verts), 0], verts[(k + 1) % len(verts), 1],
            )
            for k in range(len(verts))
        ]
        expected = lidar_oracle(
            ex, ey, beam_angles(eh, spec), segs, spec.max_range
        )
        worst = max(worst, float(np.max(np.abs(got - expected))))
    ok = worst <= 1e-6
    _report(
        "lidar accuracy", ok,
        f"50 seeded single-obstacle scenes x 36 beams, max error vs "
        f"analytic intersection {worst:.2e} m (tol 1e-6)",
    )
    assert ok


def test_idm_equilibrium_and_following_convergence():
    params = IdmParams()
    eq_accel = idm_accel(params.v0, math.inf, 0.0, params)
    eq_ok = abs(eq_accel) <= 1e-12

    model = RuleBasedModel(idm=params)
    path = Polyline([(0.0, 0.0), (1000.0, 0.0)])
    lead = ParticipantState(0.0, Pose2.of(120.0, 0.0, 0.0), 0.0)
    ego = ParticipantState(0.0, Pose2.of(0.0, 0.0, 0.0), 10.0)
    dt = 0.1
    collided = False
    for k in range(600):  # 60 simulated seconds
        view = WorldView(
            time=(k + 1) * dt, dt=dt,
            states={"ego": ego, "lead": lead},
            specs={"ego": CAR, "lead": CAR},
            paths={"ego": path},
        )
        if detect_collisions(view):
            collided = True
            break
        action = behavior_decide(model, view, "ego")
        ego = step_bicycle(ego, action, dt, CAR)
    gap = (lead.pose.x - ego.pose.x) - CAR.length
    conv_ok = not collided and params.s0 <= gap <= params.s0 + 0.5
    ok = eq_ok and conv_ok
    _report(
        "IDM behavior", ok,
        f"no-leader accel at v=v0 is {eq_accel:.1e} (tol 1e-12); follower "
        f"gap after 60 s is {gap:.3f} m (target [{params.s0}, "
        f"{params.s0 + 0.5}]), collision event: {collided}",
    )
    assert ok


def test_event_suite_scripted_scenarios_with_legal_twins():
    # Expected first-occurrence steps are derived from the scripts:
    # car footprints are 4.5 m long, so head-on centers 2k and 20-2k first
    # overlap at step 4 (|20-4k| = 4.0 <= 4.5); drifting 0.8 m per step from
    # the lane center first pokes a 0.9 m half-width corner past y=3.5 at
    # step 2; wrong-way needs 2.0 s of opposition, i.e. the 20th opposed step
    # at dt=0.1; the rear axle (center 46+2k minus the rear offset) crosses
    # the x=50 stop line between steps 2 and 3; the xsection script enters
    # the perpendicular exit arm at step 2.
    scripted = []

    crash = run_script(
        [{"a": state(x, 0.0), "b": state(20 - x, 0.0)} for x in range(0, 14, 2)]
    )
    near_miss = run_script(
        [{"a": state(x, 0.0), "b": state(20 - x, 2.5)} for x in range(0, 14, 2)]
    )
    scripted.append(("collision", 4, crash, near_miss))

    lane_map = tiny_map()
    drift = run_script(
        [{"a": state(50, 1.75 + k * 0.8)} for k in range(6)], tmap=lane_map
    )
    keep = run_script(
        [{"a": state(40 + k, 1.75)} for k in range(6)], tmap=lane_map
    )
    scripted.append(("off_road", 2, drift, keep))

    opposed = run_script([{"a": state(50, 1.75, math.pi)}] * 25, tmap=lane_map)
    brief = run_script(
        [{"a": state(50, 1.75, math.pi)}] * 19
        + [{"a": state(50, 1.75, 0.0)}] * 30,
        tmap=lane_map,
    )
    scripted.append(("wrong_way", 19, opposed, brief))

    light_map = tiny_map(with_light=True)
    crossing = [{"a": state(46 + 2 * k, 1.75, 0.0, 5.0)} for k in range(5)]
    red = run_script(crossing, tmap=light_map, signals={"TL": "red"})
    green = run_script(crossing, tmap=light_map, signals={"TL": "green"})
    scripted.append(("red_light_run", 3, red, green))

    xmap = fixture_map("xsection.osm")
    turning = [
        {"a": state(-30, -1.75, 0.0)},
        {"a": state(0.0, -1.75, 0.0)},
        {"a": state(1.75, -15.0, -math.pi / 2)},
        {"a": state(1.75, -30.0, -math.pi / 2)},
    ]
    straight_on = [
        {"a": state(-30, -1.75, 0.0)},
        {"a": state(0.0, -1.75, 0.0)},
        {"a": state(30.0, -1.75, 0.0)},
    ]
    illegal = run_script(turning, tmap=xmap)
    legal = run_script(straight_on, tmap=xmap)
    scripted.append(("illegal_turn", 2, illegal, legal))

    hits = 0
    silent = 0
    details = []
    for kind, expected_step, log, twin_log in scripted:
        kinds = {e.kind for evs in log for e in evs}
        steps = [k for k, evs in enumerate(log) if any(e.kind == kind for e in evs)]
        got_step = steps[0] if steps else None
        if kinds == {kind} and got_step == expected_step:
            hits += 1
        else:
            details.append(f"{kind}: kinds={sorted(kinds)} step={got_step}")
        if all(not evs for evs in twin_log):
            silent += 1
        else:
            details.append(f"{kind}-twin: emitted events")
    ok = hits == 5 and silent == 5
    _report(
        "event suite", ok,
        f"{hits}/5 scripts emit exactly the expected kind at the expected "
        f"step, {silent}/5 legal twins silent"
        + (f"; deviations: {'; '.join(details)}" if details else ""),
    )
    assert ok


def _determinism_config(tmp_path):
    # Replay traffic confined to lane 1 and done by t=30 s; the ego sits on
    # lane 2 far downstream, so neither the idle nor the wandering random
    # ego can reach a collision inside the 500 logged steps.
    csv = tmp_path / "lane1.csv"
    rows = ["track_id,t,x,y,heading,speed,class,length,width"]
    for k in range(4):
        x0 = 5.0 + 20.0 * k
        rows.append(f"t{k},0.0,{x0},1.75,0.0,7.5,car,4.5,1.8")
        rows.append(f"t{k},30.0,{x0 + 225.0},1.75,0.0,7.5,car,4.5,1.8")
    csv.write_text("\n".join(rows) + "\n")
    return config_from_dict({
        "kind": "highway",
        "map": {"path": str(FIXTURES / "straight.osm"), "origin": ORIGIN},
        "traffic": {"path": str(csv), "schema": "generic"},
        "agents": [
            {"id": "ego", "class": "car",
             "spawn": {"x": 390.0, "y": 5.25, "heading": 0.0, "speed": 0.0}},
        ],
        "max_steps": 1000,
    })


def test_determinism_byte_identical_logs(tmp_path):
    results = {}
    for policy_name in ("idle", "random"):
        blobs = []
        steps = []
        for _ in range(2):
            policy = make_policy(
                policy_name, rng=np.random.default_rng(99)
            ) if policy_name == "random" else make_policy(policy_name)
            episode = run_episode(
                _determinism_config(tmp_path), seed=123, policy=policy,
                n_steps=500,
            )
            blobs.append(("\n".join(episode.lines) + "\n").encode())
            steps.append(len(episode.lines))
        results[policy_name] = (blobs[0] == blobs[1], steps[0])
    ok = all(same for same, _ in results.values()) and all(
        n == 500 for _, n in results.values()
    )
    _report(
        "determinism", ok,
        "two 500-step runs byte-identical: "
        + ", ".join(
            f"{name} policy {'yes' if same else 'NO'} ({n} steps logged)"
            for name, (same, n) in results.items()
        ),
    )
    assert ok


def test_replay_fidelity_at_frame_times():
    seed = 17
    n_tracks = 8
    cfg = config_from_dict({
        "kind": "highway",
        "map": {"path": str(FIXTURES / "straight.osm"), "origin": ORIGIN},
        "traffic": {"synthetic": {"tracks": n_tracks}},
        "agents": [
            {"id": "ego", "class": "car",
             "spawn": {"x": 390.0, "y": 5.25, "heading": 0.0, "speed": 0.0}},
        ],
        "max_steps": 400,
    })
    world, _ = reset(cfg, seed)
    # Rebuild the dataset the env generated from its seed substream.
    tmap = load_map(
        MapSource(path=str(FIXTURES / "straight.osm"), origin=(49.0, 8.4))
    )
    synth_seed = int(substream(seed, "traffic").integers(0, 2**31))
    dataset = synth_fixture(tmap, n_tracks, synth_seed)
    frames = {
        tid: {round(pt.time, 9): pt for pt in track.points}
        for tid, track in dataset.tracks.items()
    }
    worst = 0.0
    compared = {tid: 0 for tid in dataset.tracks}
    for _ in range(350):
        if not world.live_agents():
            break
        step(world, {"ego": Action(0.0, 0.0)})
        t_key = round(world.time, 9)
        for tid in dataset.tracks:
            point = frames[tid].get(t_key)
            if point is None:
                continue
            got = world.participants[tid].state.pose
            worst = max(
                worst,
                abs(got.x - point.pose.x),
                abs(got.y - point.pose.y),
            )
            compared[tid] += 1
    all_tracks = all(n > 0 for n in compared.values())
    ok = worst <= 1e-9 and all_tracks and len(compared) == n_tracks
    _report(
        "replay fidelity", ok,
        f"{sum(compared.values())} frame-time states across "
        f"{len(compared)} synthetic tracks, worst position error "
        f"{worst:.2e} m (tol 1e-9)",
    )
    assert ok


def test_throughput_bench_target(tmp_path):
    scenario = {
        "kind": "highway",
        "map": {"path": str(FIXTURES / "straight.osm"), "origin": ORIGIN},
        "traffic": {"synthetic": {"tracks": 10}},
        "agents": [
            {"id": "ego", "class": "car",
             "spawn": {"x": 390.0, "y": 5.25, "heading": 0.0, "speed": 0.0}},
        ],
        "max_steps": 2000,
    }
    path = tmp_path / "bench.json"
    path.write_text(json.dumps(scenario))
    # The target is for the engine as shipped: let the kernel dispatch pick
    # its default backend even when this suite runs in forced-pure mode.
    env = {k: v for k, v in os.environ.items() if k != "ROADSIM_PURE_KERNELS"}
    proc = subprocess.run(
        [sys.executable, "-m", "roadsim.cli", "bench",
         "--scenario", str(path), "--seed", "1", "--steps", "2000"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0, proc.stderr
    rate = None
    for line in proc.stdout.splitlines():
        if line.startswith("steps_per_s:"):
            rate = float(line.split(":")[1])
    ok = rate is not None and rate >= 2000.0
    _report(
        "throughput", ok,
        f"bench: {rate:.0f} steps/s with 10 replay participants, sensors "
        f"disabled, single thread (target >= 2000)",
    )
    assert ok
