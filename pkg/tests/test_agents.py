"""Tests for participant specs, kinematics, behavior models, and signals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadsim.agents import (
    Action,
    ExternalPolicyModel,
    IdmParams,
    ParticipantSpec,
    ParticipantState,
    ReplayModel,
    RuleBasedModel,
    SignalProgram,
    WorldView,
    behavior_decide,
    idm_accel,
    pure_pursuit_steer,
    signal_state_at,
    step_bicycle,
)
from roadsim.errors import ConfigError, ContractError
from roadsim.geometry import Polyline, Pose2
from roadsim.traffic_data import Track, TrackPoint

CAR = ParticipantSpec.for_class("car")


def euler_oracle(state, action, dt, spec):
    """Reference integrator mirroring the kernel's operation order exactly."""
    accel = min(max(action.accel, -spec.max_decel), spec.max_accel)
    steer = min(max(action.steer, -spec.max_steer), spec.max_steer)
    x, y, th, v = state.pose.x, state.pose.y, state.pose.heading, state.speed
    h = dt / 10
    tan_s = math.tan(steer)
    for _ in range(10):
        nx = x + v * math.cos(th) * h
        ny = y + v * math.sin(th) * h
        nth = th + v * tan_s / spec.wheelbase * h
        nv = v + accel * h
        if nv < 0.0:
            nv = 0.0
        elif nv > spec.max_speed:
            nv = spec.max_speed
        x, y, th, v = nx, ny, nth, nv
    th = math.fmod(th, 2.0 * math.pi)
    if th > math.pi:
        th -= 2.0 * math.pi
    elif th <= -math.pi:
        th += 2.0 * math.pi
    return x, y, th, v


def straight_path(length=500.0):
    return Polyline([(0.0, 0.0), (length, 0.0)])


def view_of(states, paths, dt=0.1, specs=None, observations=None):
    specs = specs or {pid: CAR for pid in states}
    return WorldView(
        time=0.0, dt=dt, states=states, specs=specs, paths=paths,
        observations=observations or {},
    )


class TestSpecsAndTypes:
    def test_car_defaults(self):
        assert CAR.participant_class == "car"
        assert 0 < CAR.wheelbase < CAR.length
        assert CAR.max_decel > 0

    def test_all_classes_have_defaults(self):
        for cls in ("car", "truck", "pedestrian", "cyclist"):
            spec = ParticipantSpec.for_class(cls)
            assert spec.wheelbase < spec.length

    def test_unknown_class_rejected(self):
        with pytest.raises(ConfigError):
            ParticipantSpec.for_class("hovercraft")

    def test_nonpositive_value_rejected(self):
        with pytest.raises(ConfigError):
            ParticipantSpec("car", 4.5, 1.8, 2.7, 55.0, 3.0, 0.0, 0.6)

    def test_wheelbase_longer_than_body_rejected(self):
        with pytest.raises(ConfigError):
            ParticipantSpec("car", 4.5, 1.8, 4.5, 55.0, 3.0, 8.0, 0.6)

    def test_action_must_be_finite(self):
        with pytest.raises(ConfigError):
            Action(math.nan, 0.0)
        with pytest.raises(ConfigError):
            Action(0.0, math.inf)

    def test_idm_params_positive(self):
        assert IdmParams().delta == 4.0
        with pytest.raises(ConfigError):
            IdmParams(v0=-1.0)
        with pytest.raises(ConfigError):
            IdmParams(s0=0.0)


class TestStepBicycle:
    def test_straight_line_advance(self):
        state = ParticipantState(0.0, Pose2.of(0, 0, 0), 10.0)
        nxt = step_bicycle(state, Action(0.0, 0.0), 0.1, CAR)
        # Ten sub-step additions land one ulp below the closed form.
        assert nxt.pose.x == pytest.approx(1.0, abs=1e-12)
        assert nxt.pose.y == 0.0
        assert nxt.pose.heading == 0.0
        assert nxt.speed == 10.0
        assert nxt.time == pytest.approx(0.1)

    def test_stationary_unchanged(self):
        state = ParticipantState(2.0, Pose2.of(3.0, -4.0, 1.2), 0.0)
        nxt = step_bicycle(state, Action(0.0, 0.3), 0.1, CAR)
        assert (nxt.pose.x, nxt.pose.y) == (3.0, -4.0)
        assert nxt.pose.heading == pytest.approx(1.2, abs=0.0)
        assert nxt.speed == 0.0
        assert nxt.time == pytest.approx(2.1)

    def test_unit_yaw_rate_matches_oracle(self):
        spec = ParticipantSpec("car", 4.5, 1.8, 2.5, 55.0, 3.0, 8.0, 0.6)
        state = ParticipantState(0.0, Pose2.of(0, 0, 0), 10.0)
        action = Action(0.0, math.atan(0.25))  # v*tan(steer)/L = 1 rad/s
        nxt = step_bicycle(state, action, 0.1, spec)
        ox, oy, oth, ov = euler_oracle(state, action, 0.1, spec)
        assert (nxt.pose.x, nxt.pose.y) == (ox, oy)
        assert nxt.pose.heading == oth
        assert nxt.speed == ov
        assert nxt.pose.heading == pytest.approx(0.1, abs=5e-3)

    def test_dt_must_be_positive(self):
        state = ParticipantState(0.0, Pose2.of(0, 0, 0), 1.0)
        with pytest.raises(ValueError):
            step_bicycle(state, Action(), 0.0, CAR)

    @given(
        x=st.floats(-1e3, 1e3), y=st.floats(-1e3, 1e3),
        heading=st.floats(-math.pi, math.pi), speed=st.floats(0.0, 40.0),
        accel=st.floats(-20.0, 20.0), steer=st.floats(-2.0, 2.0),
        dt=st.floats(0.01, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_reference_euler_bitwise(
        self, x, y, heading, speed, accel, steer, dt
    ):
        state = ParticipantState(0.0, Pose2.of(x, y, heading), speed)
        action = Action(accel, steer)
        nxt = step_bicycle(state, action, dt, CAR)
        ox, oy, oth, ov = euler_oracle(state, action, dt, CAR)
        assert (nxt.pose.x, nxt.pose.y, nxt.pose.heading, nxt.speed) == (
            ox, oy, oth, ov
        )

    def test_backends_agree_on_sincos_sensitive_input(self):
        # glibc sincos() differs from separate sin()/cos() by 1 ulp for some
        # headings; the compiled kernel must not let the compiler fuse the
        # cos/sin pair, else it drifts off the pure backend at these inputs.
        from roadsim import kernels
        from roadsim.kernels import pure

        args = (
            -899.7273552524365, 394.43012310869426, -0.8101702030117219,
            21.581585150183507, -5.847730684062636, -0.6625215668905415,
            0.9912842656036603, 10, 2.8675019525373755, 54.370298283807145,
        )
        assert kernels.bicycle_step(*args) == pure.bicycle_step(*args)

    @given(
        speed=st.floats(0.0, 60.0), accel=st.floats(-50.0, 50.0),
        steer=st.floats(-4.0, 4.0), dt=st.floats(0.01, 2.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_bounds_hold_after_clamping(self, speed, accel, steer, dt):
        speed = min(speed, CAR.max_speed)
        state = ParticipantState(0.0, Pose2.of(0, 0, 0), speed)
        nxt = step_bicycle(state, Action(accel, steer), dt, CAR)
        assert 0.0 <= nxt.speed <= CAR.max_speed
        assert abs(nxt.steer) <= CAR.max_steer
        assert -CAR.max_decel <= nxt.accel <= CAR.max_accel


class TestIdmAccel:
    def test_standstill_free_road(self):
        p = IdmParams(a=2.0)
        assert idm_accel(0.0, math.inf, 0.0, p) == 2.0

    def test_at_desired_speed(self):
        p = IdmParams(v0=13.9)
        assert abs(idm_accel(13.9, math.inf, 0.0, p)) < 1e-12

    def test_half_desired_speed(self):
        p = IdmParams(v0=20.0, a=2.0, delta=4.0)
        assert idm_accel(10.0, math.inf, 0.0, p) == pytest.approx(1.875, abs=1e-12)

    def test_clamped_to_max_braking(self):
        p = IdmParams(b=2.0)
        assert idm_accel(20.0, 1.0, 20.0, p) == -2.0 * p.b

    def test_desired_gap_floored_at_min_gap(self):
        p = IdmParams(v0=30.0, T=1.5, s0=2.0, a=2.0, b=2.0)
        # Large negative closing speed drives s* below s0; the floor keeps it.
        got = idm_accel(1.0, 10.0, -100.0, p)
        expect = p.a * (1.0 - (1.0 / p.v0) ** 4 - (p.s0 / 10.0) ** 2)
        assert got == pytest.approx(expect, abs=1e-12)

    @given(
        v=st.floats(0.0, 30.0),
        gap=st.floats(0.5, 200.0),
        dv1=st.floats(-10.0, 10.0),
        dv2=st.floats(-10.0, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_nonincreasing_in_closing_speed(self, v, gap, dv1, dv2):
        p = IdmParams()
        lo, hi = sorted((dv1, dv2))
        assert idm_accel(v, gap, hi, p) <= idm_accel(v, gap, lo, p) + 1e-12

    @given(
        v=st.floats(0.0, 30.0),
        g1=st.floats(0.5, 200.0),
        g2=st.floats(0.5, 200.0),
        dv=st.floats(-10.0, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_nondecreasing_in_gap(self, v, g1, g2, dv):
        p = IdmParams()
        lo, hi = sorted((g1, g2))
        assert idm_accel(v, hi, dv, p) >= idm_accel(v, lo, dv, p) - 1e-12


class TestPurePursuit:
    def test_aligned_on_straight_path(self):
        steer = pure_pursuit_steer(Pose2.of(10, 0, 0), straight_path(), 8.0, 2.7)
        assert steer == 0.0

    def test_target_dead_ahead(self):
        # Offset pose, but the lookahead point lies on the heading ray.
        path = Polyline([(0.0, 1.0), (100.0, 1.0)])
        steer = pure_pursuit_steer(Pose2.of(5, 1, 0), path, 3.0, 2.7)
        assert steer == 0.0

    def test_formula_example(self):
        path = Polyline([(0.0, 0.0), (5.0, 1.0)])
        lookahead = math.hypot(5.0, 1.0)
        steer = pure_pursuit_steer(Pose2.of(0, 0, 0), path, lookahead, 2.5)
        alpha = math.atan2(1.0, 5.0)
        expect = math.atan(2.0 * 2.5 * math.sin(alpha) / lookahead)
        assert steer == pytest.approx(expect, abs=1e-12)
        assert steer == pytest.approx(0.1889, abs=2e-3)

    def test_circle_tracking_matches_geometry(self):
        # On a circular path, pure pursuit reduces to steer = atan(L/R).
        radius, wheelbase, lookahead = 20.0, 2.5, 8.0
        angles = np.linspace(-0.5 * math.pi, 1.5 * math.pi, 400)
        path = Polyline(
            np.column_stack([radius * np.cos(angles), radius * np.sin(angles)])
        )
        pose = Pose2.of(radius, 0.0, 0.5 * math.pi)
        steer = pure_pursuit_steer(pose, path, lookahead, wheelbase)
        assert steer == pytest.approx(math.atan(wheelbase / radius), rel=0.02)

    def test_lookahead_clamped_to_path_end(self):
        path = Polyline([(0.0, 0.0), (10.0, 0.0)])
        steer = pure_pursuit_steer(Pose2.of(8, 0, 0), path, 50.0, 2.7)
        assert steer == 0.0

    def test_empty_path_rejected(self):
        with pytest.raises(ConfigError):
            pure_pursuit_steer(Pose2.of(0, 0, 0), None, 8.0, 2.7)

    def test_lookahead_must_be_positive(self):
        with pytest.raises(ValueError):
            pure_pursuit_steer(Pose2.of(0, 0, 0), straight_path(), 0.0, 2.7)


class TestBehaviorModels:
    def test_replay_exact_at_samples(self):
        points = [
            TrackPoint(0.0, Pose2.of(1.0, 2.0, 0.3), 5.0),
            TrackPoint(1.0, Pose2.of(6.0, 2.5, 0.35), 5.2),
        ]
        model = ReplayModel(Track("t1", "car", 4.5, 1.8, tuple(points)))
        got = model.state_for(1.0)
        assert (got.pose.x, got.pose.y, got.pose.heading) == (6.0, 2.5, 0.35)
        assert got.speed == 5.2
        assert model.state_for(2.5) is None
        assert model.decide(None, "t1") == Action(0.0, 0.0)

    def test_rule_based_free_road_at_desired_speed(self):
        idm = IdmParams(v0=12.0)
        model = RuleBasedModel(idm=idm)
        states = {"ego": ParticipantState(0.0, Pose2.of(50, 0, 0), 12.0)}
        view = view_of(states, {"ego": straight_path()})
        action = behavior_decide(model, view, "ego")
        assert abs(action.accel) < 1e-12
        assert action.steer == 0.0

    def test_rule_based_gap_matches_idm_directly(self):
        idm = IdmParams()
        model = RuleBasedModel(idm=idm)
        states = {
            "ego": ParticipantState(0.0, Pose2.of(50, 0, 0), 10.0),
            "lead": ParticipantState(0.0, Pose2.of(70, 0.5, 0), 6.0),
        }
        view = view_of(states, {"ego": straight_path()})
        action = behavior_decide(model, view, "ego")
        gap = 20.0 - CAR.length  # bumper-to-bumper with equal car lengths
        assert action.accel == pytest.approx(
            idm_accel(10.0, gap, 4.0, idm), abs=1e-12
        )

    def test_rule_based_brakes_behind_stopped_leader_at_min_gap(self):
        idm = IdmParams()
        model = RuleBasedModel(idm=idm)
        lead_x = 50.0 + CAR.length + idm.s0
        states = {
            "ego": ParticipantState(0.0, Pose2.of(50, 0, 0), 10.0),
            "lead": ParticipantState(0.0, Pose2.of(lead_x, 0, 0), 0.0),
        }
        view = view_of(states, {"ego": straight_path()})
        action = behavior_decide(model, view, "ego")
        assert action.accel <= -idm.b

    def test_rule_based_picks_nearest_leader(self):
        idm = IdmParams()
        model = RuleBasedModel(idm=idm)
        states = {
            "ego": ParticipantState(0.0, Pose2.of(10, 0, 0), 8.0),
            "near": ParticipantState(0.0, Pose2.of(40, 0, 0), 8.0),
            "far": ParticipantState(0.0, Pose2.of(80, 0, 0), 2.0),
        }
        view = view_of(states, {"ego": straight_path()})
        action = behavior_decide(model, view, "ego")
        assert action.accel == pytest.approx(
            idm_accel(8.0, 30.0 - CAR.length, 0.0, idm), abs=1e-12
        )

    def test_rule_based_ignores_other_corridor_and_behind(self):
        idm = IdmParams(v0=9.0)
        model = RuleBasedModel(idm=idm)
        states = {
            "ego": ParticipantState(0.0, Pose2.of(50, 0, 0), 9.0),
            "oncoming": ParticipantState(0.0, Pose2.of(70, 3.5, math.pi), 9.0),
            "behind": ParticipantState(0.0, Pose2.of(30, 0, 0), 9.0),
            "too_far": ParticipantState(0.0, Pose2.of(200, 0, 0), 0.0),
        }
        view = view_of(states, {"ego": straight_path()})
        action = behavior_decide(model, view, "ego")
        assert abs(action.accel) < 1e-12  # free road at desired speed

    def test_rule_based_overlap_brakes_hard(self):
        model = RuleBasedModel()
        states = {
            "ego": ParticipantState(0.0, Pose2.of(50, 0, 0), 5.0),
            "lead": ParticipantState(0.0, Pose2.of(52, 0, 0), 0.0),
        }
        view = view_of(states, {"ego": straight_path()})
        action = behavior_decide(model, view, "ego")
        assert action.accel == -CAR.max_decel

    def test_external_policy_roundtrip(self):
        model = ExternalPolicyModel(lambda obs: Action(obs, 0.1))
        states = {"ego": ParticipantState(0.0, Pose2.of(0, 0, 0), 1.0)}
        view = view_of(states, {"ego": straight_path()},
                       observations={"ego": 0.5})
        assert behavior_decide(model, view, "ego") == Action(0.5, 0.1)

    def test_external_policy_unset_rejected(self):
        model = ExternalPolicyModel()
        states = {"ego": ParticipantState(0.0, Pose2.of(0, 0, 0), 1.0)}
        view = view_of(states, {"ego": straight_path()})
        with pytest.raises(ConfigError):
            behavior_decide(model, view, "ego")

    def test_external_policy_bad_return_rejected(self):
        model = ExternalPolicyModel(lambda obs: (1.0, 0.0))
        states = {"ego": ParticipantState(0.0, Pose2.of(0, 0, 0), 1.0)}
        view = view_of(states, {"ego": straight_path()})
        with pytest.raises(ConfigError):
            behavior_decide(model, view, "ego")

    def test_unknown_participant_rejected(self):
        model = RuleBasedModel()
        view = view_of({}, {})
        with pytest.raises(ContractError):
            behavior_decide(model, view, "ghost")


class TestFollowingConvergence:
    def test_converges_behind_stopped_leader(self):
        idm = IdmParams()
        model = RuleBasedModel(idm=idm)
        path = straight_path(1000.0)
        lead = ParticipantState(0.0, Pose2.of(120.0, 0, 0), 0.0)
        ego = ParticipantState(0.0, Pose2.of(0.0, 0, 0), 10.0)
        dt = 0.1
        for _ in range(600):
            view = view_of({"ego": ego, "lead": lead}, {"ego": path}, dt=dt)
            action = behavior_decide(model, view, "ego")
            ego = step_bicycle(ego, action, dt, CAR)
            gap = (lead.pose.x - ego.pose.x) - CAR.length
            assert gap > 0.0, "rear-ended the stopped leader"
        assert ego.speed < 0.01
        assert idm.s0 <= gap <= idm.s0 + 0.5


class TestSignals:
    PROGRAM = SignalProgram((("red", 10.0), ("green", 10.0)))

    def test_examples(self):
        assert signal_state_at(self.PROGRAM, 15.0) == "green"
        assert signal_state_at(self.PROGRAM, 25.0) == "red"
        assert signal_state_at(self.PROGRAM, 10.0) == "green"

    def test_offset_shifts_phases(self):
        shifted = SignalProgram((("red", 10.0), ("green", 10.0)), offset=5.0)
        assert signal_state_at(shifted, 0.0) == "green"  # wraps to e=15
        assert signal_state_at(shifted, 5.0) == "red"

    def test_cycle_length(self):
        assert self.PROGRAM.cycle == 20.0

    def test_invalid_programs_rejected(self):
        with pytest.raises(ConfigError):
            SignalProgram(())
        with pytest.raises(ConfigError):
            SignalProgram((("blue", 10.0),))
        with pytest.raises(ConfigError):
            SignalProgram((("red", 0.0),))

    @given(
        durations=st.lists(st.integers(1, 320), min_size=1, max_size=5),
        offset_ticks=st.integers(0, 5000),
        t_ticks=st.integers(0, 200000),
    )
    @settings(max_examples=200, deadline=None)
    def test_exact_periodicity(self, durations, offset_ticks, t_ticks):
        # Dyadic times keep every addition exact, so periodicity is bitwise.
        tick = 0.0625
        colors = ("red", "yellow", "green")
        phases = tuple(
            (colors[i % 3], d * tick) for i, d in enumerate(durations)
        )
        program = SignalProgram(phases, offset=offset_ticks * tick)
        t = t_ticks * tick
        assert signal_state_at(program, t) == signal_state_at(
            program, t + program.cycle
        )


class TestReplayFidelity:
    def test_positions_within_tolerance_at_frame_times(self):
        rng = np.random.default_rng(7)
        times = np.arange(0.0, 5.0, 0.1)
        points = []
        x = y = 0.0
        for t in times:
            x += rng.uniform(0.5, 1.5)
            y += rng.uniform(-0.2, 0.2)
            points.append(TrackPoint(float(t), Pose2.of(x, y, 0.1), 10.0))
        model = ReplayModel(Track("r", "car", 4.5, 1.8, tuple(points)))
        for p in points:
            got = model.state_for(p.time)
            err = math.hypot(got.pose.x - p.pose.x, got.pose.y - p.pose.y)
            assert err < 1e-9
