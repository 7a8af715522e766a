import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadsim.model import (HIP_L, HIP_R, KNEE_L, KNEE_R, AgentState, GaitPattern,
                           ImpedanceParams, Leg, SegmentParams, Support, agent_energy,
                           agent_step, ankle_in_hip_frame, default_cadence, fk_batch,
                           forward_kinematics, gait_reference, initial_state, stance_index,
                           stance_leg, support_from_phase, swing_jacobian, task_stiffness)

HALF = SegmentParams(0.5, 0.5)
angles = st.floats(-1.5, 1.5, allow_nan=False)
gens = st.lists(angles, min_size=5, max_size=5).map(np.array)
legs = st.sampled_from([Leg.LEFT, Leg.RIGHT])
lengths = st.floats(0.2, 0.7)


def fk_oracle(gen, swing, lt, ls):
    """Walk the chain joint by joint: stance ankle -> hip -> swing ankle."""
    phi = gen[0]
    st_i = 0 if swing == "right" else 1
    sw_i = 1 - st_i
    hs, ks = gen[1 + 2 * st_i], gen[2 + 2 * st_i]
    hw, kw = gen[1 + 2 * sw_i], gen[2 + 2 * sw_i]
    seg = lambda th: np.array([math.sin(th), -math.cos(th)])
    knee_st = -ls * seg(phi + hs - ks)
    hip = knee_st - lt * seg(phi + hs)
    knee_sw = hip + lt * seg(phi + hw)
    return knee_sw + ls * seg(phi + hw - kw)


def central_diff(gen, swing, params, h=1e-6):
    J = np.empty((2, 5))
    for i in range(5):
        e = np.zeros(5)
        e[i] = h
        J[:, i] = (forward_kinematics(gen + e, swing, params)
                   - forward_kinematics(gen - e, swing, params)) / (2 * h)
    return J


class TestForwardKinematics:
    def test_straight_legs_coincide(self):
        np.testing.assert_allclose(forward_kinematics(np.zeros(5), "right", HALF), [0, 0],
                                   atol=1e-15)

    def test_swing_hip_and_knee_ninety(self):
        gen = np.deg2rad([0, 0, 0, 90, 90])
        np.testing.assert_allclose(forward_kinematics(gen, Leg.RIGHT, HALF), [0.5, 0.5],
                                   atol=1e-12)

    def test_swing_hip_thirty(self):
        gen = np.deg2rad([0, 0, 0, 30, 0])
        r = forward_kinematics(gen, Leg.RIGHT, HALF)
        np.testing.assert_allclose(r, [0.5, 1 - math.cos(math.radians(30))], atol=1e-12)
        assert r[1] == pytest.approx(0.134, abs=5e-4)

    @given(gens, legs, lengths, lengths)
    def test_matches_chain_walk(self, gen, swing, lt, ls):
        r = forward_kinematics(gen, swing, SegmentParams(lt, ls))
        np.testing.assert_allclose(r, fk_oracle(gen, swing.value, lt, ls), atol=1e-12)

    @given(gens)
    def test_swing_swap_mirror(self, gen):
        mirrored = gen[[0, 3, 4, 1, 2]]
        np.testing.assert_allclose(forward_kinematics(gen, Leg.RIGHT),
                                   forward_kinematics(mirrored, Leg.LEFT), atol=1e-14)

    @given(st.lists(gens, min_size=1, max_size=8), st.lists(st.integers(0, 1), min_size=8,
                                                            max_size=8))
    def test_batch_matches_scalar(self, gs, swings):
        g = np.array(gs)
        sw = np.array(swings[:len(g)])
        r = fk_batch(g[:, 0], g[:, 1:], sw)
        for k in range(len(g)):
            leg = Leg.LEFT if sw[k] == 0 else Leg.RIGHT
            np.testing.assert_allclose(r[k], forward_kinematics(g[k], leg), atol=1e-14)

    def test_per_leg_params(self):
        gen = np.deg2rad([5, 10, 20, 30, 40])
        left, right = SegmentParams(0.4, 0.5), SegmentParams(0.45, 0.35)
        r = forward_kinematics(gen, "right", (left, right))
        # stance leg is left, swing leg right
        st_knee = -0.5 * np.array([math.sin(gen[0] + gen[1] - gen[2]),
                                   -math.cos(gen[0] + gen[1] - gen[2])])
        hip = st_knee - 0.4 * np.array([math.sin(gen[0] + gen[1]), -math.cos(gen[0] + gen[1])])
        ank = (hip + 0.45 * np.array([math.sin(gen[0] + gen[3]), -math.cos(gen[0] + gen[3])])
               + 0.35 * np.array([math.sin(gen[0] + gen[3] - gen[4]),
                                  -math.cos(gen[0] + gen[3] - gen[4])]))
        np.testing.assert_allclose(r, ank, atol=1e-14)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError):
            forward_kinematics([0, bad, 0, 0, 0], "left")

    def test_unknown_side_rejected(self):
        with pytest.raises(ValueError, match="side"):
            forward_kinematics(np.zeros(5), "middle")

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError):
            forward_kinematics(np.zeros(4), "left")

    def test_ankle_in_hip_frame(self):
        p = ankle_in_hip_frame(0.0, 0.0)
        np.testing.assert_allclose(p, [0.0, -0.9], atol=1e-15)
        p = ankle_in_hip_frame(math.pi / 2, math.pi / 2, HALF)
        np.testing.assert_allclose(p, [0.5, -0.5], atol=1e-12)


class TestJacobian:
    def test_phi_column_vanishes_at_zero(self):
        J = swing_jacobian(np.zeros(5), "right", HALF)
        np.testing.assert_allclose(J[:, 0], [0, 0], atol=1e-15)

    def test_swing_knee_column_at_zero(self):
        J = swing_jacobian(np.zeros(5), "right", HALF)
        np.testing.assert_allclose(J[:, 4], [-0.5, 0.0], atol=1e-15)
        J = swing_jacobian(np.zeros(5), "left", HALF)
        np.testing.assert_allclose(J[:, 2], [-0.5, 0.0], atol=1e-15)

    def test_stance_columns_nonzero(self):
        J = swing_jacobian(np.deg2rad([0, 10, 5, 30, 40]), "right")
        assert np.linalg.norm(J[:, 1]) > 0.1 and np.linalg.norm(J[:, 2]) > 0.1

    @given(gens, legs)
    def test_matches_central_differences(self, gen, swing):
        J = swing_jacobian(gen, swing)
        Jn = central_diff(gen, swing, SegmentParams())
        scale = max(np.abs(J).max(), 1e-3)
        assert np.abs(J - Jn).max() / scale <= 1e-6

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            swing_jacobian([np.nan, 0, 0, 0, 0], "left")

    def test_task_stiffness_closed_form(self):
        gen = np.deg2rad([0, 0, 0, 0, 90])
        kp = np.array([40.0, 50.0, 60.0, 70.0])
        J = swing_jacobian(gen, "right")[1, 1:]
        expected = 1.0 / sum(J[j] ** 2 / kp[j] for j in range(4))
        assert task_stiffness(gen, "right", kp) == pytest.approx(expected, rel=1e-14)


class TestGaitReference:
    def test_zero_rom_constant(self):
        pat = GaitPattern(rom_scale=0.0)
        for ph in np.linspace(0, 0.99, 23):
            q, qd = gait_reference(ph, pat)
            np.testing.assert_array_equal(q, pat.offset)
            np.testing.assert_array_equal(qd, 0.0)

    @given(st.floats(0, 1, exclude_max=True), st.floats(0, 1.5))
    def test_right_leg_is_shifted_left(self, ph, rom):
        pat = GaitPattern.default(rom_scale=rom)
        q, _ = gait_reference(ph, pat)
        q_shift, _ = gait_reference((ph + 0.5) % 1.0, pat)
        np.testing.assert_allclose(q[[HIP_R, KNEE_R]], q_shift[[HIP_L, KNEE_L]], atol=1e-12)

    def test_extremes_are_offset_plus_minus_amplitude(self):
        pat = GaitPattern.default()
        qs = np.array([gait_reference(p, pat)[0] for p in np.linspace(0, 1, 20001)])
        np.testing.assert_allclose(qs.max(axis=0), pat.offset + pat.amplitude, atol=1e-6)
        np.testing.assert_allclose(qs.min(axis=0), pat.offset - pat.amplitude, atol=1e-6)
        hip = np.rad2deg(qs[:, HIP_L])
        assert hip.min() == pytest.approx(-10.0, abs=1e-3)
        assert hip.max() == pytest.approx(35.0, abs=1e-3)
        assert np.rad2deg(qs[:, KNEE_L]).max() == pytest.approx(65.0, abs=1e-3)

    @given(st.floats(0, 1, exclude_max=True), st.floats(0, 2))
    def test_knee_never_negative(self, ph, rom):
        q, _ = gait_reference(ph, GaitPattern.default(rom_scale=rom))
        assert q[KNEE_L] >= 0 and q[KNEE_R] >= 0

    @given(st.floats(0.001, 0.998), st.floats(0.2, 2.0))
    def test_velocity_is_time_derivative(self, ph, cadence):
        pat = GaitPattern.default(cadence)
        h = 1e-7
        _, qd = gait_reference(ph, pat)
        num = (gait_reference(ph + h, pat)[0] - gait_reference(ph - h, pat)[0]) / (2 * h)
        np.testing.assert_allclose(qd, cadence * num, atol=1e-4 * cadence)

    def test_periodic(self):
        pat = GaitPattern.default()
        for ph in (0.1, 0.37, 0.8):
            np.testing.assert_allclose(gait_reference(ph, pat)[0],
                                       gait_reference(ph + 1.0, pat)[0], atol=1e-12)

    def test_invalid_pattern(self):
        with pytest.raises(ValueError):
            GaitPattern(cadence=0.0)
        with pytest.raises(ValueError):
            GaitPattern(rom_scale=-0.1)
        with pytest.raises(ValueError, match="negative"):
            GaitPattern(offset=[0.2, 0.1, 0.2, 0.1])

    def test_default_cadence(self):
        assert default_cadence(0.8) == pytest.approx(0.5)
        assert default_cadence(3.2) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            default_cadence(0.0)


class TestSupport:
    def test_stance_window(self):
        pat = GaitPattern.default()
        assert support_from_phase(0.05, pat) is Support.DOUBLE
        assert support_from_phase(0.3, pat) is Support.LEFT_STANCE
        assert support_from_phase(0.8, pat) is Support.RIGHT_STANCE
        assert stance_leg(0.3, pat) is Leg.LEFT
        assert stance_leg(0.8, pat) is Leg.RIGHT

    @given(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=20))
    def test_vectorized_matches_scalar(self, phases):
        pat = GaitPattern.default()
        idx = stance_index(np.array(phases), pat)
        assert [Leg.LEFT if i == 0 else Leg.RIGHT for i in idx] == \
            [stance_leg(p, pat) for p in phases]


class TestAgentStep:
    imp = ImpedanceParams(kp=100.0)

    def test_equilibrium_is_kept(self):
        pat = GaitPattern.default(rom_scale=0.0)
        s = initial_state(pat)
        for _ in range(500):
            s2 = agent_step(s, np.zeros(4), pat, self.imp, 0.003)
            assert np.abs(s2.q - s.q).max() <= 1e-9
            s = s2

    def test_moving_reference_tracked(self):
        pat = GaitPattern.default()
        s = initial_state(pat)
        for _ in range(300):
            s = agent_step(s, np.zeros(4), pat, self.imp, 0.003)
            q_ref, _ = gait_reference(s.phase, pat)
            assert np.abs(s.q - q_ref).max() < np.deg2rad(3.0)

    def test_constant_torque_offset(self):
        pat = GaitPattern.default(rom_scale=0.0)
        s = initial_state(pat)
        tau = np.array([3.0, 0, 0, 0])
        for _ in range(3000):
            s = agent_step(s, tau, pat, self.imp, 0.003)
        assert s.q[HIP_L] - pat.offset[HIP_L] == pytest.approx(0.03, rel=1e-6)
        np.testing.assert_allclose(s.q[1:], pat.offset[1:], atol=1e-12)

    def test_first_order_convergence(self):
        pat = GaitPattern.default()
        imp = ImpedanceParams()

        def run(dt, T=10.0):
            s = initial_state(pat)
            for k in range(int(round(T / dt))):
                tau = np.array([2.0, -1.0, 0.5, 1.0]) * math.sin(3.0 * k * dt)
                s = agent_step(s, tau, pat, imp, dt)
            return s.q

        ref = run(0.00025)
        e1 = np.linalg.norm(run(0.004) - ref)
        e2 = np.linalg.norm(run(0.002) - ref)
        assert 1.6 < e1 / e2 < 2.6

    def test_phase_wraps_and_advances(self):
        pat = GaitPattern.default(cadence=0.5)
        s = initial_state(pat, phase=0.999)
        s = agent_step(s, np.zeros(4), pat, ImpedanceParams(), 0.003)
        assert s.phase == pytest.approx(0.0005, abs=1e-12)

    def test_joint_limit_clamps(self):
        pat = GaitPattern.default(rom_scale=0.0)
        s = AgentState(0.0, [0.2, 0.01, 0.2, 0.3], [0, -5.0, 0, 0])
        s = agent_step(s, [0, -50.0, 0, 0], pat, ImpedanceParams(), 0.003)
        assert s.q[KNEE_L] == 0.0 and s.qdot[KNEE_L] == 0.0

    def test_deterministic(self):
        pat = GaitPattern.default()
        s = initial_state(pat, 0.3)
        a = agent_step(s, [1, 2, 3, 4], pat, ImpedanceParams(), 0.003)
        b = agent_step(s, [1, 2, 3, 4], pat, ImpedanceParams(), 0.003)
        assert np.array_equal(a.q, b.q) and np.array_equal(a.qdot, b.qdot)
        assert a.phase == b.phase

    @pytest.mark.parametrize("tau", [[np.nan, 0, 0, 0], [0, np.inf, 0, 0]])
    def test_non_finite_torque(self, tau):
        pat = GaitPattern.default()
        with pytest.raises(ValueError):
            agent_step(initial_state(pat), tau, pat, ImpedanceParams(), 0.003)

    @pytest.mark.parametrize("dt", [0.0, -0.001])
    def test_bad_dt(self, dt):
        pat = GaitPattern.default()
        with pytest.raises(ValueError):
            agent_step(initial_state(pat), np.zeros(4), pat, ImpedanceParams(), dt)

    def test_phase_gain_zero_means_fixed_clock(self):
        pat = GaitPattern.default(cadence=0.5)
        s = initial_state(pat)
        s2 = agent_step(s, [20, 20, 20, 20], pat, ImpedanceParams(phase_gain=0.0), 0.003)
        assert s2.phase == pytest.approx(0.0015, abs=1e-15)

    def test_phase_modulation_is_bounded(self):
        pat = GaitPattern.default(cadence=0.5)
        imp = ImpedanceParams(phase_gain=10.0, phase_mod_max=0.3)
        for ph in np.linspace(0, 0.95, 20):
            s = initial_state(pat, ph)
            for tau in (np.full(4, 60.0), np.full(4, -60.0)):
                dph = (agent_step(s, tau, pat, imp, 0.003).phase - ph) % 1.0
                assert 0.7 * 0.0015 - 1e-12 <= dph <= 1.3 * 0.0015 + 1e-12

    def test_impedance_validation(self):
        with pytest.raises(ValueError):
            ImpedanceParams(kp=0.0)
        with pytest.raises(ValueError):
            ImpedanceParams(kd=-1.0)
        with pytest.raises(ValueError):
            ImpedanceParams(phase_mod_max=1.0)

    def test_state_validation(self):
        with pytest.raises(ValueError):
            AgentState(0.0, [0, np.nan, 0, 0], np.zeros(4))
        with pytest.raises(ValueError):
            AgentState(0.0, np.zeros(3), np.zeros(4))

    @given(st.lists(st.floats(-0.4, 0.4), min_size=4, max_size=4),
           st.lists(st.floats(-3, 3), min_size=4, max_size=4))
    def test_energy_non_increasing_without_torque(self, dq, qd):
        pat = GaitPattern.default(rom_scale=0.0)
        imp = ImpedanceParams()
        s = AgentState(0.0, pat.offset + np.array(dq), qd)
        e = agent_energy(s, pat, imp)
        for _ in range(300):
            s = agent_step(s, np.zeros(4), pat, imp, 0.003)
            e2 = agent_energy(s, pat, imp)
            assert e2 <= e + 1e-12
            e = e2
