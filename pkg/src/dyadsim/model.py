"""Sagittal-plane kinematics, gait references and surrogate agent dynamics.

Conventions used throughout the package:

* generalized coordinates ``gen = [phi, hipL, kneeL, hipR, kneeR]`` (rad);
  ``phi`` is torso pitch (0 upright, positive forward lean);
* hip flexion is positive forward, knee 0 is straight and flexion positive;
* a segment's absolute angle is ``phi + q_hip`` for the thigh and
  ``thigh - q_knee`` for the shank; a segment with absolute angle ``theta``
  points along ``(sin theta, -cos theta)`` from proximal to distal;
* the stance ankle is the origin, x forward, y up.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

HIP_L, KNEE_L, HIP_R, KNEE_R = range(4)
HIPS = (HIP_L, HIP_R)
KNEES = (KNEE_L, KNEE_R)
JOINT_NAMES = ("hipL", "kneeL", "hipR", "kneeR")

#: A leg is in stance while its gait phase lies in ``[0, STANCE_WINDOW)``.
STANCE_WINDOW = 0.6


class Leg(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def other(self) -> "Leg":
        return Leg.RIGHT if self is Leg.LEFT else Leg.LEFT

    @property
    def index(self) -> int:
        return 0 if self is Leg.LEFT else 1


class Support(str, enum.Enum):
    LEFT_STANCE = "left-stance"
    RIGHT_STANCE = "right-stance"
    DOUBLE = "double"


def as_leg(side) -> Leg:
    if isinstance(side, Leg):
        return side
    try:
        return Leg(side)
    except ValueError:
        raise ValueError(f"unknown side {side!r}; expected 'left' or 'right'") from None


def _vec(x, n: int, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
    return a


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentParams:
    """Thigh and shank lengths of one leg, in metres."""

    thigh_len: float = 0.45
    shank_len: float = 0.45

    def __post_init__(self):
        for name in ("thigh_len", "shank_len"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {v}")


@dataclass(frozen=True)
class JointLimits:
    lower: np.ndarray = field(
        default_factory=lambda: np.deg2rad([-30.0, 0.0, -30.0, 0.0]))
    upper: np.ndarray = field(
        default_factory=lambda: np.deg2rad([120.0, 135.0, 120.0, 135.0]))

    def __post_init__(self):
        object.__setattr__(self, "lower", _vec(self.lower, 4, "lower"))
        object.__setattr__(self, "upper", _vec(self.upper, 4, "upper"))
        if np.any(self.lower >= self.upper):
            raise ValueError("joint limits must satisfy lower < upper")


@dataclass(frozen=True)
class AgentState:
    """Instantaneous state of one user: torso pitch, joints, gait phase."""

    phi: float
    q: np.ndarray
    qdot: np.ndarray
    phase: float = 0.0
    support: Support = Support.DOUBLE

    def __post_init__(self):
        object.__setattr__(self, "q", _vec(self.q, 4, "q"))
        object.__setattr__(self, "qdot", _vec(self.qdot, 4, "qdot"))
        if not (math.isfinite(self.phi) and np.all(np.isfinite(self.q))
                and np.all(np.isfinite(self.qdot)) and math.isfinite(self.phase)):
            raise ValueError("AgentState entries must be finite")

    @classmethod
    def unchecked(cls, phi, q, qdot, phase, support) -> "AgentState":
        """Construct without validation (hot simulation loop only)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "phi", phi)
        object.__setattr__(obj, "q", q)
        object.__setattr__(obj, "qdot", qdot)
        object.__setattr__(obj, "phase", phase)
        object.__setattr__(obj, "support", support)
        return obj

    @property
    def gen(self) -> np.ndarray:
        return np.concatenate(([self.phi], self.q))

    @property
    def gen_dot(self) -> np.ndarray:
        # torso pitch is held constant
        return np.concatenate(([0.0], self.qdot))


@dataclass(frozen=True)
class HipShape:
    """Phase-warped cosine; extrema are exactly +-1 for ``|warp| < 1``."""

    shift: float = -0.096
    warp: float = 0.594
    warp_center: float = 0.4925

    def __post_init__(self):
        if not abs(self.warp) < 1.0:
            raise ValueError("hip warp must satisfy |warp| < 1")

    def __call__(self, psi: float) -> tuple[float, float]:
        a = 2.0 * math.pi * (psi - self.warp_center)
        w = psi - self.shift + self.warp * math.sin(a) / (2.0 * math.pi)
        dw = 1.0 + self.warp * math.cos(a)
        b = 2.0 * math.pi * w
        return math.cos(b), -2.0 * math.pi * math.sin(b) * dw


def _raised_cosine(psi: float, start: float, width: float) -> tuple[float, float]:
    x = ((psi - start) % 1.0) / width
    if x >= 1.0:
        return 0.0, 0.0
    a = 2.0 * math.pi * x
    return 0.5 * (1.0 - math.cos(a)), math.pi * math.sin(a) / width


@dataclass(frozen=True)
class KneeShape:
    """Small loading bump in stance plus the large swing-flexion bump.

    Maps to ``[-1, 1]``: -1 on the fully extended plateau before heel strike,
    +1 at the swing peak.
    """

    stance_height: float = 0.1443
    stance_start: float = 0.0463
    stance_width: float = 0.3679
    swing_start: float = 0.3335
    swing_width: float = 0.6331

    def __post_init__(self):
        if not 0 <= self.stance_height < 1:
            raise ValueError("stance_height must lie in [0, 1)")
        if not (0 < self.stance_width < 1 and 0 < self.swing_width < 1):
            raise ValueError("bump widths must lie in (0, 1)")
        if (self.stance_start - self.swing_start) % 1.0 <= self.swing_width:
            raise ValueError("swing bump must end before the stance bump starts")
        # swing peak must fall outside the stance bump
        peak = (self.swing_start + 0.5 * self.swing_width - self.stance_start) % 1.0
        if peak < self.stance_width:
            raise ValueError("swing peak overlaps the stance bump")

    def __call__(self, psi: float) -> tuple[float, float]:
        u1, d1 = _raised_cosine(psi, self.stance_start, self.stance_width)
        u2, d2 = _raised_cosine(psi, self.swing_start, self.swing_width)
        return 2.0 * (self.stance_height * u1 + u2) - 1.0, 2.0 * (self.stance_height * d1 + d2)


#: Phase shift aligning the default reference so that the swing ankle drops
#: below the 2 cm strike threshold exactly at phase 0.
STRIKE_ALIGN = 6.568720711470012e-06

DEFAULT_HIP_OFFSET = math.radians(12.5)
DEFAULT_HIP_AMPLITUDE = math.radians(22.5)
DEFAULT_KNEE_OFFSET = math.radians(32.5)
DEFAULT_KNEE_AMPLITUDE = math.radians(32.5)


def default_cadence(treadmill_speed: float = 0.8) -> float:
    """Nominal stride frequency (strides/s) at a treadmill speed in km/h."""
    if treadmill_speed <= 0:
        raise ValueError("treadmill speed must be > 0")
    return 0.5 * math.sqrt(treadmill_speed / 0.8)


@dataclass(frozen=True)
class GaitPattern:
    """Parametric joint references of one user.

    Joint ``j`` follows ``offset[j] + rom_scale[j] * amplitude[j] * g(psi)``
    where ``g`` is the hip or knee shape in ``[-1, 1]`` and ``psi`` the leg's
    phase (right leg shifted by ``phase_offset_right``).
    """

    cadence: float = 0.5
    offset: np.ndarray = field(default_factory=lambda: np.array(
        [DEFAULT_HIP_OFFSET, DEFAULT_KNEE_OFFSET] * 2))
    amplitude: np.ndarray = field(default_factory=lambda: np.array(
        [DEFAULT_HIP_AMPLITUDE, DEFAULT_KNEE_AMPLITUDE] * 2))
    rom_scale: np.ndarray = field(default_factory=lambda: np.ones(4))
    phase_offset_right: float = 0.5
    hip_shape: HipShape = field(default_factory=HipShape)
    knee_shape: KneeShape = field(default_factory=KneeShape)
    align: float = STRIKE_ALIGN

    def __post_init__(self):
        object.__setattr__(self, "offset", _vec(self.offset, 4, "offset"))
        object.__setattr__(self, "amplitude", _vec(self.amplitude, 4, "amplitude"))
        object.__setattr__(self, "rom_scale", _vec(self.rom_scale, 4, "rom_scale"))
        if not (math.isfinite(self.cadence) and self.cadence > 0):
            raise ValueError(f"cadence must be > 0, got {self.cadence}")
        if np.any(self.rom_scale < 0):
            raise ValueError("rom_scale must be >= 0")
        if np.any(self.amplitude < 0):
            raise ValueError("amplitude must be >= 0")
        span = self.rom_scale * self.amplitude
        object.__setattr__(self, "_span", span)
        for k in KNEES:
            if self.offset[k] - span[k] < -1e-12:
                raise ValueError(
                    f"knee reference {JOINT_NAMES[k]} would go negative "
                    "(offset < rom_scale * amplitude)")

    @classmethod
    def default(cls, cadence: float | None = None, rom_scale=1.0,
                treadmill_speed: float = 0.8) -> "GaitPattern":
        """Default curves; knees keep a 0 deg minimum for any ``rom_scale``."""
        cad = default_cadence(treadmill_speed) if cadence is None else cadence
        rom = _vec(rom_scale, 4, "rom_scale")
        offset = np.array([DEFAULT_HIP_OFFSET, DEFAULT_KNEE_OFFSET] * 2)
        amp = np.array([DEFAULT_HIP_AMPLITUDE, DEFAULT_KNEE_AMPLITUDE] * 2)
        for k in KNEES:
            offset[k] = rom[k] * amp[k]
        return cls(cadence=cad, offset=offset, amplitude=amp, rom_scale=rom)

    def with_rom(self, rom_scale) -> "GaitPattern":
        return replace(self, rom_scale=_vec(rom_scale, 4, "rom_scale"))


@dataclass(frozen=True)
class ImpedanceParams:
    """Voluntary tracking impedance of the surrogate human, per joint.

    ``phase_gain`` (1/J) lets the gait clock adapt to the interaction
    torque: the phase rate is ``cadence * (1 + m)`` with
    ``m = phase_gain * tau . dq_ref/dphase`` clipped to ``+-phase_mod_max``.
    Zero gain reproduces a fixed-cadence clock.
    """

    kp: np.ndarray = field(default_factory=lambda: np.full(4, 40.0))
    kd: np.ndarray = field(default_factory=lambda: np.full(4, 4.0))
    inertia: np.ndarray = field(default_factory=lambda: np.full(4, 0.1))
    viscous: np.ndarray = field(default_factory=lambda: np.full(4, 0.5))
    phase_gain: float = 0.0
    phase_mod_max: float = 0.3

    def __post_init__(self):
        if not 0 <= self.phase_mod_max < 1:
            raise ValueError("phase_mod_max must lie in [0, 1)")
        for name in ("kp", "kd", "inertia", "viscous"):
            object.__setattr__(self, name, _vec(getattr(self, name), 4, name))
        if np.any(self.kp <= 0) or np.any(self.inertia <= 0):
            raise ValueError("kp and inertia must be > 0")
        if np.any(self.kd < 0) or np.any(self.viscous < 0):
            raise ValueError("kd and viscous must be >= 0")
        if not (math.isfinite(self.phase_gain) and self.phase_gain >= 0):
            raise ValueError("phase_gain must be finite and >= 0")


# --------------------------------------------------------------------------
# Kinematics
# --------------------------------------------------------------------------

def _leg_params(params) -> tuple[SegmentParams, SegmentParams]:
    if isinstance(params, SegmentParams):
        return params, params
    left, right = params
    return left, right


def _check_gen(gen) -> np.ndarray:
    g = np.asarray(gen, dtype=float)
    if g.shape != (5,):
        raise ValueError(f"generalized coordinates must have shape (5,), got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("generalized coordinates must be finite")
    return g


def _chain(g, swing: Leg, params):
    legs = _leg_params(params)
    st, sw = swing.other, swing
    ps, pw = legs[st.index], legs[sw.index]
    phi = g[0]
    hs, ks = g[1 + 2 * st.index], g[2 + 2 * st.index]
    hw, kw = g[1 + 2 * sw.index], g[2 + 2 * sw.index]
    th_st = phi + hs
    sh_st = th_st - ks
    th_sw = phi + hw
    sh_sw = th_sw - kw
    return st, ps, pw, th_st, sh_st, th_sw, sh_sw


def _fk(g, swing: Leg, params) -> np.ndarray:
    _, ps, pw, th_st, sh_st, th_sw, sh_sw = _chain(g, swing, params)
    x = (-ps.shank_len * math.sin(sh_st) - ps.thigh_len * math.sin(th_st)
         + pw.thigh_len * math.sin(th_sw) + pw.shank_len * math.sin(sh_sw))
    y = (ps.shank_len * math.cos(sh_st) + ps.thigh_len * math.cos(th_st)
         - pw.thigh_len * math.cos(th_sw) - pw.shank_len * math.cos(sh_sw))
    return np.array([x, y])


def fk_batch(phi, q, swing, params=SegmentParams()) -> np.ndarray:
    """Vectorized :func:`forward_kinematics` over ``N`` samples.

    ``phi`` is ``(N,)``, ``q`` is ``(N, 4)`` and ``swing`` an ``(N,)`` array of
    swing-leg indices (0 left, 1 right). Returns ``(N, 2)``.
    """
    legs = _leg_params(params)
    phi = np.asarray(phi, dtype=float)
    q = np.asarray(q, dtype=float)
    sw = np.asarray(swing, dtype=int)
    st = 1 - sw
    rows = np.arange(len(phi))
    lt = np.array([legs[0].thigh_len, legs[1].thigh_len])
    ls = np.array([legs[0].shank_len, legs[1].shank_len])
    th_st = phi + q[rows, 2 * st]
    sh_st = th_st - q[rows, 2 * st + 1]
    th_sw = phi + q[rows, 2 * sw]
    sh_sw = th_sw - q[rows, 2 * sw + 1]
    x = (-ls[st] * np.sin(sh_st) - lt[st] * np.sin(th_st)
         + lt[sw] * np.sin(th_sw) + ls[sw] * np.sin(sh_sw))
    y = (ls[st] * np.cos(sh_st) + lt[st] * np.cos(th_st)
         - lt[sw] * np.cos(th_sw) - ls[sw] * np.cos(sh_sw))
    return np.stack([x, y], axis=-1)


def forward_kinematics(gen, swing_leg, params=SegmentParams()) -> np.ndarray:
    """Swing-ankle position in the stance-ankle ground frame.

    Parameters
    ----------
    gen : array_like, shape (5,)
        ``[phi, hipL, kneeL, hipR, kneeR]`` in rad.
    swing_leg : Leg or {'left', 'right'}
    params : SegmentParams or (SegmentParams, SegmentParams)
        One set for both legs, or ``(left, right)``.
    """
    return _fk(_check_gen(gen), as_leg(swing_leg), params)


def swing_jacobian(gen, swing_leg, params=SegmentParams()) -> np.ndarray:
    """``d r / d gen`` as a 2x5 matrix, columns ``[phi, hipL, kneeL, hipR, kneeR]``."""
    g = _check_gen(gen)
    st, ps, pw, th_st, sh_st, th_sw, sh_sw = _chain(g, as_leg(swing_leg), params)
    d_sh_st = ps.shank_len * np.array([math.cos(sh_st), math.sin(sh_st)])
    d_th_st = ps.thigh_len * np.array([math.cos(th_st), math.sin(th_st)])
    d_th_sw = pw.thigh_len * np.array([math.cos(th_sw), math.sin(th_sw)])
    d_sh_sw = pw.shank_len * np.array([math.cos(sh_sw), math.sin(sh_sw)])
    J = np.empty((2, 5))
    s, w = 1 + 2 * st.index, 1 + 2 * st.other.index
    J[:, s] = -d_sh_st - d_th_st
    J[:, s + 1] = d_sh_st
    J[:, w] = d_th_sw + d_sh_sw
    J[:, w + 1] = -d_sh_sw
    J[:, 0] = J[:, s] + J[:, w]
    return J


def swing_velocity(gen, gen_dot, swing_leg, params=SegmentParams()) -> np.ndarray:
    return swing_jacobian(gen, swing_leg, params) @ np.asarray(gen_dot, dtype=float)


def task_stiffness(gen, swing_leg, kp, params=SegmentParams(), axis: int = 1) -> float:
    """Static stiffness (N/m) of the swing ankle along ``axis`` (0 = x, 1 = y).

    Joint springs ``kp`` act on the four actuated joints only; torso pitch is
    held. Returns ``1 / (J Kp^-1 J^T)[axis, axis]`` for a force along ``axis``.
    """
    J = swing_jacobian(gen, swing_leg, params)[axis, 1:]
    kp = _vec(kp, 4, "kp")
    return float(1.0 / np.sum(J * J / kp))


def ankle_in_hip_frame(q_hip, q_knee, params: SegmentParams = SegmentParams(), phi=0.0):
    """Ankle position relative to its own hip; broadcasts over arrays."""
    th = np.asarray(phi) + q_hip
    sh = th - q_knee
    return np.stack([params.thigh_len * np.sin(th) + params.shank_len * np.sin(sh),
                     -params.thigh_len * np.cos(th) - params.shank_len * np.cos(sh)], axis=-1)


# --------------------------------------------------------------------------
# Gait reference and support
# --------------------------------------------------------------------------

def leg_phases(phase: float, pattern: GaitPattern) -> tuple[float, float]:
    return phase % 1.0, (phase + pattern.phase_offset_right) % 1.0


def gait_reference(phase: float, pattern: GaitPattern) -> tuple[np.ndarray, np.ndarray]:
    """Joint reference angles and their time derivative at a gait phase."""
    psi = phase + pattern.align
    psi_l, psi_r = psi % 1.0, (psi + pattern.phase_offset_right) % 1.0
    hip, knee = pattern.hip_shape, pattern.knee_shape
    gh_l, dh_l = hip(psi_l)
    gk_l, dk_l = knee(psi_l)
    gh_r, dh_r = hip(psi_r)
    gk_r, dk_r = knee(psi_r)
    span = pattern._span
    q_ref = pattern.offset + span * np.array([gh_l, gk_l, gh_r, gk_r])
    # the extended plateau evaluates to offset - span; guard rounding below 0
    if q_ref[1] < 0.0:
        q_ref[1] = 0.0
    if q_ref[3] < 0.0:
        q_ref[3] = 0.0
    return q_ref, (pattern.cadence * span) * np.array([dh_l, dk_l, dh_r, dk_r])


def support_from_phase(phase: float, pattern: GaitPattern) -> Support:
    psi_l, psi_r = leg_phases(phase, pattern)
    left_in, right_in = psi_l < STANCE_WINDOW, psi_r < STANCE_WINDOW
    if left_in and right_in:
        return Support.DOUBLE
    if left_in:
        return Support.LEFT_STANCE
    if right_in:
        return Support.RIGHT_STANCE
    return Support.LEFT_STANCE if psi_l > psi_r else Support.RIGHT_STANCE


def stance_index(phase, pattern: GaitPattern) -> np.ndarray:
    """Vectorized :func:`stance_leg` returning 0 (left) or 1 (right)."""
    psi_l = np.mod(phase, 1.0)
    psi_r = np.mod(np.asarray(phase) + pattern.phase_offset_right, 1.0)
    left_in, right_in = psi_l < STANCE_WINDOW, psi_r < STANCE_WINDOW
    trailing_left = psi_l > psi_r
    left = np.where(left_in != right_in, left_in, trailing_left)
    return np.where(left, 0, 1).astype(np.int8)


def stance_leg(phase: float, pattern: GaitPattern) -> Leg:
    """Kinematic stance leg: in double support the trailing leg keeps stance."""
    psi_l, psi_r = leg_phases(phase, pattern)
    left_in, right_in = psi_l < STANCE_WINDOW, psi_r < STANCE_WINDOW
    if left_in != right_in:
        return Leg.LEFT if left_in else Leg.RIGHT
    return Leg.LEFT if psi_l > psi_r else Leg.RIGHT


# --------------------------------------------------------------------------
# Dynamics
# --------------------------------------------------------------------------

DEFAULT_LIMITS = JointLimits()


def initial_state(pattern: GaitPattern, phase: float = 0.0, phi: float = 0.0) -> AgentState:
    """State sitting exactly on the reference at ``phase``."""
    q, qd = gait_reference(phase, pattern)
    return AgentState(phi=phi, q=q, qdot=qd, phase=phase % 1.0,
                      support=support_from_phase(phase, pattern))


def agent_step(state: AgentState, tau_applied, pattern: GaitPattern,
               imp: ImpedanceParams, dt: float,
               limits: JointLimits = DEFAULT_LIMITS,
               phase_noise: float = 0.0) -> AgentState:
    """Advance one agent by ``dt`` with semi-implicit Euler.

    ``inertia * qdd = kp (q_ref - q) + kd (qd_ref - qd) - viscous * qd + tau``.
    Joints hitting a limit are clamped with their velocity zeroed. Torso
    pitch is held. ``phase_noise`` is an additive phase increment (cycles)
    supplied by the caller's RNG.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be > 0, got {dt}")
    tau = np.asarray(tau_applied, dtype=float)
    if tau.shape != (4,):
        raise ValueError(f"tau_applied must have shape (4,), got {tau.shape}")
    if not np.all(np.isfinite(tau)):
        raise ValueError("tau_applied must be finite")

    q, qdot, phase = _integrate(state.q, state.qdot, state.phase, tau, pattern,
                                imp, dt, limits, phase_noise)
    return AgentState(phi=state.phi, q=q, qdot=qdot, phase=phase,
                      support=support_from_phase(phase, pattern))


def _joint_update(q, qdot, q_ref, qd_ref, tau, kp, kd, viscous, inertia, dt, lower, upper):
    """Semi-implicit Euler joint update; broadcasts over leading axes."""
    acc = (kp * (q_ref - q) + kd * (qd_ref - qdot) - viscous * qdot + tau) / inertia
    qdot = qdot + dt * acc
    q = q + dt * qdot
    hit = (q < lower) | (q > upper)
    if hit.any():
        q = np.minimum(np.maximum(q, lower), upper)
        qdot = np.where(hit, 0.0, qdot)
    return q, qdot


def _phase_advance(phase, tau, qd_ref, pattern, imp, dt, phase_noise):
    rate = pattern.cadence
    if imp.phase_gain:
        pull = imp.phase_gain * float(tau @ qd_ref) / pattern.cadence
        rate *= 1.0 + min(max(pull, -imp.phase_mod_max), imp.phase_mod_max)
    return (phase + dt * rate + phase_noise) % 1.0


def _integrate(q, qdot, phase, tau, pattern, imp, dt, limits, phase_noise):
    q_ref, qd_ref = gait_reference(phase, pattern)
    q, qdot = _joint_update(q, qdot, q_ref, qd_ref, tau, imp.kp, imp.kd, imp.viscous,
                            imp.inertia, dt, limits.lower, limits.upper)
    return q, qdot, _phase_advance(phase, tau, qd_ref, pattern, imp, dt, phase_noise)


def agent_energy(state: AgentState, pattern: GaitPattern, imp: ImpedanceParams) -> float:
    """Kinetic plus tracking-spring energy relative to the reference."""
    q_ref, _ = gait_reference(state.phase, pattern)
    e = state.q - q_ref
    return float(0.5 * np.sum(imp.inertia * state.qdot ** 2) + 0.5 * np.sum(imp.kp * e ** 2))
