"""Virtual spring-damper coupling between two users and torque rendering.

Sign convention: the coupling is attractive. With
``raw = K (qA - qB - q0) + C (qdA - qdB)`` the torque acting on user A is
``-raw`` and on user B ``+raw``; ``raw`` itself equals the torque on B, so
the unsigned commanded interaction torque is recoverable from any log.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import AgentState, SegmentParams, as_leg, forward_kinematics, swing_jacobian


class Space(str, enum.Enum):
    JOINT = "joint"
    TASK = "task"


class Mode(str, enum.Enum):
    NONE = "none"
    BIDIRECTIONAL = "bidirectional"
    UNI_A_TO_B = "uni_A_to_B"
    UNI_B_TO_A = "uni_B_to_A"
    ASYMMETRIC = "asymmetric"


class CouplingWarning(UserWarning):
    pass


def _diag(x, n, name):
    a = np.array(x, dtype=float)
    if a.ndim == 2:
        if a.shape != (n, n) or np.any(a != np.diag(np.diag(a))):
            raise ValueError(f"{name} must be a diagonal {n}x{n} matrix")
        a = np.diag(a).copy()
    elif a.ndim == 0:
        a = np.full(n, float(a))
    if a.shape != (n,):
        raise ValueError(f"{name} must have {n} diagonal entries, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class GainSet:
    """Diagonal stiffness/damping in joint and task space (stored as diagonals)."""

    K_joint: np.ndarray = field(default_factory=lambda: np.zeros(4))
    C_joint: np.ndarray = field(default_factory=lambda: np.zeros(4))
    K_task: np.ndarray = field(default_factory=lambda: np.zeros(2))
    C_task: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        object.__setattr__(self, "K_joint", _diag(self.K_joint, 4, "K_joint"))
        object.__setattr__(self, "C_joint", _diag(self.C_joint, 4, "C_joint"))
        object.__setattr__(self, "K_task", _diag(self.K_task, 2, "K_task"))
        object.__setattr__(self, "C_task", _diag(self.C_task, 2, "C_task"))


@dataclass(frozen=True)
class CouplingConfig:
    """Coupling space, directionality, gains and spring rest values.

    In ``ASYMMETRIC`` mode the main gains produce the torque felt by user B
    and ``gains_on_a`` the torque felt by user A. Value rules (damping sign,
    competitive flag) are reported by :meth:`violations` rather than raised,
    so a whole configuration can be checked at once.
    """

    space: Space = Space.JOINT
    mode: Mode = Mode.NONE
    K_joint: np.ndarray = field(default_factory=lambda: np.zeros(4))
    C_joint: np.ndarray = field(default_factory=lambda: np.zeros(4))
    q0: np.ndarray = field(default_factory=lambda: np.zeros(4))
    K_task: np.ndarray = field(default_factory=lambda: np.zeros(2))
    C_task: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r0: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gains_on_a: GainSet | None = None
    competitive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "space", Space(self.space))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "K_joint", _diag(self.K_joint, 4, "K_joint"))
        object.__setattr__(self, "C_joint", _diag(self.C_joint, 4, "C_joint"))
        object.__setattr__(self, "K_task", _diag(self.K_task, 2, "K_task"))
        object.__setattr__(self, "C_task", _diag(self.C_task, 2, "C_task"))
        object.__setattr__(self, "q0", _diag(self.q0, 4, "q0"))
        object.__setattr__(self, "r0", _diag(self.r0, 2, "r0"))
        if self.competitive and self._has_negative_stiffness():
            warnings.warn("negative coupling stiffness: no stability guarantee",
                          CouplingWarning, stacklevel=3)

    def gain_sets(self):
        main = GainSet(self.K_joint, self.C_joint, self.K_task, self.C_task)
        return [("coupling", main)] + (
            [("coupling.gains_on_a", self.gains_on_a)] if self.gains_on_a else [])

    def _has_negative_stiffness(self) -> bool:
        return any(np.any(g.K_joint < 0) or np.any(g.K_task < 0) for _, g in self.gain_sets())

    def violations(self) -> list[str]:
        out = []
        for prefix, g in self.gain_sets():
            for name in ("K_joint", "C_joint", "K_task", "C_task"):
                v = getattr(g, name)
                if not np.all(np.isfinite(v)):
                    out.append(f"{prefix}.{name}: entries must be finite")
            for name in ("C_joint", "C_task"):
                if np.any(getattr(g, name) < 0):
                    out.append(f"{prefix}.{name}: damping must be >= 0")
            for name in ("K_joint", "K_task"):
                if np.any(getattr(g, name) < 0) and not self.competitive:
                    out.append(f"{prefix}.{name}: negative stiffness requires "
                               "the competitive flag")
        for name in ("q0", "r0"):
            if not np.all(np.isfinite(getattr(self, name))):
                out.append(f"coupling.{name}: entries must be finite")
        if self.mode is Mode.ASYMMETRIC and self.gains_on_a is None:
            out.append("coupling.gains_on_a: required in asymmetric mode")
        return out

    def scaled(self, factor: float) -> "CouplingConfig":
        """Copy with every stiffness and damping multiplied by ``factor``."""
        from dataclasses import replace
        ga = self.gains_on_a
        if ga is not None:
            ga = GainSet(ga.K_joint * factor, ga.C_joint * factor,
                         ga.K_task * factor, ga.C_task * factor)
        return replace(self, K_joint=self.K_joint * factor, C_joint=self.C_joint * factor,
                       K_task=self.K_task * factor, C_task=self.C_task * factor,
                       gains_on_a=ga)


@dataclass(frozen=True)
class RenderLimits:
    """Per-joint torque, velocity and power limits plus a first-order lag."""

    tau_max: np.ndarray = field(default_factory=lambda: np.full(4, np.inf))
    qdot_max: np.ndarray = field(default_factory=lambda: np.full(4, np.inf))
    p_max: np.ndarray = field(default_factory=lambda: np.full(4, np.inf))
    lag_tau: float = 0.0

    def __post_init__(self):
        for name in ("tau_max", "qdot_max", "p_max"):
            object.__setattr__(self, name, _diag(getattr(self, name), 4, name))
        object.__setattr__(self, "_ideal", self.lag_tau == 0 and not (
            np.isfinite(self.tau_max).any() or np.isfinite(self.qdot_max).any()
            or np.isfinite(self.p_max).any()))

    @property
    def ideal(self) -> bool:
        """No lag and no finite limit: rendering is the identity."""
        return self._ideal

    def violations(self) -> list[str]:
        out = []
        for name in ("tau_max", "qdot_max", "p_max"):
            v = getattr(self, name)
            if np.any(np.isnan(v)) or np.any(v < 0):
                out.append(f"limits.{name}: must be >= 0")
        if not (math.isfinite(self.lag_tau) and self.lag_tau >= 0):
            out.append("limits.lag_tau: must be finite and >= 0")
        return out


@dataclass(frozen=True)
class TorqueCommand:
    """Desired and applied interaction torque for one user at one tick.

    Joint space: 4-vectors. Task space: 5-vectors whose component 0 is the
    backpack (torso) torque, which is logged but never actuated.
    """

    user: str
    tau_des: np.ndarray
    tau_applied: np.ndarray


# --------------------------------------------------------------------------
# Desired torques
# --------------------------------------------------------------------------

def _joint_raw(qa, qda, qb, qdb, K, C, q0):
    return K * (qa - qb - q0) + C * (qda - qdb)


def _joint_pair(qa, qda, qb, qdb, cfg: CouplingConfig) -> tuple[np.ndarray, np.ndarray]:
    """Joint-space torques on ``(A, B)`` from raw arrays, directionality applied."""
    raw = _joint_raw(qa, qda, qb, qdb, cfg.K_joint, cfg.C_joint, cfg.q0)
    alt = None
    if cfg.mode is Mode.ASYMMETRIC and cfg.gains_on_a is not None:
        alt = -_joint_raw(qa, qda, qb, qdb, cfg.gains_on_a.K_joint,
                          cfg.gains_on_a.C_joint, cfg.q0)
    return apply_directionality(-raw, raw, cfg.mode, alt)


def joint_coupling(state_a: AgentState, state_b: AgentState, cfg: CouplingConfig,
                   gains: GainSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Joint-space spring-damper torques ``(on A, on B)`` before directionality."""
    if cfg.space is not Space.JOINT:
        raise ValueError("joint_coupling requires a joint-space configuration")
    qa, qb = np.asarray(state_a.q), np.asarray(state_b.q)
    if qa.shape != (4,) or qb.shape != (4,):
        raise ValueError("joint states must be 4-vectors")
    K, C = (cfg.K_joint, cfg.C_joint) if gains is None else (gains.K_joint, gains.C_joint)
    raw = _joint_raw(qa, state_a.qdot, qb, state_b.qdot, K, C, cfg.q0)
    return -raw, raw


def task_force(state_a: AgentState, state_b: AgentState, stance, cfg: CouplingConfig,
               params_a=SegmentParams(), params_b=SegmentParams(),
               gains: GainSet | None = None):
    """Virtual task-space force between the swing ankles.

    Returns ``(F, ra, rb, Ja, Jb)`` with ``F = K (ra - rb - r0) + C (rda - rdb)``;
    the force on A's ankle is ``-F`` and on B's is ``+F``.
    """
    if stance is None:
        raise ValueError("task-space coupling needs a stance assignment")
    st_a, st_b = stance
    if st_a is None or st_b is None:
        raise ValueError("task-space coupling needs a stance leg for both users")
    sw_a, sw_b = as_leg(st_a).other, as_leg(st_b).other
    ga, gb = state_a.gen, state_b.gen
    Ja = swing_jacobian(ga, sw_a, params_a)
    Jb = swing_jacobian(gb, sw_b, params_b)
    ra = forward_kinematics(ga, sw_a, params_a)
    rb = forward_kinematics(gb, sw_b, params_b)
    rda, rdb = Ja @ state_a.gen_dot, Jb @ state_b.gen_dot
    K, C = (cfg.K_task, cfg.C_task) if gains is None else (gains.K_task, gains.C_task)
    F = K * (ra - rb - cfg.r0) + C * (rda - rdb)
    return F, ra, rb, Ja, Jb


def task_coupling(state_a: AgentState, state_b: AgentState, stance, cfg: CouplingConfig,
                  params_a=SegmentParams(), params_b=SegmentParams(),
                  gains: GainSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Generalized 5-vector torques ``J_i^T f_i`` for the ankle spring-damper.

    ``stance`` is ``(stance leg of A, stance leg of B)``.
    """
    if cfg.space is not Space.TASK:
        raise ValueError("task_coupling requires a task-space configuration")
    F, _, _, Ja, Jb = task_force(state_a, state_b, stance, cfg, params_a, params_b, gains)
    return Ja.T @ (-F), Jb.T @ F


def apply_directionality(tau_a, tau_b, mode: Mode, tau_a_asym=None):
    """Zero the transparent side, or swap in A's own-gain torque (asymmetric).

    ``tau_a_asym`` is the torque on A computed from ``gains_on_a``.
    """
    mode = Mode(mode)
    tau_a, tau_b = np.asarray(tau_a, dtype=float), np.asarray(tau_b, dtype=float)
    if mode is Mode.BIDIRECTIONAL:
        return tau_a, tau_b
    if mode is Mode.UNI_A_TO_B:
        return np.zeros_like(tau_a), tau_b
    if mode is Mode.UNI_B_TO_A:
        return tau_a, np.zeros_like(tau_b)
    if mode is Mode.NONE:
        return np.zeros_like(tau_a), np.zeros_like(tau_b)
    if tau_a_asym is None:
        raise ValueError("asymmetric mode needs the torque from the second gain set")
    return np.asarray(tau_a_asym, dtype=float), tau_b


def desired_torques(state_a: AgentState, state_b: AgentState, cfg: CouplingConfig,
                    stance=None, params_a=SegmentParams(), params_b=SegmentParams()):
    """Desired torques on A and B after directionality, per ``cfg.space``."""
    if cfg.mode is Mode.NONE:
        n = 4 if cfg.space is Space.JOINT else 5
        return np.zeros(n), np.zeros(n)
    if cfg.space is Space.JOINT:
        ta, tb = joint_coupling(state_a, state_b, cfg)
        alt = joint_coupling(state_a, state_b, cfg, cfg.gains_on_a)[0] \
            if cfg.mode is Mode.ASYMMETRIC else None
    else:
        ta, tb = task_coupling(state_a, state_b, stance, cfg, params_a, params_b)
        alt = task_coupling(state_a, state_b, stance, cfg, params_a, params_b,
                            cfg.gains_on_a)[0] if cfg.mode is Mode.ASYMMETRIC else None
    return apply_directionality(ta, tb, cfg.mode, alt)


# --------------------------------------------------------------------------
# Rendering
# --------------------------------------------------------------------------

def render(tau_des, qdot, limits: RenderLimits, prev_applied, dt: float) -> np.ndarray:
    """Torque actually delivered to one user's joints.

    Steps: first-order lag, per-joint torque clamp, power clamp
    ``|tau| <= p_max / |qdot|``, then zeroing of components that would push a
    joint already beyond ``qdot_max`` further along its motion.
    """
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be > 0, got {dt}")
    tau_des = np.asarray(tau_des, dtype=float)
    prev = np.asarray(prev_applied, dtype=float)
    qd = np.asarray(qdot, dtype=float)
    if not (np.all(np.isfinite(tau_des)) and np.all(np.isfinite(prev)) and np.all(np.isfinite(qd))):
        raise ValueError("render inputs must be finite")
    return _render(tau_des, qd, limits, prev, dt)


def _render(tau_des, qd, limits: RenderLimits, prev, dt):
    if limits.ideal:
        return tau_des.copy()
    if limits.lag_tau > 0:
        tau = prev + (dt / (limits.lag_tau + dt)) * (tau_des - prev)
    else:
        tau = tau_des.copy()
    speed = np.abs(qd)
    # no power cap at rest
    cap = np.divide(limits.p_max, speed, out=np.full(speed.shape, np.inf), where=speed > 0)
    cap = np.minimum(limits.tau_max, cap)
    tau = np.maximum(np.minimum(tau, cap), -cap)
    over = (speed > limits.qdot_max) & (tau * qd > 0)
    if over.any():
        tau[over] = 0.0
    return tau
