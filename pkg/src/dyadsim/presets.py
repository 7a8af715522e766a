"""Named scenarios for the experimental conditions.

All walking presets share one asymmetric dyad: user B walks 10% faster,
with 70% of A's joint excursions, and starts 0.3 cycle out of phase, so an
uncoupled trial shows both an angle difference and a phase drift.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, least_squares

from .coupling import CouplingConfig, Mode, RenderLimits, Space
from .model import (HIP_L, KNEE_L, GaitPattern, ImpedanceParams, Leg, SegmentParams,
                    ankle_in_hip_frame, default_cadence, forward_kinematics, gait_reference)
from .sim import AgentConfig, Scenario

PRESETS = ("nc", "soft", "hard", "hard-hip30", "hard-knee20", "uni-joint", "uni-task-static")

TREADMILL_SPEED = 0.8          # km/h
CADENCE_RATIO_B = 1.1
ROM_SCALE_B = 0.7
INITIAL_PHASE_B = 0.3

#: surrogate human impedance shared by both users
SURROGATE = ImpedanceParams(kp=40.0, kd=4.0, inertia=0.1, viscous=0.5, phase_gain=0.1,
                            phase_mod_max=0.5)
#: rendering stage: torque, speed and power caps plus a 15 ms lag
LIMITS = RenderLimits(tau_max=60.0, qdot_max=8.0, p_max=200.0, lag_tau=0.015)

SOFT = (30.0, 4.0)             # K (Nm/rad), C (Nms/rad)
HARD = (70.0, 10.0)
UNI_JOINT = (100.0, 10.0)
TASK_Y = (250.0, 50.0)         # K_y (N/m), C_y (Ns/m)

LEADER_SCALE = (1.35, 1.20)    # horizontal, vertical scaling of the left ankle path
LEADER_LIFT = 0.40             # m, static task-space trial
STATIC_FOLLOWER_POSE = np.deg2rad([0.0, 0.0, 0.0, 90.0])   # stance straight, shank back
STATIC_LEADER_KNEE = np.deg2rad(120.0)
STATIC_DURATION = 10.0


class UnknownPreset(KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown preset {self.name!r}; choose one of: {', '.join(PRESETS)}"


def _dyad(cadence_a: float | None = None) -> tuple[AgentConfig, AgentConfig]:
    cad = default_cadence(TREADMILL_SPEED) if cadence_a is None else cadence_a
    a = AgentConfig(pattern=GaitPattern.default(cad), impedance=SURROGATE)
    b = AgentConfig(pattern=GaitPattern.default(CADENCE_RATIO_B * cad, rom_scale=ROM_SCALE_B),
                    impedance=SURROGATE, initial_phase=INITIAL_PHASE_B)
    return a, b


def _joint(K, C, mode=Mode.BIDIRECTIONAL, q0=0.0) -> CouplingConfig:
    return CouplingConfig(space=Space.JOINT, mode=mode, K_joint=K, C_joint=C, q0=q0)


# --------------------------------------------------------------------------
# Leader with a scaled left-ankle path
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LeaderFit:
    pattern: GaitPattern
    target: np.ndarray      # (n, 2) scaled hip-frame ankle path, m
    path: np.ndarray        # (n, 2) path produced by the fitted pattern
    rms: float              # m

    @property
    def reach_excess(self) -> float:
        """Largest distance (m) by which the target leaves the leg's reach."""
        return float(np.max(np.linalg.norm(self.target, axis=1)) - 0.9)


def _left_path(pattern: GaitPattern, phases, seg: SegmentParams) -> np.ndarray:
    q = np.array([gait_reference(p, pattern)[0] for p in phases])
    return ankle_in_hip_frame(q[:, HIP_L], q[:, KNEE_L], seg)


def scaled_target(pattern: GaitPattern, scale=LEADER_SCALE, n: int = 200,
                  seg: SegmentParams = SegmentParams()):
    """Left-ankle hip-frame path scaled about its centroid."""
    phases = np.arange(n) / n
    base = _left_path(pattern, phases, seg)
    c = base.mean(axis=0)
    return phases, c + (base - c) * np.asarray(scale)


def fit_leader(pattern: GaitPattern, scale=LEADER_SCALE, n: int = 200,
               seg: SegmentParams = SegmentParams()) -> LeaderFit:
    """Least-squares left hip offset/amplitude and knee amplitude for a scaled path.

    The knee offset follows its amplitude so the knee minimum stays at 0.
    """
    phases, target = scaled_target(pattern, scale, n, seg)

    def make(x):
        off, amp = pattern.offset.copy(), pattern.amplitude.copy()
        off[HIP_L], amp[HIP_L] = x[0], x[1]
        amp[KNEE_L] = x[2]
        off[KNEE_L] = pattern.rom_scale[KNEE_L] * x[2]
        return replace(pattern, offset=off, amplitude=amp)

    def resid(x):
        return (_left_path(make(x), phases, seg) - target).ravel()

    x0 = [pattern.offset[HIP_L], pattern.amplitude[HIP_L], pattern.amplitude[KNEE_L]]
    sol = least_squares(resid, x0, bounds=([-0.5, 0.0, 0.0], [1.5, 1.5, 1.2]), xtol=1e-12)
    fitted = make(sol.x)
    path = _left_path(fitted, phases, seg)
    rms = float(np.sqrt(np.mean(np.sum((path - target) ** 2, axis=1))))
    return LeaderFit(fitted, target, path, rms)


@lru_cache(maxsize=None)
def _default_leader() -> LeaderFit:
    return fit_leader(GaitPattern.default(default_cadence(TREADMILL_SPEED)))


# --------------------------------------------------------------------------
# Static task-space trial
# --------------------------------------------------------------------------

def _static_pattern(pose, cadence) -> GaitPattern:
    base = GaitPattern.default(cadence, rom_scale=0.0)
    return replace(base, offset=np.asarray(pose, dtype=float))


def static_leader_pose(follower_pose=STATIC_FOLLOWER_POSE, lift=LEADER_LIFT,
                       knee=STATIC_LEADER_KNEE, seg: SegmentParams = SegmentParams()):
    """Leader pose whose right ankle sits ``lift`` above the follower's start.

    Both stand on the left leg; the leader's right knee is held at ``knee``
    and its hip solved for the target height.
    """
    y0 = forward_kinematics(np.r_[0.0, follower_pose], Leg.RIGHT, seg)[1]

    def height(hip):
        return forward_kinematics([0.0, 0.0, 0.0, hip, knee], Leg.RIGHT, seg)[1] - (y0 + lift)

    hip = brentq(height, np.deg2rad(-30.0), 0.0, xtol=1e-14)
    return np.array([0.0, 0.0, hip, knee])


# --------------------------------------------------------------------------

def preset(name: str) -> Scenario:
    """Fully populated scenario for one named condition."""
    a, b = _dyad()
    hard_k, hard_c = HARD
    if name == "nc":
        cfg = CouplingConfig(space=Space.JOINT, mode=Mode.NONE)
    elif name == "soft":
        cfg = _joint(*SOFT)
    elif name == "hard":
        cfg = _joint(*HARD)
    elif name == "hard-hip30":
        cfg = _joint(hard_k, hard_c, q0=np.deg2rad([30.0, 0.0, 30.0, 0.0]))
    elif name == "hard-knee20":
        cfg = _joint(hard_k, hard_c, q0=np.deg2rad([0.0, 20.0, 0.0, 20.0]))
    elif name == "uni-joint":
        cfg = _joint(*UNI_JOINT, mode=Mode.UNI_A_TO_B)
        a = replace(a, pattern=_default_leader().pattern)
    elif name == "uni-task-static":
        k, c = TASK_Y
        cfg = CouplingConfig(space=Space.TASK, mode=Mode.UNI_A_TO_B,
                             K_task=[0.0, k], C_task=[0.0, c])
        cad = a.pattern.cadence
        a = replace(a, pattern=_static_pattern(static_leader_pose(), cad),
                    fixed_stance=Leg.LEFT)
        b = replace(b, pattern=_static_pattern(STATIC_FOLLOWER_POSE, cad),
                    fixed_stance=Leg.LEFT, initial_phase=0.0)
        return Scenario(agents=(a, b), coupling=cfg, limits=LIMITS,
                        duration=STATIC_DURATION, treadmill_speed=TREADMILL_SPEED,
                        label=name)
    else:
        raise UnknownPreset(name)
    return Scenario(agents=(a, b), coupling=cfg, limits=LIMITS,
                    treadmill_speed=TREADMILL_SPEED, label=name)
