"""Gait-cycle analysis of trial logs.

Angles come out in degrees and torques in Nm. Cycles are resampled to
101 points (0-100 % of the cycle, inclusive).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import HIP_L, HIP_R, KNEE_L, KNEE_R
from .coupling import Space
from .sim import TrialLog

N_POINTS = 101
EXCLUDED_CYCLES = 2
DEFAULT_THRESHOLD = 0.02
DEFAULT_HYSTERESIS = 0.005
DEFAULT_MIN_GAP = 0.5

LEGS = ("left", "right")
#: joint indices (hip, knee) of each leg in the 4-vector
LEG_JOINTS = {"left": (HIP_L, KNEE_L), "right": (HIP_R, KNEE_R)}


class InsufficientCycles(ValueError):
    pass


def deg(x):
    return np.rad2deg(x)


def rad(x):
    return np.deg2rad(x)


# --------------------------------------------------------------------------
# Heel strikes
# --------------------------------------------------------------------------

@dataclass
class HeelStrikes:
    """Detected heel strikes of one user.

    ``foot`` is 0 for left and 1 for right. The first ``excluded`` cycles of
    each foot are not used by :func:`normalize_cycles`.
    """

    user: str
    ticks: np.ndarray
    times: np.ndarray
    foot: np.ndarray
    excluded: int = EXCLUDED_CYCLES

    def __len__(self) -> int:
        return len(self.ticks)

    def for_foot(self, leg: str) -> np.ndarray:
        return self.ticks[self.foot == LEGS.index(leg)]

    def usable_bounds(self, leg: str) -> list[tuple[int, int]]:
        t = self.for_foot(leg)
        return [(int(a), int(b)) for a, b in zip(t[self.excluded:-1], t[self.excluded + 1:])]


def detect_heel_strikes(log: TrialLog, user, min_gap: float = DEFAULT_MIN_GAP,
                        threshold: float = DEFAULT_THRESHOLD,
                        hysteresis: float = DEFAULT_HYSTERESIS) -> HeelStrikes:
    """Heel strikes as downward crossings of the swing-ankle height.

    The detector re-arms once the height exceeds ``threshold + hysteresis``;
    a crossing closer than ``min_gap`` seconds to the last accepted strike of
    the same foot is ignored (and still disarms the detector).
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    u = log.user_index(user)
    y = log.r[:, u, 1]
    swing = 1 - log.stance[:, u]
    high = threshold + hysteresis
    ticks, feet = [], []
    armed = bool(y[0] > high) if len(y) else False
    last = [-np.inf, -np.inf]
    gap_ticks = min_gap / log.dt
    # candidate transitions only; the state machine runs over these
    below = y < threshold
    above = y > high
    idx = np.flatnonzero(below | above)
    for k in idx:
        if above[k]:
            armed = True
        elif armed:
            armed = False
            foot = swing[k]
            if k - last[foot] >= gap_ticks - 1e-9:
                ticks.append(k)
                feet.append(foot)
                last[foot] = k
    ticks = np.asarray(ticks, dtype=int)
    if len(ticks) < 3:
        raise InsufficientCycles(
            f"insufficient cycles: {len(ticks)} heel strikes detected for user "
            f"{'AB'[u]}")
    return HeelStrikes(user="AB"[u], ticks=ticks, times=log.t[ticks],
                       foot=np.asarray(feet, dtype=int))


# --------------------------------------------------------------------------
# Cycle normalization
# --------------------------------------------------------------------------

@dataclass
class GaitCycles:
    """Resampled cycles of one user.

    ``curves[leg]`` has shape ``(n_cycles, 101, 2)`` holding that leg's hip
    and knee angles in degrees; ``bounds[leg]`` the start/end ticks.
    """

    user: str
    curves: dict
    bounds: dict
    reference_user: str

    @property
    def is_reference(self) -> bool:
        return self.user == self.reference_user

    def count(self, leg: str | None = None) -> int:
        if leg is None:
            return sum(len(self.curves[l]) for l in LEGS)
        return len(self.curves[leg])


def _resample(log: TrialLog, u: int, joints, a: int, b: int) -> np.ndarray:
    tt = np.linspace(log.t[a], log.t[b], N_POINTS)
    seg = slice(a, b + 1)
    out = np.empty((N_POINTS, len(joints)))
    for c, j in enumerate(joints):
        out[:, c] = np.interp(tt, log.t[seg], log.q[seg, u, j])
    # exact anchors at the strike instants
    out[0] = log.q[a, u, list(joints)]
    out[-1] = log.q[b, u, list(joints)]
    return deg(out)


def normalize_cycles(log: TrialLog, strikes: dict, reference_user=None) -> dict:
    """Slice and resample each user's joint curves into gait cycles.

    ``strikes`` maps user ('A'/'B') to :class:`HeelStrikes`. With
    ``reference_user`` set, both users are cut at that user's strikes;
    otherwise each user at their own.
    """
    out = {}
    for user in ("A", "B"):
        src = strikes[reference_user] if reference_user is not None else strikes[user]
        u = log.user_index(user)
        curves, bounds = {}, {}
        for leg in LEGS:
            b = src.usable_bounds(leg)
            bounds[leg] = np.asarray(b, dtype=int).reshape(-1, 2)
            curves[leg] = np.array([_resample(log, u, LEG_JOINTS[leg], a, e) for a, e in b]
                                   ).reshape(-1, N_POINTS, 2)
        if sum(len(c) for c in curves.values()) == 0:
            raise InsufficientCycles(f"no usable cycles for user {user} after exclusion")
        out[user] = GaitCycles(user=user, curves=curves, bounds=bounds,
                               reference_user=reference_user or user)
    return out


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

@dataclass
class JointDifference:
    """Mean absolute joint-angle difference between two users (deg)."""

    hip: float
    knee: float
    per_leg: dict  # leg -> (n_cycles, 2) per-cycle means [hip, knee]

    def as_dict(self) -> dict:
        return {"hip": self.hip, "knee": self.knee}


def mean_abs_diff(cycles_a: GaitCycles, cycles_b: GaitCycles) -> JointDifference:
    """Mean over cycles and legs of the cycle-mean ``|qA - qB|`` per joint type."""
    per_leg = {}
    for leg in LEGS:
        ca, cb = cycles_a.curves[leg], cycles_b.curves[leg]
        if ca.shape != cb.shape:
            raise ValueError(f"mismatched cycle counts for {leg} leg: "
                             f"{len(ca)} vs {len(cb)}")
        per_leg[leg] = np.abs(ca - cb).mean(axis=1)
    pts = np.concatenate([per_leg[l] for l in LEGS])
    if len(pts) == 0:
        raise InsufficientCycles("no cycles to compare")
    hip, knee = pts.mean(axis=0)
    return JointDifference(hip=float(hip), knee=float(knee), per_leg=per_leg)


@dataclass
class Band:
    mean: np.ndarray
    std: np.ndarray


def band_stats(cycles: GaitCycles, legs=LEGS) -> dict:
    """Pointwise mean and sample std over all cycles of the given legs."""
    out = {}
    for c, name in enumerate(("hip", "knee")):
        stack = np.concatenate([cycles.curves[l][:, :, c] for l in legs])
        if len(stack) < 2:
            raise InsufficientCycles("band statistics need at least 2 cycles")
        # shifted by the first cycle: identical cycles give an exact mean and zero std
        dev = stack - stack[0]
        out[name] = Band(mean=stack[0] + dev.mean(axis=0), std=dev.std(axis=0, ddof=1))
    return out


def peak_flexion_asymmetry(cycles: GaitCycles) -> dict:
    """Left minus right peak of the mean hip and knee curves (deg)."""
    left = band_stats(cycles, ("left",))
    right = band_stats(cycles, ("right",))
    return {j: float(left[j].mean.max() - right[j].mean.max()) for j in ("hip", "knee")}


def peak_difference(cycles_a: GaitCycles, cycles_b: GaitCycles) -> dict:
    """Largest difference between the users' mean curves, per leg and joint.

    Returns ``{(leg, joint): (peak_deg, location_percent)}``.
    """
    out = {}
    for leg in LEGS:
        if not len(cycles_a.curves[leg]) or not len(cycles_b.curves[leg]):
            continue
        d = cycles_a.curves[leg].mean(axis=0) - cycles_b.curves[leg].mean(axis=0)
        for c, name in enumerate(("hip", "knee")):
            i = int(np.argmax(np.abs(d[:, c])))
            out[(leg, name)] = (float(abs(d[i, c])), float(i))
    return out


@dataclass
class TrackingError:
    rms: np.ndarray            # (2 users, 4 joints) Nm
    phase_profile: np.ndarray  # (2 users, n_bins, 4) Nm
    bin_edges: np.ndarray


def torque_tracking_error(log: TrialLog, n_bins: int = 10) -> TrackingError:
    """RMS of desired minus applied actuated torque, overall and per phase bin."""
    err = log.actuated(log.tau_des) - log.actuated(log.tau_app)
    rms = np.sqrt(np.mean(err ** 2, axis=0))
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    prof = np.zeros((2, n_bins, 4))
    for u in range(2):
        b = np.clip(np.digitize(log.phase[:, u], edges) - 1, 0, n_bins - 1)
        for k in range(n_bins):
            m = b == k
            if m.any():
                prof[u, k] = np.sqrt(np.mean(err[m, u] ** 2, axis=0))
    return TrackingError(rms=rms, phase_profile=prof, bin_edges=edges)


@dataclass
class PhaseSync:
    times: np.ndarray   # A's strike times used
    drift: np.ndarray   # cycles, relative to the first usable strike
    bounded: bool

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.drift))) if len(self.drift) else 0.0


def _strike_times(s) -> np.ndarray:
    if isinstance(s, HeelStrikes):
        return s.times[s.foot == 0]
    return np.asarray(s, dtype=float)


def phase_sync(strikes_a, strikes_b, exclude: int = EXCLUDED_CYCLES,
               bound: float = 0.5) -> PhaseSync:
    """Relative gait phase of B at each of A's strikes, in cycles.

    B's phase at time ``t`` is ``j + (t - b_j) / (b_{j+1} - b_j)`` for the
    bracketing strikes ``b_j <= t < b_{j+1}``; the relative phase is that
    minus A's strike count, which is unwrapped by construction. Accepts
    :class:`HeelStrikes` (left-foot strikes used) or arrays of times.
    """
    a, b = _strike_times(strikes_a), _strike_times(strikes_b)
    if len(a) < 3 or len(b) < 3:
        raise InsufficientCycles("phase synchronization needs >= 3 strikes per user")
    idx = np.arange(len(a))
    keep = (idx >= exclude) & (a >= b[0]) & (a < b[-1])
    if not keep.any():
        raise InsufficientCycles("no overlapping strikes after exclusion")
    j = np.searchsorted(b, a[keep], side="right") - 1
    phase_b = j + (a[keep] - b[j]) / (b[j + 1] - b[j])
    rel = phase_b - idx[keep]
    drift = rel - rel[0]
    return PhaseSync(times=a[keep], drift=drift, bounded=bool(np.max(np.abs(drift)) < bound))


# --------------------------------------------------------------------------
# Energy bookkeeping
# --------------------------------------------------------------------------

@dataclass
class EnergyBalance:
    work_a: float
    work_b: float
    spring: float
    dissipated: float

    @property
    def residual(self) -> float:
        return self.work_a + self.work_b + self.spring + self.dissipated

    @property
    def largest(self) -> float:
        return max(abs(self.work_a), abs(self.work_b), abs(self.spring), abs(self.dissipated))


def coupling_energy(log: TrialLog, K, C, q0=0.0, start: int = 0, stop: int | None = None
                    ) -> EnergyBalance:
    """Energy flows of a joint-space coupling over ``[start, stop]`` ticks.

    All terms are integrated along the logged path: work is the
    piecewise-linear torque times each tick's joint increment, dissipation
    the damper torque at the interval midpoint times the increment of the
    joint difference, and the spring term is exact.
    """
    stop = len(log) - 1 if stop is None else stop
    K = np.broadcast_to(np.asarray(K, float), (4,))
    C = np.broadcast_to(np.asarray(C, float), (4,))
    s = slice(start, stop + 1)
    tau = log.actuated(log.tau_app)[s]
    q, qd = log.q[s], log.qdot[s]
    dq = np.diff(q, axis=0)
    tau_mid = 0.5 * (tau[1:] + tau[:-1])
    work = np.einsum("nuj,nuj->u", tau_mid, dq)
    delta = q[:, 0] - q[:, 1] - q0
    spring = 0.5 * float(np.sum(K * (delta[-1] ** 2 - delta[0] ** 2)))
    vrel = qd[:, 0] - qd[:, 1]
    diss = float(np.sum(C * 0.5 * (vrel[1:] + vrel[:-1]) * np.diff(delta, axis=0)))
    return EnergyBalance(work_a=float(work[0]), work_b=float(work[1]),
                         spring=spring, dissipated=diss)


# --------------------------------------------------------------------------
# Static task-space transfer
# --------------------------------------------------------------------------

@dataclass
class StaticTransfer:
    """Settled vertical ankle displacements, measured from the follower's start (m)."""

    leader: float
    follower: float

    @property
    def fraction(self) -> float:
        return self.follower / self.leader if self.leader else float("nan")


def static_transfer(log: TrialLog, leader="A", settle: float = 1.0) -> StaticTransfer:
    """Follower ankle lift relative to the leader's, averaged over the last ``settle`` s."""
    lu = log.user_index(leader)
    fu = 1 - lu
    n = max(1, int(round(settle / log.dt)))
    y = log.r[:, :, 1]
    y0 = y[0, fu]
    return StaticTransfer(leader=float(y[-n:, lu].mean() - y0),
                          follower=float(y[-n:, fu].mean() - y0))


# --------------------------------------------------------------------------
# Trial summary
# --------------------------------------------------------------------------

@dataclass
class TrialSummary:
    """Everything reported for one trial; gait fields are ``None`` without gait cycles."""

    condition: str
    torque_rms: np.ndarray      # (2, 4) Nm
    diff: JointDifference | None = None
    bands: dict = field(default_factory=dict)       # user -> {'hip': Band, 'knee': Band}
    sync: PhaseSync | None = None
    peaks: dict = field(default_factory=dict)
    asymmetry: dict = field(default_factory=dict)   # user -> {'hip': deg, 'knee': deg}
    strikes: dict = field(default_factory=dict)
    cycles: dict = field(default_factory=dict)      # user -> GaitCycles used for bands
    static: StaticTransfer | None = None


def summarize(log: TrialLog, connected: bool | None = None, **detect_kw) -> TrialSummary:
    """Full analysis of a trial.

    Differences are always paired by user A's strikes. Bands use A's strikes
    for connected trials and each user's own strikes otherwise. Task-space
    trials also get a :class:`StaticTransfer`; a stationary task-space trial
    (no heel strikes) reports only that and the torque errors.
    """
    rms = torque_tracking_error(log).rms
    static = static_transfer(log) if log.space is Space.TASK else None
    try:
        strikes = {u: detect_heel_strikes(log, u, **detect_kw) for u in ("A", "B")}
    except InsufficientCycles:
        if static is None:
            raise
        return TrialSummary(condition=log.label, torque_rms=rms, static=static)
    if connected is None:
        connected = bool(np.any(log.tau_des != 0))
    paired = normalize_cycles(log, strikes, reference_user="A")
    own = paired if connected else normalize_cycles(log, strikes)
    diff = mean_abs_diff(paired["A"], paired["B"])
    bands, asym = {}, {}
    for u in ("A", "B"):
        try:
            bands[u] = band_stats(own[u])
            asym[u] = peak_flexion_asymmetry(own[u])
        except InsufficientCycles:
            bands[u], asym[u] = None, None
    return TrialSummary(
        condition=log.label, torque_rms=rms, diff=diff, bands=bands,
        sync=phase_sync(strikes["A"], strikes["B"]),
        peaks=peak_difference(paired["A"], paired["B"]),
        asymmetry=asym, strikes=strikes, cycles=own, static=static)
