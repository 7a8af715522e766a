"""CSV output and YAML scenario files.

Time series are written in SI units (angles in rad) with 17 significant
digits so that reading them back reproduces the log exactly. Summary and
cycle tables use degrees for angles.

Scenario file schema (every key optional; ``preset`` picks the base)::

    preset: hard
    label: my-trial
    duration: 60.0          # s
    dt: 0.003               # s
    latency_ticks: 0
    seed: 0
    treadmill_speed: 0.8    # km/h
    phase_jitter: 0.0       # cycles (std of initial phase)
    phase_noise: 0.0        # cycles / sqrt(s)
    sensor_noise: 0.0       # rad
    coupling:
      space: joint          # joint | task
      mode: bidirectional   # none | bidirectional | uni_A_to_B | uni_B_to_A | asymmetric
      K_joint: 70.0         # scalar or 4 diagonal entries, Nm/rad
      C_joint: 10.0         # Nms/rad
      q0: [0, 0, 0, 0]      # rad
      K_task: [0, 250]      # N/m
      C_task: [0, 50]       # Ns/m
      r0: [0, 0]            # m
      gains_on_a: {K_joint: 140.0, C_joint: 10.0}
      competitive: false
    limits: {tau_max: 60, qdot_max: 8, p_max: 200, lag_tau: 0.015}   # null = unlimited
    joint_limits: {lower: [...], upper: [...]}                        # rad
    agents:
      A: {cadence: 0.5, rom_scale: 1.0, offset: [...], amplitude: [...],
          phase_offset_right: 0.5, initial_phase: 0.0, phi: 0.0, fixed_stance: null,
          thigh_len: 0.45, shank_len: 0.45,
          kp: 40, kd: 4, inertia: 0.1, viscous: 0.5, phase_gain: 0.1, phase_mod_max: 0.5}
      B: {...}

When ``rom_scale`` is given without ``offset``, knee offsets follow the
default rule (knee minimum at 0 deg).
"""

from __future__ import annotations

import csv
import math
from dataclasses import replace

import numpy as np
import yaml

from .analysis import LEGS, InsufficientCycles, TrialSummary, band_stats
from .coupling import GainSet, Space
from .model import KNEES, as_leg
from .sim import USERS, AgentConfig, Scenario, TrialLog

JOINT_COLS = ("hipL", "kneeL", "hipR", "kneeR")

SCENARIO_KEYS = {"preset", "label", "duration", "dt", "latency_ticks", "seed",
                 "treadmill_speed", "phase_jitter", "phase_noise", "sensor_noise",
                 "coupling", "limits", "joint_limits", "agents"}
COUPLING_KEYS = {"space", "mode", "K_joint", "C_joint", "q0", "K_task", "C_task", "r0",
                 "gains_on_a", "competitive"}
GAIN_KEYS = {"K_joint", "C_joint", "K_task", "C_task"}
LIMIT_KEYS = {"tau_max", "qdot_max", "p_max", "lag_tau"}
PATTERN_KEYS = {"cadence", "rom_scale", "offset", "amplitude", "phase_offset_right"}
IMPEDANCE_KEYS = {"kp", "kd", "inertia", "viscous", "phase_gain", "phase_mod_max"}
SEGMENT_KEYS = {"thigh_len", "shank_len"}
AGENT_KEYS = PATTERN_KEYS | IMPEDANCE_KEYS | SEGMENT_KEYS | {"initial_phase", "phi",
                                                            "fixed_stance"}


# --------------------------------------------------------------------------
# Time series
# --------------------------------------------------------------------------

def timeseries_columns(n_tau: int) -> list[str]:
    """Fixed column order of ``timeseries.csv``."""
    cols = ["t"]
    for u in USERS:
        p = f"user{u}."
        cols.append(p + "phi")
        cols += [f"{p}q[{j}]" for j in range(4)]
        cols += [f"{p}qdot[{j}]" for j in range(4)]
        cols += [f"{p}tau_des[{j}]" for j in range(n_tau)]
        cols += [f"{p}tau_app[{j}]" for j in range(n_tau)]
    cols += ["rA.x", "rA.y", "rB.x", "rB.y", "phaseA", "phaseB", "stanceA", "stanceB"]
    return cols


def timeseries_table(log: TrialLog) -> np.ndarray:
    blocks = [log.t[:, None]]
    for u in range(2):
        blocks += [log.phi[:, u, None], log.q[:, u], log.qdot[:, u],
                   log.tau_des[:, u], log.tau_app[:, u]]
    blocks += [log.r[:, 0], log.r[:, 1], log.phase, log.stance.astype(float)]
    return np.hstack(blocks)


def write_timeseries(log: TrialLog, path) -> None:
    np.savetxt(path, timeseries_table(log), delimiter=",", fmt="%.17g",
               header=",".join(timeseries_columns(log.n_tau)), comments="")


def read_timeseries(path, label: str = "custom") -> TrialLog:
    """Inverse of :func:`write_timeseries`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_tau = sum(1 for c in header if c.startswith("userA.tau_des["))
    if header != timeseries_columns(n_tau):
        raise ValueError(f"{path}: unexpected column layout")
    col = {name: i for i, name in enumerate(header)}

    def grab(prefix, k):
        return np.stack([data[:, col[f"{prefix}[{j}]"]] for j in range(k)], axis=-1)

    def both(field, k):
        return np.stack([grab(f"user{u}.{field}", k) for u in USERS], axis=1)

    t = data[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.003
    return TrialLog(
        t=t, phi=data[:, [col["userA.phi"], col["userB.phi"]]],
        q=both("q", 4), qdot=both("qdot", 4),
        tau_des=both("tau_des", n_tau), tau_app=both("tau_app", n_tau),
        r=np.stack([data[:, [col["rA.x"], col["rA.y"]]],
                    data[:, [col["rB.x"], col["rB.y"]]]], axis=1),
        phase=data[:, [col["phaseA"], col["phaseB"]]],
        stance=data[:, [col["stanceA"], col["stanceB"]]].astype(np.int8),
        space=Space.JOINT if n_tau == 4 else Space.TASK, dt=dt, label=label)


# --------------------------------------------------------------------------
# Summary and cycle tables
# --------------------------------------------------------------------------

SUMMARY_COLUMNS = (
    ["condition", "hip_mad_deg", "knee_mad_deg",
     "hip_mad_left_deg", "hip_mad_right_deg", "knee_mad_left_deg", "knee_mad_right_deg"]
    + [f"tau_rms_{u}_{j}_Nm" for u in USERS for j in JOINT_COLS]
    + ["sync_bounded", "max_drift_cycles"]
    + [f"asym_{u}_{j}_deg" for u in USERS for j in ("hip", "knee")]
    + ["static_leader_m", "static_follower_m", "static_fraction"])


def summary_row(s: TrialSummary) -> dict:
    nan = float("nan")
    row = dict.fromkeys(SUMMARY_COLUMNS, nan)
    row["condition"] = s.condition
    if s.diff is not None:
        row["hip_mad_deg"] = s.diff.hip
        row["knee_mad_deg"] = s.diff.knee
        for leg in LEGS:
            pts = s.diff.per_leg[leg]
            if len(pts):
                row[f"hip_mad_{leg}_deg"], row[f"knee_mad_{leg}_deg"] = pts.mean(axis=0)
    for u, name in enumerate(USERS):
        for j, jn in enumerate(JOINT_COLS):
            row[f"tau_rms_{name}_{jn}_Nm"] = s.torque_rms[u, j]
    if s.sync is not None:
        row["sync_bounded"] = s.sync.bounded
        row["max_drift_cycles"] = s.sync.max_drift
    for u in USERS:
        a = s.asymmetry.get(u)
        if a:
            row[f"asym_{u}_hip_deg"], row[f"asym_{u}_knee_deg"] = a["hip"], a["knee"]
    if s.static is not None:
        row["static_leader_m"] = s.static.leader
        row["static_follower_m"] = s.static.follower
        row["static_fraction"] = s.static.fraction
    return row


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.10g}"
    return str(v)


def write_summary(summaries, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            row = summary_row(s)
            w.writerow([_fmt(row[c]) for c in SUMMARY_COLUMNS])


def read_summary(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k == "condition":
                continue
            r[k] = v == "true" if v in ("true", "false") else float(v)
    return rows


CYCLE_COLUMNS = ("condition", "user", "leg", "joint", "percent", "mean_deg", "std_deg")


def write_cycles(summaries, path) -> None:
    """101-point mean and std bands per condition, user, leg and joint."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CYCLE_COLUMNS)
        for s in summaries:
            for u in USERS:
                cyc = s.cycles.get(u)
                if cyc is None:
                    continue
                for leg in LEGS:
                    try:
                        bands = band_stats(cyc, (leg,))
                    except InsufficientCycles:
                        continue
                    for joint in ("hip", "knee"):
                        b = bands[joint]
                        for pct in range(len(b.mean)):
                            w.writerow([s.condition, u, leg, joint, pct,
                                        f"{b.mean[pct]:.10g}", f"{b.std[pct]:.10g}"])


# --------------------------------------------------------------------------
# Scenario files
# --------------------------------------------------------------------------

def load_config(path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return data


def _unknown(d: dict, allowed: set, prefix: str, errors: list) -> None:
    for k in d:
        if k not in allowed:
            errors.append(f"{prefix}{k}: unknown key")


def _inf(v):
    """``None`` (YAML null) means unlimited, also inside lists."""
    if isinstance(v, list):
        return [_inf(x) for x in v]
    return np.inf if v is None else v


def _build(errors, prefix, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, TypeError) as exc:
        errors.append(f"{prefix}: {exc}")
        return None


def _agent_from(base: AgentConfig, d: dict, prefix: str, errors: list) -> AgentConfig:
    if not isinstance(d, dict):
        errors.append(f"{prefix}: must be a mapping")
        return base
    _unknown(d, AGENT_KEYS, prefix + ".", errors)
    out = base
    pat = {k: d[k] for k in PATTERN_KEYS if k in d}
    if pat:
        if "rom_scale" in pat and "offset" not in pat:
            try:
                rom = np.broadcast_to(np.asarray(pat["rom_scale"], float), (4,))
                amp = np.broadcast_to(np.asarray(pat.get("amplitude", base.pattern.amplitude),
                                                 float), (4,))
                off = base.pattern.offset.copy()
                for k in KNEES:
                    off[k] = rom[k] * amp[k]
                pat["offset"] = off
            except ValueError:
                pass  # reported by the pattern constructor below
        new = _build(errors, prefix + ".pattern", replace, base.pattern, **pat)
        if new is not None:
            out = replace(out, pattern=new)
    imp = {k: d[k] for k in IMPEDANCE_KEYS if k in d}
    if imp:
        new = _build(errors, prefix + ".impedance", replace, base.impedance, **imp)
        if new is not None:
            out = replace(out, impedance=new)
    seg = {k: d[k] for k in SEGMENT_KEYS if k in d}
    if seg:
        legs = base.legs[0]
        new = _build(errors, prefix + ".segments", replace, legs, **seg)
        if new is not None:
            out = replace(out, segments=new)
    for k in ("initial_phase", "phi"):
        if k in d:
            try:
                out = replace(out, **{k: float(d[k])})
            except (TypeError, ValueError):
                errors.append(f"{prefix}.{k}: must be a number")
    if "fixed_stance" in d:
        fs = d["fixed_stance"]
        leg = None if fs is None else _build(errors, prefix + ".fixed_stance", as_leg, fs)
        out = replace(out, fixed_stance=leg)
    return out


def scenario_from_config(cfg: dict, base: Scenario | None = None):
    """Build a scenario from a parsed config mapping.

    Returns ``(scenario, errors)``; construction problems are collected as
    ``'field: message'`` strings instead of raised. ``scenario`` is the best
    effort (unbuildable parts keep their base values).
    """
    from .presets import PRESETS, preset

    errors: list[str] = []
    if not isinstance(cfg, dict):
        return None, ["config: top level must be a mapping"]
    _unknown(cfg, SCENARIO_KEYS, "", errors)
    if base is None:
        name = cfg.get("preset")
        if name is None:
            base = Scenario()
        elif name in PRESETS:
            base = preset(name)
        else:
            errors.append(f"preset: unknown preset {name!r}; choose one of: {', '.join(PRESETS)}")
            base = Scenario()
    sc = base
    top = {}
    for k in ("label", "duration", "dt", "latency_ticks", "seed", "treadmill_speed",
              "phase_jitter", "phase_noise", "sensor_noise"):
        if k in cfg:
            top[k] = cfg[k]
    if "label" not in top and "preset" in cfg and isinstance(cfg.get("preset"), str):
        top["label"] = cfg["preset"]
    sc = replace(sc, **top)

    c = cfg.get("coupling")
    if c is not None:
        if not isinstance(c, dict):
            errors.append("coupling: must be a mapping")
        else:
            _unknown(c, COUPLING_KEYS, "coupling.", errors)
            fields = {k: v for k, v in c.items() if k in COUPLING_KEYS}
            if isinstance(fields.get("gains_on_a"), dict):
                g = fields["gains_on_a"]
                _unknown(g, GAIN_KEYS, "coupling.gains_on_a.", errors)
                fields["gains_on_a"] = _build(errors, "coupling.gains_on_a", GainSet,
                                              **{k: g[k] for k in GAIN_KEYS if k in g})
            new = _build(errors, "coupling", replace, sc.coupling, **fields)
            if new is not None:
                sc = replace(sc, coupling=new)

    lim = cfg.get("limits")
    if lim is not None:
        if not isinstance(lim, dict):
            errors.append("limits: must be a mapping")
        else:
            _unknown(lim, LIMIT_KEYS, "limits.", errors)
            fields = {k: _inf(lim[k]) if k != "lag_tau" else lim[k]
                      for k in LIMIT_KEYS if k in lim}
            new = _build(errors, "limits", replace, sc.limits, **fields)
            if new is not None:
                sc = replace(sc, limits=new)

    jl = cfg.get("joint_limits")
    if jl is not None:
        if not isinstance(jl, dict):
            errors.append("joint_limits: must be a mapping")
        else:
            _unknown(jl, {"lower", "upper"}, "joint_limits.", errors)
            new = _build(errors, "joint_limits", replace, sc.joint_limits,
                         **{k: jl[k] for k in ("lower", "upper") if k in jl})
            if new is not None:
                sc = replace(sc, joint_limits=new)

    ag = cfg.get("agents")
    if ag is not None:
        if not isinstance(ag, dict):
            errors.append("agents: must be a mapping with keys A and B")
        else:
            _unknown(ag, set(USERS), "agents.", errors)
            agents = list(sc.agents)
            for i, u in enumerate(USERS):
                if u in ag:
                    agents[i] = _agent_from(agents[i], ag[u], f"agents.{u}", errors)
            sc = replace(sc, agents=tuple(agents))
    return sc, errors


def _plain(x):
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, list):
        return [_plain(v) for v in x]
    if isinstance(x, float) and math.isinf(x):
        return None
    if hasattr(x, "value"):
        return x.value
    return x


def scenario_to_config(sc: Scenario) -> dict:
    """Mapping that :func:`scenario_from_config` turns back into ``sc``."""
    cpl = sc.coupling
    coupling = {k: _plain(getattr(cpl, k)) for k in
                ("space", "mode", "K_joint", "C_joint", "q0", "K_task", "C_task", "r0",
                 "competitive")}
    if cpl.gains_on_a is not None:
        coupling["gains_on_a"] = {k: _plain(getattr(cpl.gains_on_a, k)) for k in GAIN_KEYS}
    agents = {}
    for u, a in zip(USERS, sc.agents):
        left, right = a.legs
        if left != right:
            raise ValueError("per-leg segment lengths cannot be expressed in a config file")
        d = {k: _plain(getattr(a.pattern, k)) for k in PATTERN_KEYS}
        d.update({k: _plain(getattr(a.impedance, k)) for k in IMPEDANCE_KEYS})
        d.update(thigh_len=left.thigh_len, shank_len=left.shank_len,
                 initial_phase=a.initial_phase, phi=a.phi,
                 fixed_stance=None if a.fixed_stance is None else as_leg(a.fixed_stance).value)
        agents[u] = d
    return {
        "label": sc.label, "duration": sc.duration, "dt": sc.dt,
        "latency_ticks": int(sc.latency_ticks), "seed": int(sc.seed),
        "treadmill_speed": sc.treadmill_speed, "phase_jitter": sc.phase_jitter,
        "phase_noise": sc.phase_noise, "sensor_noise": sc.sensor_noise,
        "coupling": coupling,
        "limits": {k: _plain(getattr(sc.limits, k)) for k in LIMIT_KEYS},
        "joint_limits": {"lower": _plain(sc.joint_limits.lower),
                         "upper": _plain(sc.joint_limits.upper)},
        "agents": agents,
    }


def dump_config(sc: Scenario, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_config(sc), fh, sort_keys=False)
