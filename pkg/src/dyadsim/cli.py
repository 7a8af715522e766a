"""Command-line runner: presets, scenario files, sweeps and validation.

Exit codes: 0 success, 2 bad usage or invalid configuration (including an
unknown preset), 3 simulation aborted, 4 output path not writable.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .analysis import InsufficientCycles, TrialSummary, summarize, torque_tracking_error
from .coupling import Mode, Space
from .presets import HARD, PRESETS, UnknownPreset, preset
from .sim import Scenario, SimulationAborted, run_trial

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ABORT = 3
EXIT_IO = 4
EXIT_CODES = (EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_IO)


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def validate(config) -> list[str]:
    """Every violated invariant of a scenario, as ``'field: message'`` strings.

    ``config`` may be a :class:`Scenario`, a preset name, a parsed config
    mapping or a path to a YAML file. Nothing is simulated.
    """
    if isinstance(config, Scenario):
        return config.violations()
    if isinstance(config, str) and config in PRESETS:
        return preset(config).violations()
    if isinstance(config, (str, Path)):
        try:
            config = io.load_config(config)
        except (OSError, ValueError) as exc:
            return [f"config: {exc}"]
        except Exception as exc:  # malformed YAML
            return [f"config: {exc}"]
    sc, errors = io.scenario_from_config(config)
    if sc is None:
        return errors
    return errors + sc.violations()


def parse_sweep(specs: list[str]) -> dict[str, list[float]]:
    """``['K=0,30,70', 'C=0,4,10']`` -> ``{'K': [...], 'C': [...]}``."""
    out = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        key = key.strip()
        if not sep or key not in ("K", "C"):
            raise ValueError(f"bad sweep {spec!r}; expected K=<list> or C=<list>")
        try:
            out[key] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ValueError(f"bad sweep values in {spec!r}") from None
        if not out[key]:
            raise ValueError(f"empty sweep list in {spec!r}")
    if "K" not in out:
        raise ValueError("a sweep needs a K=<list> entry")
    if "C" in out and len(out["C"]) != len(out["K"]):
        raise ValueError("K and C sweep lists must have the same length")
    return out


def _fmt_num(v: float) -> str:
    return f"{v:g}"


def sweep_scenarios(base: Scenario, sweep: dict) -> list[Scenario]:
    """One joint-space scenario per stiffness.

    Without a ``C`` list, damping keeps the base damping-to-stiffness ratio
    (the hard profile's when the base is uncoupled).
    """
    cfg = base.coupling
    if cfg.space is not Space.JOINT:
        raise ValueError("sweeps are defined for joint-space coupling only")
    mode = Mode.BIDIRECTIONAL if cfg.mode is Mode.NONE else cfg.mode
    k_ref = float(np.max(cfg.K_joint)) if cfg.mode is not Mode.NONE else 0.0
    ratio = (float(np.max(cfg.C_joint)) / k_ref) if k_ref > 0 else HARD[1] / HARD[0]
    out = []
    for i, k in enumerate(sweep["K"]):
        c = sweep["C"][i] if "C" in sweep else ratio * k
        label = f"{base.label}-K{_fmt_num(k)}"
        if "C" in sweep:
            label += f"-C{_fmt_num(c)}"
        out.append(replace(base, coupling=replace(cfg, mode=mode, K_joint=k, C_joint=c),
                           label=label))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dyadsim",
        description="Simulate two coupled lower-limb agents and analyse their gait.")
    p.add_argument("command", nargs="?", choices=["run"], default="run",
                   help="optional; 'run' is the only command")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", help=f"named condition: {', '.join(PRESETS)}")
    src.add_argument("--config", help="YAML scenario file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--duration", type=float, help="trial length in s")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--latency", type=int, help="coupling latency in ticks")
    p.add_argument("--k-scale", type=float, dest="k_scale",
                   help="multiply every coupling stiffness and damping")
    p.add_argument("--sweep", action="append", default=[], metavar="K=<list>",
                   help="stiffness sweep, e.g. K=0,30,70 (optionally also C=<list>)")
    p.add_argument("--validate", action="store_true",
                   help="check the configuration and exit without simulating")
    return p


def _base_scenario(args) -> Scenario:
    if args.config:
        try:
            cfg = io.load_config(args.config)
        except OSError as exc:
            raise ConfigError([f"config: {exc}"]) from None
        except Exception as exc:
            raise ConfigError([f"config: {exc}"]) from None
        sc, errors = io.scenario_from_config(cfg)
        if errors:
            raise ConfigError(errors)
        return sc
    return preset(args.preset or "hard")


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.duration is not None:
        sc = replace(sc, duration=args.duration)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    if args.latency is not None:
        sc = replace(sc, latency_ticks=args.latency)
    if args.k_scale is not None:
        sc = replace(sc, coupling=sc.coupling.scaled(args.k_scale))
    return sc


def _safe_name(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in label) or "trial"


def _report(summary: TrialSummary) -> str:
    row = io.summary_row(summary)
    if summary.static is not None:
        return (f"{summary.condition}: leader {row['static_leader_m']:.3f} m, follower "
                f"{row['static_follower_m']:.3f} m, fraction {row['static_fraction']:.3f}")
    return (f"{summary.condition}: hip {row['hip_mad_deg']:.2f} deg, knee "
            f"{row['knee_mad_deg']:.2f} deg, sync bounded {row['sync_bounded']}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        base = _apply_overrides(_base_scenario(args), args)
        scenarios = sweep_scenarios(base, parse_sweep(args.sweep)) if args.sweep else [base]
    except UnknownPreset as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    problems = [f"[{sc.label}] {m}" for sc in scenarios for m in sc.violations()]
    if args.validate:
        if problems:
            for m in problems:
                print(m)
            return EXIT_USAGE
        print(f"ok: {len(scenarios)} scenario(s), no violations")
        return EXIT_OK
    if problems:
        for m in problems:
            print(f"error: {m}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / ".write-test").touch()
        (out / ".write-test").unlink()
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_IO

    summaries = []
    for sc in scenarios:
        try:
            log = run_trial(sc)
        except SimulationAborted as exc:
            print(f"error: trial {sc.label!r} {exc}", file=sys.stderr)
            return EXIT_ABORT
        try:
            summary = summarize(log)
        except InsufficientCycles as exc:
            print(f"warning: trial {sc.label!r}: {exc}; gait metrics omitted",
                  file=sys.stderr)
            summary = TrialSummary(condition=sc.label, torque_rms=torque_tracking_error(log).rms)
        summaries.append(summary)
        trial_dir = out / _safe_name(sc.label)
        try:
            trial_dir.mkdir(parents=True, exist_ok=True)
            io.write_timeseries(log, trial_dir / "timeseries.csv")
            io.write_cycles([summary], trial_dir / "cycles.csv")
        except OSError as exc:
            print(f"error: cannot write trial output: {exc}", file=sys.stderr)
            return EXIT_IO
        print(_report(summary))
    try:
        io.write_summary(summaries, out / "summary.csv")
    except OSError as exc:
        print(f"error: cannot write summary: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
