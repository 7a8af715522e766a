"""Fixed-step dyad simulator.

Each tick runs the same staged pipeline:

1. the coupling node reads both users' states as they were
   ``latency_ticks`` ticks ago (plus optional sensor noise);
2. it computes desired interaction torques (joint or task space,
   directionality applied);
3. each user's rendering stage turns them into applied torques (lag, limits);
4. the tick's input states and torques are appended to the log;
5. each agent integrates one ``dt`` under its applied torque;
6. the new states (and their kinematic stance legs) are pushed into the
   latency buffers.

Row ``k`` of a :class:`TrialLog` therefore holds the state at ``t = k * dt``
together with the torques that act over ``[t, t + dt)``. The stance and
swing-ankle columns are pure functions of the logged state; :func:`finish`
fills them in one vectorized pass (``run_trial`` calls it).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .coupling import (CouplingConfig, Mode, RenderLimits, Space, _joint_pair, _render,
                       desired_torques)
from .model import (AgentState, GaitPattern, ImpedanceParams, JointLimits, Leg,
                    SegmentParams, _joint_update, _phase_advance, as_leg, fk_batch,
                    gait_reference, initial_state, stance_index, stance_leg,
                    support_from_phase)

ABORT_QDOT = 50.0
USERS = ("A", "B")


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SimulationAborted(RuntimeError):
    def __init__(self, tick: int, message: str, log: "TrialLog | None" = None):
        super().__init__(f"aborted at tick {tick}: {message}")
        self.tick = tick
        self.log = log


@dataclass(frozen=True)
class AgentConfig:
    segments: SegmentParams | tuple = field(default_factory=SegmentParams)
    pattern: GaitPattern = field(default_factory=GaitPattern.default)
    impedance: ImpedanceParams = field(default_factory=ImpedanceParams)
    initial_phase: float = 0.0
    phi: float = 0.0
    fixed_stance: Leg | None = None

    @property
    def legs(self) -> tuple[SegmentParams, SegmentParams]:
        if isinstance(self.segments, SegmentParams):
            return self.segments, self.segments
        return tuple(self.segments)


@dataclass(frozen=True)
class Scenario:
    agents: tuple[AgentConfig, AgentConfig] = field(
        default_factory=lambda: (AgentConfig(), AgentConfig()))
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    limits: RenderLimits = field(default_factory=RenderLimits)
    duration: float = 60.0
    dt: float = 0.003
    latency_ticks: int = 0
    treadmill_speed: float = 0.8
    seed: int = 0
    phase_jitter: float = 0.0
    phase_noise: float = 0.0
    sensor_noise: float = 0.0
    joint_limits: JointLimits = field(default_factory=JointLimits)
    label: str = "custom"

    @property
    def n_ticks(self) -> int:
        return int(math.floor(self.duration / self.dt + 1e-9))

    def violations(self) -> list[str]:
        """Every broken invariant, as ``'field: message'`` strings."""
        out = []

        def positive(name, v):
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                out.append(f"{name}: must be finite and > 0, got {v!r}")

        positive("duration", self.duration)
        positive("dt", self.dt)
        positive("treadmill_speed", self.treadmill_speed)
        if not (isinstance(self.latency_ticks, (int, np.integer)) and self.latency_ticks >= 0):
            out.append(f"latency_ticks: must be an integer >= 0, got {self.latency_ticks!r}")
        if not isinstance(self.seed, (int, np.integer)):
            out.append(f"seed: must be an integer, got {self.seed!r}")
        for name in ("phase_jitter", "phase_noise", "sensor_noise"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                out.append(f"{name}: must be finite and >= 0, got {v!r}")
        if len(self.agents) != 2:
            out.append(f"agents: exactly two agents required, got {len(self.agents)}")
        else:
            for user, ag in zip(USERS, self.agents):
                if not math.isfinite(ag.initial_phase):
                    out.append(f"agents.{user}.initial_phase: must be finite")
                if not math.isfinite(ag.phi):
                    out.append(f"agents.{user}.phi: must be finite")
                if self.coupling.space is Space.TASK and ag.fixed_stance is None \
                        and ag.pattern.rom_scale.max() == 0:
                    out.append(f"agents.{user}.fixed_stance: a stationary agent "
                               "needs a fixed stance leg in task space")
        out += self.coupling.violations()
        out += self.limits.violations()
        return out


@dataclass
class TrialLog:
    """Tick-indexed record of one trial; user axis is ``(A, B)``."""

    t: np.ndarray
    phi: np.ndarray        # (N, 2)
    q: np.ndarray          # (N, 2, 4)
    qdot: np.ndarray       # (N, 2, 4)
    tau_des: np.ndarray    # (N, 2, 4|5)
    tau_app: np.ndarray    # (N, 2, 4|5)
    r: np.ndarray          # (N, 2, 2)
    phase: np.ndarray      # (N, 2)
    stance: np.ndarray     # (N, 2) 0 = left, 1 = right
    space: Space = Space.JOINT
    dt: float = 0.003
    label: str = "custom"
    events: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    @staticmethod
    def user_index(user) -> int:
        if user in (0, 1):
            return int(user)
        try:
            return USERS.index(str(user).upper())
        except ValueError:
            raise ValueError(f"unknown user {user!r}; expected 'A' or 'B'") from None

    @property
    def n_tau(self) -> int:
        return self.tau_des.shape[2]

    def actuated(self, tau: np.ndarray) -> np.ndarray:
        """Drop the backpack column of task-space torques."""
        return tau[..., -4:]

    def truncated(self, n: int) -> "TrialLog":
        return replace(self, t=self.t[:n], phi=self.phi[:n], q=self.q[:n],
                       qdot=self.qdot[:n], tau_des=self.tau_des[:n],
                       tau_app=self.tau_app[:n], r=self.r[:n], phase=self.phase[:n],
                       stance=self.stance[:n], events=list(self.events))


@dataclass
class World:
    """Mutable simulation state, exclusively owned by one trial.

    ``q`` and ``qdot`` are ``(2, 4)`` arrays and ``phase`` a ``(2,)`` array with
    the user axis first; ``history`` holds ``(q, qdot, phase)`` snapshots for
    the latency buffer.
    """

    scenario: Scenario
    q: np.ndarray
    qdot: np.ndarray
    phase: np.ndarray
    history: deque
    prev_applied: np.ndarray
    rng: np.random.Generator
    log: TrialLog
    tick: int = 0
    saturated: list = field(default_factory=lambda: [False, False])
    ideal_render: bool = False

    def state(self, user) -> AgentState:
        i = TrialLog.user_index(user)
        ag = self.scenario.agents[i]
        return AgentState(phi=ag.phi, q=self.q[i].copy(), qdot=self.qdot[i].copy(),
                          phase=float(self.phase[i]),
                          support=support_from_phase(self.phase[i], ag.pattern))

    @property
    def states(self) -> list:
        return [self.state(0), self.state(1)]


def _stance_for(ag: AgentConfig, phase: float) -> Leg:
    if ag.fixed_stance is not None:
        return as_leg(ag.fixed_stance)
    return stance_leg(phase, ag.pattern)


def build_world(scenario: Scenario) -> World:
    """Initialize agents on their references and pre-fill latency buffers."""
    problems = scenario.violations()
    if problems:
        name, _, msg = problems[0].partition(": ")
        raise ScenarioError(name, msg + (f" (+{len(problems) - 1} more)" if len(problems) > 1 else ""))
    rng = np.random.default_rng(scenario.seed)
    states = []
    for ag in scenario.agents:
        phase = ag.initial_phase
        if scenario.phase_jitter > 0:
            phase += rng.normal(0.0, scenario.phase_jitter)
        states.append(initial_state(ag.pattern, phase, ag.phi))
    q = np.array([s.q for s in states])
    qdot = np.array([s.qdot for s in states])
    phase = np.array([s.phase for s in states])
    depth = scenario.latency_ticks + 1
    history = deque([(q, qdot, phase)] * depth, maxlen=depth)
    n_tau = 4 if scenario.coupling.space is Space.JOINT else 5
    n = scenario.n_ticks
    log = TrialLog(
        t=np.arange(n) * scenario.dt,
        phi=np.tile([ag.phi for ag in scenario.agents], (n, 1)),
        q=np.zeros((n, 2, 4)), qdot=np.zeros((n, 2, 4)),
        tau_des=np.zeros((n, 2, n_tau)), tau_app=np.zeros((n, 2, n_tau)),
        r=np.zeros((n, 2, 2)), phase=np.zeros((n, 2)),
        stance=np.zeros((n, 2), dtype=np.int8),
        space=scenario.coupling.space, dt=scenario.dt, label=scenario.label)
    return World(scenario=scenario, q=q, qdot=qdot, phase=phase, history=history,
                 prev_applied=np.zeros((2, 4)), rng=rng, log=log,
                 ideal_render=scenario.limits.ideal)


def _desired(world: World) -> np.ndarray:
    """Stages 1-2: desired torques ``(2, n_tau)`` from the delayed states."""
    sc = world.scenario
    cfg = sc.coupling
    q, qdot, phase = world.history[0]
    if sc.sensor_noise > 0:
        q = q + world.rng.normal(0.0, sc.sensor_noise, q.shape)
    if cfg.mode is Mode.NONE:
        return np.zeros((2, 4 if cfg.space is Space.JOINT else 5))
    if cfg.space is Space.JOINT:
        return np.array(_joint_pair(q[0], qdot[0], q[1], qdot[1], cfg))
    agents = sc.agents
    obs = [AgentState.unchecked(agents[i].phi, q[i], qdot[i], phase[i], None)
           for i in range(2)]
    stance = (_stance_for(agents[0], phase[0]), _stance_for(agents[1], phase[1]))
    return np.array(desired_torques(obs[0], obs[1], cfg, stance,
                                    agents[0].legs, agents[1].legs))


def step(world: World) -> World:
    """Advance the world by one tick (see module docstring for stage order)."""
    sc = world.scenario
    k = world.tick
    if k >= len(world.log):
        raise IndexError("trial already complete")
    agents = sc.agents

    # (1) delayed observation, (2) desired torques
    tau_des = _desired(world)

    # (3) rendering
    des = tau_des[:, -4:]
    if world.ideal_render:
        act = des
    else:
        act = _render(des, world.qdot, sc.limits, world.prev_applied, sc.dt)
        if sc.limits.lag_tau == 0:
            sat = np.any(np.abs(act) < np.abs(des) - 1e-12, axis=1)
            for i in range(2):
                if sat[i] and not world.saturated[i]:
                    world.log.events.append((k, USERS[i], "saturation", ""))
                world.saturated[i] = bool(sat[i])
    world.prev_applied = act
    applied = act if tau_des.shape[1] == 4 else np.hstack([np.zeros((2, 1)), act])

    # (4) log the tick's inputs
    log = world.log
    log.q[k] = world.q
    log.qdot[k] = world.qdot
    log.tau_des[k] = tau_des
    log.tau_app[k] = applied
    log.phase[k] = world.phase

    # (5) integrate, (6) buffers
    q_ref = np.empty((2, 4))
    qd_ref = np.empty((2, 4))
    for i in range(2):
        q_ref[i], qd_ref[i] = gait_reference(world.phase[i], agents[i].pattern)
    q, qdot = _joint_update(world.q, world.qdot, q_ref, qd_ref, act, *_stacked(world),
                            sc.dt, sc.joint_limits.lower, sc.joint_limits.upper)
    phase = np.empty(2)
    for i in range(2):
        kick = world.rng.normal(0.0, sc.phase_noise * math.sqrt(sc.dt)) \
            if sc.phase_noise > 0 else 0.0
        phase[i] = _phase_advance(world.phase[i], act[i], qd_ref[i], agents[i].pattern,
                                  agents[i].impedance, sc.dt, kick)
    if not (np.abs(qdot) <= ABORT_QDOT).all():
        i = int(np.argmax(np.nan_to_num(np.abs(qdot), nan=np.inf).max(axis=1)))
        world.tick = k + 1
        raise SimulationAborted(
            k, f"user {USERS[i]} joint speed {np.max(np.abs(qdot[i])):.1f} rad/s "
            f"exceeds {ABORT_QDOT} rad/s", finish(world).truncated(k + 1))
    world.q, world.qdot, world.phase = q, qdot, phase
    world.history.append((q, qdot, phase))
    world.tick = k + 1
    return world


def _stacked(world: World):
    cache = world.__dict__.get("_imp")
    if cache is None:
        imps = [ag.impedance for ag in world.scenario.agents]
        cache = tuple(np.array([getattr(m, name) for m in imps])
                      for name in ("kp", "kd", "viscous", "inertia"))
        world.__dict__["_imp"] = cache
    return cache


def finish(world: World) -> TrialLog:
    """Fill the stance and swing-ankle columns of the rows stepped so far."""
    n = world.tick
    log = world.log
    for i, ag in enumerate(world.scenario.agents):
        if ag.fixed_stance is not None:
            st = np.full(n, as_leg(ag.fixed_stance).index, dtype=np.int8)
        else:
            st = stance_index(log.phase[:n, i], ag.pattern)
        log.stance[:n, i] = st
        log.r[:n, i] = fk_batch(log.phi[:n, i], log.q[:n, i], 1 - st, ag.legs)
    return log


def run_trial(scenario: Scenario) -> TrialLog:
    """Run ``floor(duration / dt)`` ticks and return the complete log."""
    world = build_world(scenario)
    for _ in range(len(world.log)):
        step(world)
    return finish(world)
