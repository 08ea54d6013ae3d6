"""DQN training loop for flowsheet synthesis, agnostic to the Q-approximator."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import flowsheet as fs
from . import hdasim, qnet
from .flowsheet import Reason, ScreenResult

OPT_TOL = 1e-9


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.01
    gamma: float = 0.5
    batch_size: int = 32
    buffer_size: int = 20000
    target_update: int = 200  # gradient steps between target syncs
    epsilon0: float = 0.08
    epsilon_decay: float = 0.01
    episodes: int = 1000
    horizon: int = 8
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0 <= self.epsilon0 <= 1:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("need 1 <= batch_size <= buffer_size")
        if self.target_update < 1 or self.episodes < 0 or self.horizon < 0:
            raise ValueError("target_update must be >= 1; episodes and horizon >= 0")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest transition is overwritten first."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim), dtype=np.int8)
        self.next_states = np.zeros((capacity, state_dim), dtype=np.int8)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.size = 0
        self._head = 0

    def __len__(self):
        return self.size

    def push(self, state, action: int, reward: float, next_state) -> None:
        i = self._head
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int):
        if n > self.size:
            raise ValueError(f"cannot sample {n} from {self.size} stored transitions")
        idx = rng.choice(self.size, size=n, replace=False)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self._head if self.size == self.capacity else 0
        order = [(start + k) % self.capacity for k in range(self.size)]
        return [
            Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]), self.next_states[i].copy())
            for i in order
        ]


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest index.

    Always draws one uniform number so the stream advances identically
    whether or not the agent explores.
    """
    q = np.asarray(q_values)
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def epsilon_at(episode: int, hp: Hyperparams) -> float:
    """Exploration rate for a zero-based episode index."""
    return hp.epsilon0 * (1.0 - hp.epsilon_decay) ** episode


def bellman_targets(rewards, next_states, target: qnet.QApproximator, gamma: float) -> np.ndarray:
    r = np.asarray(rewards, dtype=float)
    return r + gamma * qnet.predict_batch(target, next_states).max(axis=1)


@dataclass
class StepRecord:
    t: int
    action: int
    name: str
    screen: str
    reward: float
    signature: str
    simulated: bool
    spec_met: bool
    loss: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class RunMetrics:
    opt_sf: int = 0
    uniq_sf: int = 0
    feas_sf: int = 0
    first_opt_episode: int | None = None
    runtime_s: float = 0.0
    param_count: int = 0


@dataclass
class Agent:
    """Everything one training run mutates: networks, optimizer, buffer, rng and counters."""

    scenario: fs.Scenario
    model: qnet.QApproximator
    hp: Hyperparams
    rng: np.random.Generator
    calibration: hdasim.Calibration = hdasim.DEFAULT
    target: qnet.QApproximator = None
    optimizer: qnet.OptimizerState = None
    buffer: ReplayBuffer = None
    train_steps: int = 0
    sync_count: int = 0
    optimum: float = field(init=False)

    def __post_init__(self):
        if self.target is None:
            self.target = self.model.copy()
        if self.optimizer is None:
            self.optimizer = qnet.make_optimizer(self.model, self.hp.learning_rate, self.hp.optimizer)
        if self.buffer is None:
            self.buffer = ReplayBuffer(self.hp.buffer_size, self.scenario.input_dim)
        self.optimum = best_reward(self.scenario, self.calibration)

    def _learn(self) -> float | None:
        hp = self.hp
        if len(self.buffer) < hp.batch_size:
            return None
        s, a, r, s2 = self.buffer.sample(self.rng, hp.batch_size)
        y = bellman_targets(r, s2, self.target, hp.gamma)
        loss = qnet.train_step(self.model, self.optimizer, s, a, y)
        self.train_steps += 1
        if self.train_steps % hp.target_update == 0:
            qnet.sync_target(self.model, self.target)
            self.sync_count += 1
        return loss

    def run_episode(self, episode: int, policy=None) -> list[StepRecord]:
        """Play one episode of ``hp.horizon`` steps from a blank flowsheet.

        ``episode`` is zero-based and sets the exploration rate.  ``policy``,
        if given, maps ``(t, state)`` to an action and replaces epsilon-greedy
        selection (used for scripted checks).
        """
        sc, cal = self.scenario, self.calibration
        eps = epsilon_at(episode, self.hp)
        state = fs.reset(sc)
        log = []
        for t in range(self.hp.horizon):
            s_vec = fs.encode(state)
            if policy is None:
                action = select_action(qnet.predict(self.model, s_vec), eps, self.rng)
            else:
                action = policy(t, state)
            nxt, valid = fs.apply_action(state, action)
            scr = fs.screen(nxt) if valid else ScreenResult(False, Reason.INVALID_MANIPULATION)
            sim = hdasim.evaluate(nxt, cal) if scr.passed else None
            r = hdasim.reward(scr, sim, cal)
            self.buffer.push(s_vec, action, r, fs.encode(nxt))
            loss = self._learn() if scr.passed else None
            log.append(
                StepRecord(
                    t + 1,
                    action,
                    sc.action_name(action),
                    scr.reason.value,
                    r,
                    nxt.signature,
                    sim is not None,
                    bool(sim and sim.spec_met),
                    loss,
                )
            )
            state = nxt
        return log


def best_reward(sc: fs.Scenario, cal: hdasim.Calibration = hdasim.DEFAULT) -> float:
    return max(hdasim.evaluate(s, cal).reward for s in fs.enumerate_screened(sc))


@dataclass(frozen=True)
class TrainConfig:
    scenario: int = 1
    agent: str = "classical"
    seed: int = 1
    qubits: int | None = None
    layers: int | None = None
    hp: Hyperparams = Hyperparams()
    calibration: hdasim.Calibration = hdasim.DEFAULT


def build_agent(cfg: TrainConfig) -> Agent:
    sc = fs.scenario(cfg.scenario, cfg.hp.horizon)
    rng = np.random.default_rng(cfg.seed)
    model = qnet.make(cfg.agent, sc.input_dim, sc.action_count, rng, cfg.qubits, cfg.layers)
    return Agent(sc, model, cfg.hp, rng, cfg.calibration)


def train(cfg: TrainConfig, on_episode=None) -> RunMetrics:
    """Run ``hp.episodes`` episodes and tally the discovery metrics.

    ``on_episode(episode_number, epsilon, records, optimal)`` is called after
    every episode, with a one-based episode number.
    """
    start = time.perf_counter()
    agent = build_agent(cfg)
    metrics = RunMetrics(param_count=agent.model.n_params)
    simulated, feasible = set(), set()
    for ep in range(cfg.hp.episodes):
        records = agent.run_episode(ep)
        optimal = False
        for rec in records:
            if not rec.simulated:
                continue
            simulated.add(rec.signature)
            if rec.spec_met:
                feasible.add(rec.signature)
            if rec.reward >= agent.optimum - OPT_TOL:
                optimal = True
        if optimal:
            metrics.opt_sf += 1
            if metrics.first_opt_episode is None:
                metrics.first_opt_episode = ep + 1
        if on_episode is not None:
            on_episode(ep + 1, epsilon_at(ep, cfg.hp), records, optimal)
    metrics.uniq_sf = len(simulated)
    metrics.feas_sf = len(feasible)
    metrics.runtime_s = time.perf_counter() - start
    return metrics
