"""Multi-agent discrete actor-critic with rules (MADACR) and the DDQN variant.

Critics are centralized (all observations and one-hot actions in), actors are
decentralized (own observation in, action logits out). Discrete choices are
relaxed with Gumbel-Softmax so that policy gradients reach the actor through a
straight-through estimator.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import OnOffThermostat
from .env import EnvState, ExogenousSlot, RepairedAction, SystemParams, settle_slot
from .errors import ConfigurationError, NotReadyError, TrainingDivergenceError
from .game import MarkovGame, RewardVector, repair_storage
from .nn import Adam, DenseNet, gumbel_softmax, one_hot_argmax, soft_update, softmax_backward
from .traces import DisturbanceModel, TraceSet

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    episodes: int = 30000
    T: int = 24
    gamma: float = 0.95
    batch_size: int = 256
    rho: float = 0.001
    train_every: int = 5  # episodes between update phases
    buffer_size: int = 120000
    # fraction of buffer_size that must be filled before updates start (1.0 = full buffer)
    warmup_fraction: float = 1.0
    lr_actor: float = 8e-5
    lr_critic: float = 8e-5
    hidden: tuple[int, ...] = (128, 128, 128)
    gs_temperature: float = 1.0
    day_order: str = "random"  # or "cycle"
    chi: float = 0.0

    def validate(self) -> None:
        if self.episodes < 0 or self.T < 1 or self.batch_size < 1 or self.buffer_size < 1:
            raise ConfigurationError("episodes, T, batch_size and buffer_size must be positive")
        if not 0 <= self.gamma <= 1:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if not 0 < self.rho <= 1:
            raise ConfigurationError("rho must lie in (0, 1]")
        if self.train_every < 1:
            raise ConfigurationError("train_every must be >= 1")
        if not 0 < self.warmup_fraction <= 1:
            raise ConfigurationError("warmup_fraction must lie in (0, 1]")
        if self.gs_temperature <= 0:
            raise ConfigurationError("gs_temperature must be positive")
        if self.day_order not in ("random", "cycle"):
            raise ConfigurationError("day_order must be 'random' or 'cycle'")

    @property
    def warmup(self) -> int:
        return max(self.batch_size, int(np.ceil(self.warmup_fraction * self.buffer_size)))


class ReplayBuffer:
    """FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, obs_dim: int, n_agents: int, reward_dim: int | None = None):
        self.capacity = capacity
        rdim = n_agents if reward_dim is None else reward_dim
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, n_agents), dtype=np.int64)
        self.rewards = np.zeros((capacity, rdim))
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs: np.ndarray, actions: Sequence[int], rewards: np.ndarray, next_obs: np.ndarray) -> None:
        k = self._next
        self.obs[k] = obs
        self.actions[k] = actions
        self.rewards[k] = rewards
        self.next_obs[k] = next_obs
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, K: int, rng: np.random.Generator, min_size: int | None = None) -> "Batch":
        need = max(K, min_size or 0)
        if self.size < need:
            raise NotReadyError(f"buffer holds {self.size} transitions, {need} required")
        idx = rng.choice(self.size, size=K, replace=False)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx])


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)


class Layout:
    """Offsets of each agent's block inside joint observation / action vectors."""

    def __init__(self, obs_sizes: Sequence[int], action_sizes: Sequence[int]):
        self.obs_sizes = tuple(obs_sizes)
        self.action_sizes = tuple(action_sizes)
        o = np.cumsum((0,) + self.obs_sizes)
        a = np.cumsum((0,) + self.action_sizes)
        self.obs_slices = [slice(o[k], o[k + 1]) for k in range(len(self.obs_sizes))]
        self.act_slices = [slice(a[k], a[k + 1]) for k in range(len(self.action_sizes))]
        self.obs_dim = int(o[-1])
        self.act_dim = int(a[-1])

    @property
    def n_agents(self) -> int:
        return len(self.obs_sizes)

    def one_hot(self, actions: np.ndarray) -> np.ndarray:
        actions = np.atleast_2d(actions)
        out = np.zeros((len(actions), self.act_dim))
        rows = np.arange(len(actions))
        for k, sl in enumerate(self.act_slices):
            out[rows, sl.start + actions[:, k]] = 1.0
        return out


@dataclass
class AgentBundle:
    actor: DenseNet
    critic: DenseNet
    target_actor: DenseNet
    target_critic: DenseNet
    actor_opt: Adam
    critic_opt: Adam

    @classmethod
    def create(cls, obs_size: int, n_actions: int, critic_in: int, hidden: Sequence[int],
               lr_actor: float, lr_critic: float, rng: np.random.Generator) -> "AgentBundle":
        actor = DenseNet((obs_size, *hidden, n_actions), rng)
        critic = DenseNet((critic_in, *hidden, 1), rng)
        return cls(actor=actor, critic=critic, target_actor=actor.copy(), target_critic=critic.copy(),
                   actor_opt=Adam(actor.parameters(), lr=lr_actor),
                   critic_opt=Adam(critic.parameters(), lr=lr_critic))


def make_agents(layout: Layout, hidden: Sequence[int], lr_actor: float, lr_critic: float,
                rng: np.random.Generator) -> list[AgentBundle]:
    critic_in = layout.obs_dim + layout.act_dim
    return [AgentBundle.create(o, a, critic_in, hidden, lr_actor, lr_critic, rng)
            for o, a in zip(layout.obs_sizes, layout.action_sizes)]


def critic_update(i: int, batch: Batch, agents: Sequence[AgentBundle], layout: Layout, gamma: float) -> float:
    """One regression step of critic ``i`` towards the bootstrapped target; returns the pre-step loss."""
    next_acts = np.concatenate(
        [one_hot_argmax(ag.target_actor.forward(batch.next_obs[:, sl], keep=False))
         for ag, sl in zip(agents, layout.obs_slices)], axis=1)
    q_next = agents[i].target_critic.forward(np.concatenate([batch.next_obs, next_acts], axis=1), keep=False)[:, 0]
    y = batch.rewards[:, i] + gamma * q_next

    critic = agents[i].critic
    q = critic.forward(np.concatenate([batch.obs, layout.one_hot(batch.actions)], axis=1))[:, 0]
    err = q - y
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"critic {i} loss is not finite")
    grads, _ = critic.backward((2.0 / len(batch)) * err[:, None])
    agents[i].critic_opt.step(critic.parameters(), grads)
    return loss


def actor_update(i: int, batch: Batch, agents: Sequence[AgentBundle], layout: Layout,
                 rng: np.random.Generator, temperature: float = 1.0) -> float:
    """One ascent step of actor ``i`` on the mean critic value; returns the pre-step objective.

    Agent ``i`` acts through a straight-through Gumbel-Softmax sample, the other
    agents through the greedy choice of their live actors.
    """
    blocks = []
    for j, (ag, sl) in enumerate(zip(agents, layout.obs_slices)):
        if j == i:
            logits = ag.actor.forward(batch.obs[:, sl])
            soft = gumbel_softmax(logits, temperature, rng)
            blocks.append(one_hot_argmax(soft))
        else:
            blocks.append(one_hot_argmax(ag.actor.forward(batch.obs[:, sl], keep=False)))
    critic = agents[i].critic
    q = critic.forward(np.concatenate([batch.obs, *blocks], axis=1))[:, 0]
    objective = float(np.mean(q))
    # descend on -mean(Q)
    _, dx = critic.backward(np.full((len(batch), 1), -1.0 / len(batch)))
    g_action = dx[:, layout.obs_dim + layout.act_slices[i].start: layout.obs_dim + layout.act_slices[i].stop]
    g_logits = softmax_backward(soft, g_action, temperature)
    actor = agents[i].actor
    grads, _ = actor.backward(g_logits)
    agents[i].actor_opt.step(actor.parameters(), grads)
    return objective


def greedy_indices(actors: Sequence[DenseNet], obs: Sequence[np.ndarray]) -> list[int]:
    return [int(np.argmax(a.forward(o, keep=False))) for a, o in zip(actors, obs)]


@dataclass
class EpisodeLog:
    episode: list[int] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    bess: list[float] = field(default_factory=list)
    hess: list[float] = field(default_factory=list)
    thermal_mean: list[float] = field(default_factory=list)

    def append(self, ep: int, r: np.ndarray) -> None:
        self.episode.append(ep)
        self.total.append(float(r.sum()))
        self.bess.append(float(r[0]))
        self.hess.append(float(r[-1]))
        self.thermal_mean.append(float(r[1:-1].mean()) if len(r) > 2 else 0.0)

    def __len__(self) -> int:
        return len(self.episode)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "total_reward", "reward_bess", "reward_hess", "reward_thermal_mean"])
            for row in zip(self.episode, self.total, self.bess, self.hess, self.thermal_mean):
                w.writerow([row[0], *(repr(x) for x in row[1:])])


def _day_starts(trace: TraceSet, cfg: TrainConfig) -> int:
    n_days = len(trace) // cfg.T
    if n_days < 1:
        raise ConfigurationError(f"training trace has {len(trace)} slots, an episode needs {cfg.T}")
    return n_days


def _disturbance(trace: TraceSet, k: int, model: DisturbanceModel, J: int, rng: np.random.Generator):
    if trace.disturbance is not None:
        return tuple(trace.disturbance[k])
    if model.chi == 0:
        return (0.0,) * J
    return tuple(rng.uniform(-model.chi, model.chi, size=J))


@dataclass
class TrainResult:
    agents: list[AgentBundle]
    log: EpisodeLog
    updates: int

    @property
    def actors(self) -> list[DenseNet]:
        return [a.actor for a in self.agents]


def train(game: MarkovGame, trace: TraceSet, cfg: TrainConfig, seed: int = 0) -> TrainResult:
    """Centralized training loop over ``cfg.episodes`` day-long episodes."""
    cfg.validate()
    params = game.params
    n_days = _day_starts(trace, cfg)
    root = np.random.default_rng(seed)
    init_rng, explore_rng, sample_rng, env_rng = (np.random.default_rng(s) for s in root.integers(0, 2**63, 4))

    layout = Layout(game.obs_sizes, game.action_sizes)
    agents = make_agents(layout, cfg.hidden, cfg.lr_actor, cfg.lr_critic, init_rng)
    buf = ReplayBuffer(cfg.buffer_size, layout.obs_dim, layout.n_agents)
    dist_model = DisturbanceModel(cfg.chi)
    ep_log = EpisodeLog()
    updates = 0
    n_total = len(trace)

    for ep in range(1, cfg.episodes + 1):
        day = int(explore_rng.integers(n_days)) if cfg.day_order == "random" else (ep - 1) % n_days
        state = EnvState.initial(params)
        k = day * cfg.T
        exo = trace.slot(k, _disturbance(trace, k, dist_model, params.J, env_rng))
        obs = game.observe(state, exo)
        ep_reward = np.zeros(layout.n_agents)
        for _ in range(cfg.T):
            idx = [int(np.argmax(gumbel_softmax(ag.actor.forward(o, keep=False), cfg.gs_temperature, explore_rng)))
                   for ag, o in zip(agents, obs)]
            action = game.repair(idx, state, exo)
            new_state, settlement = settle_slot(state, action, exo, params)
            r = game.rewards(settlement).as_array()
            k_next = (k + 1) % n_total
            next_exo = trace.slot(k_next, _disturbance(trace, k_next, dist_model, params.J, env_rng))
            next_obs = game.observe(new_state, next_exo)
            buf.push(np.concatenate(obs), idx, r, np.concatenate(next_obs))
            ep_reward += r
            state, exo, obs, k = new_state, next_exo, next_obs, k_next

            if len(buf) >= cfg.warmup and ep % cfg.train_every == 0:
                for i in range(layout.n_agents):
                    batch = buf.sample(cfg.batch_size, sample_rng)
                    critic_update(i, batch, agents, layout, cfg.gamma)
                    actor_update(i, batch, agents, layout, explore_rng, cfg.gs_temperature)
                for ag in agents:
                    soft_update(ag.target_critic, ag.critic, cfg.rho)
                    soft_update(ag.target_actor, ag.actor, cfg.rho)
                updates += 1
        ep_log.append(ep, ep_reward)
        if ep % 100 == 0:
            log.info("episode %d total reward %.3f", ep, ep_log.total[-1])
    return TrainResult(agents=agents, log=ep_log, updates=updates)


class MADACRPolicy:
    """Decentralized greedy execution of trained actors followed by action repair."""

    name = "proposed"

    def __init__(self, game: MarkovGame, actors: Sequence[DenseNet]):
        if len(actors) != game.n_agents:
            raise ConfigurationError(f"{len(actors)} actors for {game.n_agents} agents")
        for a, o, n in zip(actors, game.obs_sizes, game.action_sizes):
            if a.sizes[0] != o or a.sizes[-1] != n:
                raise ConfigurationError(f"actor shape {a.sizes} does not fit observation {o} / actions {n}")
        self.game = game
        self.actors = list(actors)

    def reset(self) -> None:
        pass

    def act(self, state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        idx = greedy_indices(self.actors, self.game.observe(state, exo))
        return self.game.repair(idx, state, exo)


@dataclass
class ExecutionStep:
    action: RepairedAction
    settlement: object
    reward: RewardVector
    state: EnvState


def execute(game: MarkovGame, actors: Sequence[DenseNet], trace: TraceSet,
            state: EnvState | None = None) -> list[ExecutionStep]:
    """Roll trained actors over every slot of ``trace`` without learning."""
    policy = MADACRPolicy(game, actors)
    state = state or EnvState.initial(game.params)
    out = []
    for k in range(len(trace)):
        exo = trace.slot(k)
        action = policy.act(state, exo)
        state, s = settle_slot(state, action, exo, game.params)
        out.append(ExecutionStep(action=action, settlement=s, reward=game.rewards(s), state=state))
    return out


# --- double DQN over joint battery x hydrogen choices -------------------------------------------

@dataclass
class DDQNConfig:
    episodes: int = 3000
    T: int = 24
    gamma: float = 0.95
    batch_size: int = 64
    rho: float = 0.01
    train_every: int = 1
    buffer_size: int = 20000
    warmup_fraction: float = 0.05
    lr: float = 5e-4
    hidden: tuple[int, ...] = (64, 64)
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    day_order: str = "random"
    chi: float = 0.0

    @property
    def warmup(self) -> int:
        return max(self.batch_size, int(np.ceil(self.warmup_fraction * self.buffer_size)))


class DDQNPolicy:
    """Greedy joint battery/hydrogen choice from a Q-network; ON/OFF cooling."""

    name = "b3"

    def __init__(self, game: MarkovGame, qnet: DenseNet):
        self.game = game
        self.qnet = qnet
        self.n_hess = len(game.grids.hess_levels)
        self.thermostat = OnOffThermostat(game.params)

    def reset(self) -> None:
        self.thermostat.reset()

    def joint_index(self, state: EnvState, exo: ExogenousSlot) -> int:
        obs = self.game.observe(state, exo)[-1]
        return int(np.argmax(self.qnet.forward(obs, keep=False)))

    def action_for(self, joint: int, state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        return ddqn_action(self.game, joint, self.thermostat.step(state), state, exo)

    def act(self, state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        return self.action_for(self.joint_index(state, exo), state, exo)


def ddqn_action(game: MarkovGame, joint: int, P_sp: Sequence[float], state: EnvState,
                exo: ExogenousSlot) -> RepairedAction:
    n_hess = len(game.grids.hess_levels)
    a_b = float(game.grids.bess_levels[joint // n_hess])
    a_h = float(game.grids.hess_levels[joint % n_hess])
    P_bc, P_bd, P_el, P_fc = repair_storage(a_b, a_h, state, exo, game.params)
    return RepairedAction(P_bc=P_bc, P_bd=P_bd, P_el=P_el, P_fc=P_fc, P_sp=tuple(P_sp))


def train_ddqn(game: MarkovGame, trace: TraceSet, cfg: DDQNConfig, seed: int = 0) -> tuple[DDQNPolicy, EpisodeLog]:
    """Double DQN: online net picks the next action, target net scores it."""
    params = game.params
    n_days = len(trace) // cfg.T
    if n_days < 1:
        raise ConfigurationError(f"training trace has {len(trace)} slots, an episode needs {cfg.T}")
    root = np.random.default_rng(seed)
    init_rng, explore_rng, sample_rng, env_rng = (np.random.default_rng(s) for s in root.integers(0, 2**63, 4))
    n_actions = len(game.grids.bess_levels) * len(game.grids.hess_levels)
    obs_dim = game.obs_sizes[-1]
    qnet = DenseNet((obs_dim, *cfg.hidden, n_actions), init_rng)
    target = qnet.copy()
    opt = Adam(qnet.parameters(), lr=cfg.lr)
    buf = ReplayBuffer(cfg.buffer_size, obs_dim, 1, reward_dim=1)
    policy = DDQNPolicy(game, qnet)
    dist_model = DisturbanceModel(cfg.chi)
    ep_log = EpisodeLog()
    n_total = len(trace)
    decay_eps = max(1, int(cfg.eps_decay_fraction * cfg.episodes))

    for ep in range(1, cfg.episodes + 1):
        eps = cfg.eps_end + (cfg.eps_start - cfg.eps_end) * max(0.0, 1.0 - (ep - 1) / decay_eps)
        day = int(explore_rng.integers(n_days)) if cfg.day_order == "random" else (ep - 1) % n_days
        state = EnvState.initial(params)
        policy.reset()
        k = day * cfg.T
        exo = trace.slot(k, _disturbance(trace, k, dist_model, params.J, env_rng))
        total = 0.0
        for _ in range(cfg.T):
            obs = game.observe(state, exo)[-1]
            if explore_rng.random() < eps:
                joint = int(explore_rng.integers(n_actions))
            else:
                joint = int(np.argmax(qnet.forward(obs, keep=False)))
            action = policy.action_for(joint, state, exo)
            state_next, s = settle_slot(state, action, exo, params)
            r = -s.total_cost
            k_next = (k + 1) % n_total
            next_exo = trace.slot(k_next, _disturbance(trace, k_next, dist_model, params.J, env_rng))
            buf.push(obs, [joint], np.array([r]), game.observe(state_next, next_exo)[-1])
            total += r
            state, exo, k = state_next, next_exo, k_next

            if len(buf) >= cfg.warmup and ep % cfg.train_every == 0:
                b = buf.sample(cfg.batch_size, sample_rng)
                a_star = np.argmax(qnet.forward(b.next_obs, keep=False), axis=1)
                q_next = target.forward(b.next_obs, keep=False)[np.arange(len(b)), a_star]
                y = b.rewards[:, 0] + cfg.gamma * q_next
                q_all = qnet.forward(b.obs)
                rows = np.arange(len(b))
                err = q_all[rows, b.actions[:, 0]] - y
                g = np.zeros_like(q_all)
                g[rows, b.actions[:, 0]] = 2.0 * err / len(b)
                grads, _ = qnet.backward(g)
                opt.step(qnet.parameters(), grads)
                soft_update(target, qnet, cfg.rho)
        ep_log.append(ep, np.array([total]))
    return policy, ep_log
