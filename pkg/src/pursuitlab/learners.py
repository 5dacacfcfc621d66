"""The four algorithm implementations behind one uniform contract.

Each learner exposes act / record and runs its own update when its gate is
met (rollout full for PPO and A2C, every recorded step past the warmup for
DQN and DDQN). Observations are normalized by the learner's private running
scaler at interaction time and stored normalized, so update-time
recomputation sees exactly what the policy saw when acting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .buffers import (
    ReplayBuffer,
    RolloutBuffer,
    Transition,
    pack_transitions,
    unpack_transitions,
)
from .nets import (
    AdamState,
    Mlp,
    RunningScaler,
    adam_step,
    categorical_entropy,
    categorical_sample,
    clip_global_norm,
    grad_entropy_wrt_logits,
    grad_log_prob_wrt_logits,
    log_softmax,
)

TRAIN = "train"
EVAL = "eval"


@dataclass
class GaeConfig:
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")


def compute_gae(rewards, values, bootstrap_value, dones, truncs,
                cfg: GaeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and returns for one stored stream.

    The stream may span episode boundaries. A terminal step contributes no
    successor value; a truncated step bootstraps from the next stored value.
    Both cut the advantage accumulation. The bootstrap_value stands in for
    the state after the last stored step.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    tr = np.asarray(truncs, dtype=np.float64)
    if not (r.shape == v.shape == d.shape == tr.shape) or r.ndim != 1:
        raise ValueError("rewards, values, dones, truncs must be equal-length 1-D")
    n = r.shape[0]
    next_v = np.empty(n)
    next_v[:-1] = v[1:]
    next_v[-1] = bootstrap_value
    delta = r + cfg.gamma * next_v * (1.0 - d) - v
    adv = np.empty(n)
    acc = 0.0
    for t in range(n - 1, -1, -1):
        acc = delta[t] + cfg.gamma * cfg.lam * (1.0 - d[t]) * (1.0 - tr[t]) * acc
        adv[t] = acc
    return adv, adv + v


@dataclass
class EpsilonSchedule:
    """Linear exploration decay plus the warmup gates for Q-learners."""

    initial: float = 0.7
    final: float = 0.04
    decay_horizon: int = 600_000
    random_timesteps: int = 1_024
    learning_starts: int = 16_000


def epsilon_at(sched: EpsilonSchedule, step: int) -> float:
    if step < 0:
        raise ValueError("step must be non-negative")
    if step >= sched.decay_horizon:
        return sched.final
    frac = step / sched.decay_horizon
    return sched.initial + frac * (sched.final - sched.initial)


@dataclass
class PpoConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_size: int = 512
    minibatch_size: int = 64
    epochs: int = 3
    clip_ratio: float = 0.2
    entropy_coef: float = 0.015  # held constant over training
    value_coef: float = 0.5
    grad_clip: float = 0.4
    normalize_advantages: bool = True


@dataclass
class A2cConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    rollout_size: int = 512
    minibatch_size: int = 64
    entropy_coef: float = 0.015
    value_coef: float = 0.5
    grad_clip: float = 0.4


@dataclass
class DqnConfig:
    lr: float = 5e-5
    gamma: float = 0.99
    buffer_size: int = 10_000
    batch_size: int = 64
    target_sync_every: int = 1_000
    double: bool = False
    schedule: EpsilonSchedule = field(default_factory=EpsilonSchedule)


@dataclass
class ActResult:
    action: int
    log_prob: float = 0.0
    value: float = 0.0


def q_targets(rewards, next_obs, dones, online: Mlp, target: Mlp, gamma: float,
              double: bool) -> np.ndarray:
    """TD targets from the target net; the double variant takes the target
    net's value at the online net's argmax. Only terminal steps stop the
    bootstrap, so truncated steps keep it."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValueError("empty batch")
    d = np.asarray(dones, dtype=np.float64)
    q_next = target.forward(next_obs)
    if double:
        a_star = np.argmax(online.forward(next_obs), axis=1)
        best = q_next[np.arange(q_next.shape[0]), a_star]
    else:
        best = q_next.max(axis=1)
    return r + gamma * (1.0 - d) * best


def _net_entries(prefix: str, net: Mlp) -> list[tuple[str, np.ndarray]]:
    return [(f"{prefix}/p{j}", p) for j, p in enumerate(net.parameters())]


def _adam_entries(prefix: str, state: AdamState) -> list[tuple[str, np.ndarray]]:
    out = [(f"{prefix}/m{j}", m) for j, m in enumerate(state.m)]
    out += [(f"{prefix}/v{j}", v) for j, v in enumerate(state.v)]
    return out


def _load_into(dest: np.ndarray, arrays: dict[str, np.ndarray], name: str) -> None:
    src = arrays[name]
    if src.shape != dest.shape:
        raise ValueError(f"{name}: expected shape {dest.shape}, got {src.shape}")
    dest[...] = src


def _load_net(prefix: str, net: Mlp, arrays: dict[str, np.ndarray]) -> None:
    for j, p in enumerate(net.parameters()):
        _load_into(p, arrays, f"{prefix}/p{j}")


def _load_adam(prefix: str, state: AdamState, arrays: dict[str, np.ndarray]) -> None:
    for j, m in enumerate(state.m):
        _load_into(m, arrays, f"{prefix}/m{j}")
    for j, v in enumerate(state.v):
        _load_into(v, arrays, f"{prefix}/v{j}")


class _LearnerBase:
    """Shared observation plumbing and checkpoint surface."""

    kind = "?"

    def __init__(self, obs_dim: int, n_actions: int):
        self.obs_dim = int(obs_dim)
        self.n_actions = int(n_actions)
        self.scaler = RunningScaler(obs_dim)
        self.own_step = 0
        self._updates_done = 0

    def _normalized(self, obs, update_stats: bool) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise ValueError(f"expected observation of length {self.obs_dim}")
        if update_stats:
            self.scaler.update(obs)
        return self.scaler.normalize(obs)

    def _store_form(self, t: Transition) -> Transition:
        # obs was already folded into the scaler by act; next_obs gets folded
        # on the next act, so both normalize under the same statistics here.
        return Transition(
            obs=self.scaler.normalize(np.asarray(t.obs, dtype=np.float64)),
            action=int(t.action),
            reward=float(t.reward),
            next_obs=self.scaler.normalize(np.asarray(t.next_obs, dtype=np.float64)),
            done=bool(t.done),
            truncated=bool(t.truncated),
            log_prob=float(t.log_prob),
            value=float(t.value),
        )

    def _check_update_health(self, loss: float, nets: list[Mlp]) -> None:
        if not math.isfinite(loss):
            raise RuntimeError(f"{self.kind} update produced non-finite loss")
        self._updates_done += 1
        if self._updates_done % 128 == 0:
            for net in nets:
                for p in net.parameters():
                    if not np.isfinite(p).all():
                        raise RuntimeError(f"{self.kind} parameters went non-finite")

    def _scaler_entries(self) -> list[tuple[str, np.ndarray]]:
        return [("scaler/mean", self.scaler.mean), ("scaler/var", self.scaler.var)]

    def _load_scaler(self, arrays, counters) -> None:
        self.scaler.mean = arrays["scaler/mean"].copy()
        self.scaler.var = arrays["scaler/var"].copy()
        self.scaler.count = int(counters["scaler_count"])

    def _memory_entries(self, transitions) -> list[tuple[str, np.ndarray]]:
        cols = pack_transitions(transitions, self.obs_dim)
        return [(f"memory/{k}", v) for k, v in cols.items()]

    def _memory_columns(self, arrays) -> dict[str, np.ndarray]:
        keys = pack_transitions([], self.obs_dim).keys()
        return {k: arrays[f"memory/{k}"] for k in keys}


class _ActorCriticLearner(_LearnerBase):
    """Machinery shared by PPO and A2C: separate policy and value MLPs,
    a 512-slot rollout buffer, GAE, and joint gradient-norm clipping."""

    def __init__(self, obs_dim, n_actions, hidden_sizes, cfg, rng: np.random.Generator):
        super().__init__(obs_dim, n_actions)
        self.cfg = cfg
        self.gae = GaeConfig(cfg.gamma, cfg.gae_lambda)
        self.policy = Mlp([obs_dim, *hidden_sizes, n_actions], rng)
        self.value = Mlp([obs_dim, *hidden_sizes, 1], rng)
        self.policy_adam = AdamState(self.policy.parameters(), cfg.lr)
        self.value_adam = AdamState(self.value.parameters(), cfg.lr)
        self.memory = RolloutBuffer(cfg.rollout_size)

    def act(self, obs, mode: str, rng: np.random.Generator) -> ActResult:
        x = self._normalized(obs, update_stats=(mode == TRAIN))
        logits = self.policy.forward(x)
        if mode == EVAL:
            return ActResult(int(np.argmax(logits)))
        action = categorical_sample(logits, rng)
        log_prob = float(log_softmax(logits)[action])
        value = float(self.value.forward(x)[0])
        return ActResult(action, log_prob, value)

    def record(self, t: Transition, rng: np.random.Generator):
        full = self.memory.record(self._store_form(t))
        self.own_step += 1
        if full:
            return self.update(rng)
        return None

    def update(self, rng: np.random.Generator) -> dict:
        ts = self.memory.transitions()
        obs = np.stack([t.obs for t in ts])
        actions = np.array([t.action for t in ts], dtype=np.int64)
        rewards = np.array([t.reward for t in ts])
        dones = np.array([float(t.done) for t in ts])
        truncs = np.array([float(t.truncated) for t in ts])
        old_log_probs = np.array([t.log_prob for t in ts])
        values = np.array([t.value for t in ts])
        bootstrap = float(self.value.forward(ts[-1].next_obs)[0])
        advantages, returns = compute_gae(rewards, values, bootstrap, dones, truncs, self.gae)
        diag = self._optimize(obs, actions, old_log_probs, advantages, returns, rng)
        self.memory.clear()
        return diag

    def _joint_step(self, pol_grads, val_grads) -> None:
        norm = clip_global_norm(pol_grads + val_grads, self.cfg.grad_clip)
        if not math.isfinite(norm):
            raise RuntimeError(f"{self.kind} gradients went non-finite")
        adam_step(self.policy.parameters(), pol_grads, self.policy_adam)
        adam_step(self.value.parameters(), val_grads, self.value_adam)

    def _value_term(self, obs, returns):
        v, cache = self.value.forward_cached(obs)
        err = v[:, 0] - returns
        n = obs.shape[0]
        loss = self.cfg.value_coef * float((err * err).mean())
        upstream = (self.cfg.value_coef * 2.0 * err / n)[:, None]
        return loss, self.value.backward(cache, upstream)

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        entries = _net_entries("policy", self.policy) + _net_entries("value", self.value)
        entries += _adam_entries("policy_adam", self.policy_adam)
        entries += _adam_entries("value_adam", self.value_adam)
        entries += self._scaler_entries()
        entries += self._memory_entries(self.memory.transitions())
        return entries

    def state_counters(self) -> dict[str, int]:
        return {
            "own_step": self.own_step,
            "updates_done": self._updates_done,
            "policy_adam_step": self.policy_adam.step,
            "value_adam_step": self.value_adam.step,
            "scaler_count": int(self.scaler.count),
            "memory_size": len(self.memory),
        }

    def load_state(self, arrays, counters) -> None:
        _load_net("policy", self.policy, arrays)
        _load_net("value", self.value, arrays)
        _load_adam("policy_adam", self.policy_adam, arrays)
        _load_adam("value_adam", self.value_adam, arrays)
        self.policy_adam.step = int(counters["policy_adam_step"])
        self.value_adam.step = int(counters["value_adam_step"])
        self._load_scaler(arrays, counters)
        stored = unpack_transitions(self._memory_columns(arrays))
        if len(stored) != int(counters["memory_size"]):
            raise ValueError("memory size counter disagrees with stored columns")
        self.memory.restore(stored)
        self.own_step = int(counters["own_step"])
        self._updates_done = int(counters["updates_done"])


class PpoLearner(_ActorCriticLearner):
    kind = "PPO"

    def __init__(self, obs_dim, n_actions, hidden_sizes=(256, 256),
                 cfg: PpoConfig | None = None, rng=None):
        super().__init__(obs_dim, n_actions, hidden_sizes, cfg or PpoConfig(), rng)

    def loss_and_grads(self, obs, actions, old_log_probs, advantages, returns):
        """Clipped-surrogate loss on one minibatch, with analytic gradients
        for both nets. Advantages are used as given."""
        n = obs.shape[0]
        rows = np.arange(n)
        logits, cache = self.policy.forward_cached(obs)
        lp_all = log_softmax(logits)
        lp = lp_all[rows, actions]
        ratio = np.exp(lp - old_log_probs)
        lo, hi = 1.0 - self.cfg.clip_ratio, 1.0 + self.cfg.clip_ratio
        unclipped = ratio * advantages
        clipped = np.clip(ratio, lo, hi) * advantages
        surrogate = np.minimum(unclipped, clipped)
        entropy = categorical_entropy(logits)
        policy_loss = -float(surrogate.mean())
        entropy_loss = -self.cfg.entropy_coef * float(entropy.mean())
        # d min/d ratio is the advantage when the unclipped branch is active
        # (inside the clip window both branches coincide), zero otherwise.
        dsur_dlp = np.where(unclipped <= clipped, ratio * advantages, 0.0)
        dlogits = -(dsur_dlp[:, None] * grad_log_prob_wrt_logits(logits, actions)) / n
        dlogits -= self.cfg.entropy_coef * grad_entropy_wrt_logits(logits) / n
        pol_grads = self.policy.backward(cache, dlogits)
        value_loss, val_grads = self._value_term(obs, returns)
        total = policy_loss + value_loss + entropy_loss
        return total, pol_grads, val_grads, {
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": float(entropy.mean()),
        }

    def normalize_minibatch_advantages(self, adv: np.ndarray) -> np.ndarray:
        mean = adv.mean()
        std = adv.std()
        if std > 1e-8:
            return (adv - mean) / std
        return adv - mean

    def _optimize(self, obs, actions, old_log_probs, advantages, returns, rng):
        last = {}
        for _ in range(self.cfg.epochs):
            for idx in self.memory.minibatch_indices(self.cfg.minibatch_size, rng):
                adv = advantages[idx]
                if self.cfg.normalize_advantages:
                    adv = self.normalize_minibatch_advantages(adv)
                loss, pol_grads, val_grads, parts = self.loss_and_grads(
                    obs[idx], actions[idx], old_log_probs[idx], adv, returns[idx])
                self._joint_step(pol_grads, val_grads)
                last = {"loss": loss, **parts}
        self._check_update_health(last["loss"], [self.policy, self.value])
        return last


class A2cLearner(_ActorCriticLearner):
    kind = "A2C"

    def __init__(self, obs_dim, n_actions, hidden_sizes=(256, 256),
                 cfg: A2cConfig | None = None, rng=None):
        super().__init__(obs_dim, n_actions, hidden_sizes, cfg or A2cConfig(), rng)

    def loss_and_grads(self, obs, actions, advantages, returns):
        """Plain advantage policy-gradient loss on one minibatch."""
        n = obs.shape[0]
        rows = np.arange(n)
        logits, cache = self.policy.forward_cached(obs)
        lp = log_softmax(logits)[rows, actions]
        entropy = categorical_entropy(logits)
        policy_loss = -float((lp * advantages).mean())
        entropy_loss = -self.cfg.entropy_coef * float(entropy.mean())
        dlogits = -(advantages[:, None] * grad_log_prob_wrt_logits(logits, actions)) / n
        dlogits -= self.cfg.entropy_coef * grad_entropy_wrt_logits(logits) / n
        pol_grads = self.policy.backward(cache, dlogits)
        value_loss, val_grads = self._value_term(obs, returns)
        total = policy_loss + value_loss + entropy_loss
        return total, pol_grads, val_grads, {
            "policy_loss": policy_loss,
            "value_loss": value_loss,
            "entropy": float(entropy.mean()),
        }

    def _optimize(self, obs, actions, old_log_probs, advantages, returns, rng):
        last = {}
        for idx in self.memory.minibatch_indices(self.cfg.minibatch_size, rng):
            loss, pol_grads, val_grads, parts = self.loss_and_grads(
                obs[idx], actions[idx], advantages[idx], returns[idx])
            self._joint_step(pol_grads, val_grads)
            last = {"loss": loss, **parts}
        self._check_update_health(last["loss"], [self.policy, self.value])
        return last


class DqnLearner(_LearnerBase):
    """DQN with a target network; double=True gives DDQN target decoupling."""

    def __init__(self, obs_dim, n_actions, hidden_sizes=(256, 256),
                 cfg: DqnConfig | None = None, rng=None):
        super().__init__(obs_dim, n_actions)
        self.cfg = cfg or DqnConfig()
        self.kind = "DDQN" if self.cfg.double else "DQN"
        self.online = Mlp([obs_dim, *hidden_sizes, n_actions], rng)
        self.target = self.online.clone()
        self.adam = AdamState(self.online.parameters(), self.cfg.lr)
        self.memory = ReplayBuffer(self.cfg.buffer_size)

    def act(self, obs, mode: str, rng: np.random.Generator) -> ActResult:
        x = self._normalized(obs, update_stats=(mode == TRAIN))
        if mode == EVAL:
            return ActResult(int(np.argmax(self.online.forward(x))))
        sched = self.cfg.schedule
        if self.own_step < sched.random_timesteps:
            return ActResult(int(rng.integers(self.n_actions)))
        if rng.random() < epsilon_at(sched, self.own_step):
            return ActResult(int(rng.integers(self.n_actions)))
        return ActResult(int(np.argmax(self.online.forward(x))))

    def record(self, t: Transition, rng: np.random.Generator):
        self.memory.insert(self._store_form(t))
        self.own_step += 1
        if (self.own_step >= self.cfg.schedule.learning_starts
                and len(self.memory) >= self.cfg.batch_size):
            return self.update(rng)
        return None

    def loss_and_grads(self, obs, actions, targets):
        """Squared TD error against fixed targets, with online-net gradients."""
        n = obs.shape[0]
        rows = np.arange(n)
        q_all, cache = self.online.forward_cached(obs)
        err = q_all[rows, actions] - targets
        loss = float((err * err).mean())
        dq = np.zeros_like(q_all)
        dq[rows, actions] = 2.0 * err / n
        return loss, self.online.backward(cache, dq)

    def update(self, rng: np.random.Generator) -> dict:
        batch = self.memory.sample(self.cfg.batch_size, rng)
        obs = np.stack([t.obs for t in batch])
        actions = np.array([t.action for t in batch], dtype=np.int64)
        rewards = np.array([t.reward for t in batch])
        next_obs = np.stack([t.next_obs for t in batch])
        dones = np.array([float(t.done) for t in batch])
        y = q_targets(rewards, next_obs, dones, self.online, self.target,
                      self.cfg.gamma, self.cfg.double)
        loss, grads = self.loss_and_grads(obs, actions, y)
        adam_step(self.online.parameters(), grads, self.adam)
        if self.own_step % self.cfg.target_sync_every == 0:
            self.target.copy_from(self.online)
        self._check_update_health(loss, [self.online])
        return {"loss": loss}

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        entries = _net_entries("online", self.online) + _net_entries("target", self.target)
        entries += _adam_entries("adam", self.adam)
        entries += self._scaler_entries()
        # replay is saved in slot order so restored sampling indexes match
        entries += self._memory_entries(self.memory.storage_order())
        return entries

    def state_counters(self) -> dict[str, int]:
        return {
            "own_step": self.own_step,
            "updates_done": self._updates_done,
            "adam_step": self.adam.step,
            "scaler_count": int(self.scaler.count),
            "memory_size": len(self.memory),
            "memory_inserted": self.memory.inserted,
        }

    def load_state(self, arrays, counters) -> None:
        _load_net("online", self.online, arrays)
        _load_net("target", self.target, arrays)
        _load_adam("adam", self.adam, arrays)
        self.adam.step = int(counters["adam_step"])
        self._load_scaler(arrays, counters)
        stored = unpack_transitions(self._memory_columns(arrays))
        if len(stored) != int(counters["memory_size"]):
            raise ValueError("memory size counter disagrees with stored columns")
        self.memory.restore(stored, int(counters["memory_inserted"]))
        self.own_step = int(counters["own_step"])
        self._updates_done = int(counters["updates_done"])


class FrozenPolicy:
    """Greedy snapshot of a trained policy, detached from learning state."""

    def __init__(self, net: Mlp, scaler: RunningScaler, kind: str):
        self.net = net
        self.scaler = scaler
        self.kind = kind

    @classmethod
    def from_learner(cls, learner: _LearnerBase) -> "FrozenPolicy":
        net = learner.online if isinstance(learner, DqnLearner) else learner.policy
        snap = RunningScaler(learner.obs_dim)
        snap.mean = learner.scaler.mean.copy()
        snap.var = learner.scaler.var.copy()
        snap.count = learner.scaler.count
        return cls(net.clone(), snap, learner.kind)

    def act(self, obs) -> int:
        x = self.scaler.normalize(np.asarray(obs, dtype=np.float64))
        return int(np.argmax(self.net.forward(x)))


def make_learner(kind: str, obs_dim: int, n_actions: int, hidden_sizes=(256, 256),
                 cfg=None, rng=None) -> _LearnerBase:
    if kind == "PPO":
        return PpoLearner(obs_dim, n_actions, hidden_sizes, cfg, rng)
    if kind == "A2C":
        return A2cLearner(obs_dim, n_actions, hidden_sizes, cfg, rng)
    if kind in ("DQN", "DDQN"):
        want_double = kind == "DDQN"
        if cfg is None:
            cfg = DqnConfig(double=want_double)
        elif cfg.double != want_double:
            raise ValueError(f"cfg.double={cfg.double} conflicts with kind {kind!r}")
        return DqnLearner(obs_dim, n_actions, hidden_sizes, cfg, rng)
    raise ValueError(f"unknown learner kind {kind!r}")
