"""Soft actor-critic learner with two reward channels and a staged curriculum.

The critic outputs a (grasp, efficiency) value pair; each channel regresses
its own TD target built from the shared next-state action sample and entropy
term. Training runs in up to three parts: a pre-training phase whose policy
only adjusts in the air (its experience fills a fixed injection buffer), a
ground-only stage, and a final stage with the mode switch unlocked that
samples from both the carried-over self-exploration buffer and the frozen
injected buffer in proportion to their capacities.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import tape
from .nets import Adam, copy_params, polyak_update, sample_action, sample_batch
from .tape import Tape, Tensor, mul, square, sub, tanh, tmean, tsum


# ---------------------------------------------------------------------------
# Replay storage
# ---------------------------------------------------------------------------
@dataclass
class Batch:
    """Column arrays of sampled transitions."""

    s: np.ndarray
    a: np.ndarray
    r_grasp: np.ndarray
    r_effici: np.ndarray
    s2: np.ndarray
    d: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    @staticmethod
    def merge(parts: list["Batch"]) -> "Batch":
        if len(parts) == 1:
            return parts[0]
        return Batch(*(np.concatenate([getattr(p, f) for p in parts])
                       for f in ("s", "a", "r_grasp", "r_effici", "s2", "d")))


class ReplayBuffer:
    """FIFO transition store; ring-backed, grown lazily up to capacity."""

    def __init__(self, capacity: int, state_dim: int, act_dim: int,
                 dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.act_dim = int(act_dim)
        self.dtype = dtype
        self._alloc = 0
        self._n = 0
        self._next = 0

    def __len__(self) -> int:
        return self._n

    def _grow(self) -> None:
        new = min(self.capacity, max(256, self._alloc * 2))
        cols = {"s": self.state_dim, "a": self.act_dim, "s2": self.state_dim}
        for name in ("s", "a", "r_grasp", "r_effici", "s2", "d"):
            shape = (new, cols[name]) if name in cols else (new,)
            arr = np.zeros(shape, dtype=self.dtype)
            if self._alloc:
                # no wrap can have happened below capacity, so plain copy
                arr[:self._n] = getattr(self, "_" + name)[:self._n]
            setattr(self, "_" + name, arr)
        self._alloc = new

    def push(self, s, a, r_grasp, r_effici, s2, done) -> None:
        if self._n == self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self._next
        self._s[i] = s
        self._a[i] = a
        self._r_grasp[i] = r_grasp
        self._r_effici[i] = r_effici
        self._s2[i] = s2
        self._d[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._n = min(self._n + 1, self.capacity)

    def _physical(self, logical: np.ndarray) -> np.ndarray:
        oldest = (self._next - self._n) % self.capacity
        return (oldest + logical) % self.capacity

    def gather(self, logical: np.ndarray) -> Batch:
        """Rows by logical index, 0 = oldest surviving transition."""
        idx = self._physical(np.asarray(logical))
        return Batch(self._s[idx], self._a[idx], self._r_grasp[idx],
                     self._r_effici[idx], self._s2[idx], self._d[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._n == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.gather(rng.integers(0, self._n, size=batch_size))

    def digest(self) -> str:
        """Content hash over live rows in insertion order."""
        h = hashlib.sha256()
        h.update(np.int64(self._n).tobytes())
        if self._n:
            idx = self._physical(np.arange(self._n))
            for name in ("s", "a", "r_grasp", "r_effici", "s2", "d"):
                h.update(np.ascontiguousarray(
                    getattr(self, "_" + name)[idx]).tobytes())
        return h.hexdigest()

    def export_rows(self) -> dict:
        """Live rows in oldest-first order, for checkpointing."""
        idx = self._physical(np.arange(self._n))
        return {name: np.ascontiguousarray(getattr(self, "_" + name)[idx])
                for name in ("s", "a", "r_grasp", "r_effici", "s2", "d")}

    @classmethod
    def from_rows(cls, capacity: int, state_dim: int, act_dim: int,
                  rows: dict, dtype=np.float32) -> "ReplayBuffer":
        """Rebuild a buffer from exported rows; eviction order, sampling,
        and digests continue exactly as in the original."""
        buf = cls(capacity, state_dim, act_dim, dtype)
        n = len(rows["s"])
        if n > capacity:
            raise ValueError(f"{n} rows exceed capacity {capacity}")
        if n:
            cols = {"s": buf.state_dim, "a": buf.act_dim, "s2": buf.state_dim}
            for name in ("s", "a", "r_grasp", "r_effici", "s2", "d"):
                shape = ((capacity, cols[name]) if name in cols
                         else (capacity,))
                arr = np.zeros(shape, dtype=dtype)
                arr[:n] = rows[name]
                setattr(buf, "_" + name, arr)
            buf._alloc = capacity
            buf._n = n
            buf._next = n % capacity
        return buf


def mixed_sample(buffers, batch_size: int, rng: np.random.Generator) -> Batch:
    """Draw each element from a buffer with probability proportional to its
    capacity, then uniformly within it; empty-buffer draws are redrawn from
    the remaining buffers."""
    bufs = list(buffers)
    if not bufs:
        raise ValueError("no buffers given")
    caps = np.array([b.capacity for b in bufs], dtype=np.float64)
    p = caps / caps.sum()
    choice = (rng.choice(len(bufs), size=batch_size, p=p)
              if len(bufs) > 1 else np.zeros(batch_size, dtype=np.int64))
    nonempty = np.array([i for i, b in enumerate(bufs) if len(b)])
    if nonempty.size == 0:
        raise ValueError("all replay buffers are empty")
    if nonempty.size < len(bufs):
        bad = ~np.isin(choice, nonempty)
        if bad.any():
            p2 = p[nonempty] / p[nonempty].sum()
            choice[bad] = rng.choice(nonempty, size=int(bad.sum()), p=p2)
    parts = [bufs[i].sample(int((choice == i).sum()), rng)
             for i in np.unique(choice)]
    return Batch.merge(parts)


# ---------------------------------------------------------------------------
# Learner
# ---------------------------------------------------------------------------
@dataclass
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 64
    alpha_init: float = 0.1
    auto_alpha: bool = True
    target_entropy: float | None = None   # default -act_dim, set at agent init
    reward_scale: float = 1e-3            # applied to both channels before TD
    self_capacity: int = 50_000
    pre_capacity: int = 5_000
    start_after: int = 1_000              # env steps before updates begin
    updates_per_step: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.alpha_init <= 0.0:
            raise ValueError("alpha must be positive")
        if self.updates_per_step < 1:
            raise ValueError("updates_per_step must be at least 1")


class SacAgent:
    """Update rules over a policy, an online critic, and a target critic."""

    def __init__(self, policy, critic, target, cfg: SacConfig,
                 rng: np.random.Generator):
        self.policy = policy
        self.critic = critic
        self.target = target
        copy_params(critic, target)
        self.cfg = cfg
        self.rng = rng
        self.policy_opt = Adam(policy.trainable_params(), lr=cfg.lr)
        self.critic_opt = Adam(critic.trainable_params(), lr=cfg.lr)
        self.target_entropy = (cfg.target_entropy if cfg.target_entropy
                               is not None else -float(policy.act_dim))
        self.log_alpha = math.log(cfg.alpha_init)
        self._am = 0.0
        self._av = 0.0
        self._at = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    def _alpha_step(self, grad: float) -> None:
        b1, b2, eps = 0.9, 0.999, 1e-8
        self._at += 1
        self._am = b1 * self._am + (1.0 - b1) * grad
        self._av = b2 * self._av + (1.0 - b2) * grad * grad
        mhat = self._am / (1.0 - b1 ** self._at)
        vhat = self._av / (1.0 - b2 ** self._at)
        self.log_alpha -= self.cfg.lr * mhat / (math.sqrt(vhat) + eps)

    def critic_update(self, batch: Batch) -> float:
        """One TD regression step; targets use a fresh next-state sample and
        the shared entropy correction in both channels."""
        cfg = self.cfg
        noise = self.rng.standard_normal((len(batch), self.policy.act_dim))
        raw2, logp2 = sample_batch(self.policy, batch.s2, noise)
        a2 = np.tanh(raw2.data)
        q2 = self.target.forward(batch.s2, a2).data
        backup = cfg.gamma * (1.0 - batch.d.astype(np.float64))
        ent = self.alpha * logp2.data.astype(np.float64)
        y_g = cfg.reward_scale * batch.r_grasp + backup * (q2[:, 0] - ent)
        y_e = cfg.reward_scale * batch.r_effici + backup * (q2[:, 1] - ent)
        y = np.stack([y_g, y_e], axis=1).astype(self.critic.dtype)
        with Tape() as t:
            q = self.critic.forward(batch.s, batch.a)
            loss = tmean(square(sub(q, Tensor(y))))
        grads = t.gradient(loss, self.critic.trainable_params())
        self.critic_opt.step(grads)
        polyak_update(self.critic, self.target, cfg.tau)
        return float(loss.data)

    def actor_update(self, batch: Batch) -> float:
        """Ascend Q_g + Q_e - alpha*log pi; critics get no optimizer step."""
        noise = self.rng.standard_normal((len(batch), self.policy.act_dim))
        alpha = self.alpha
        with Tape() as t:
            raw, logp = sample_batch(self.policy, batch.s, noise)
            q = self.critic.forward(batch.s, tanh(raw))
            loss = tmean(sub(mul(logp, alpha), tsum(q, axis=1)))
        grads = t.gradient(loss, self.policy.trainable_params())
        self.policy_opt.step(grads)
        if self.cfg.auto_alpha:
            self._alpha_step(-(float(np.mean(logp.data))
                               + self.target_entropy))
        return float(loss.data)

    def export_state(self) -> dict:
        """Optimizer moments and temperature state, for checkpointing."""
        def opt(o):
            return {"m": [m.copy() for m in o.m],
                    "v": [v.copy() for v in o.v], "t": o.t}
        return {"log_alpha": self.log_alpha, "alpha_m": self._am,
                "alpha_v": self._av, "alpha_t": self._at,
                "policy_opt": opt(self.policy_opt),
                "critic_opt": opt(self.critic_opt)}

    def load_state(self, state: dict) -> None:
        """Restore what ``export_state`` captured; net params are separate."""
        self.log_alpha = float(state["log_alpha"])
        self._am = float(state["alpha_m"])
        self._av = float(state["alpha_v"])
        self._at = int(state["alpha_t"])
        for o, saved in ((self.policy_opt, state["policy_opt"]),
                         (self.critic_opt, state["critic_opt"])):
            o.t = int(saved["t"])
            for dst, src in zip(o.m, saved["m"]):
                dst[...] = src
            for dst, src in zip(o.v, saved["v"]):
                dst[...] = src


# ---------------------------------------------------------------------------
# Curriculum
# ---------------------------------------------------------------------------
@dataclass
class StageSchedule:
    """Env-step budgets for the curriculum parts.

    ``curriculum=False`` collapses training to a single stage of
    ``stage1_steps + stage2_steps`` with the switch free throughout;
    ``use_pre=False`` skips pre-training and the injected buffer.
    """

    pre_steps: int = 50_000
    stage1_steps: int = 200_000
    stage2_steps: int = 200_000
    curriculum: bool = True
    use_pre: bool = True


def _episode_row(stage: str, step: int, res) -> dict:
    return {"kind": "episode", "stage": stage, "step": step,
            "success": int(res.g == 1), "mode": res.mode, "q1": res.q1,
            "t_grasp": res.t_grasp, "t_lift": res.t_lift,
            "steps": res.steps, "travel_cm": res.travel_cm,
            "r_grasp": res.r_grasp, "r_effici_sum": float(sum(res.r_effici))}


def _train_stage(agent: SacAgent, envs: list, tasks, self_buf: ReplayBuffer,
                 pre_buf: ReplayBuffer | None, n_steps: int,
                 rng: np.random.Generator, log: list, log_fn, stage: str,
                 state_filter=None, log_every: int = 200) -> None:
    cfg = agent.cfg
    row = {"kind": "stage", "stage": stage, "steps": n_steps,
           "self_size": len(self_buf),
           "pre_size": len(pre_buf) if pre_buf is not None else 0,
           "pre_buffer": pre_buf is not None}
    log.append(row)
    if log_fn:
        log_fn(row)
    states = [None] * len(envs)
    buffers = [self_buf] + ([pre_buf] if pre_buf is not None else [])
    for t in range(n_steps):
        k = t % len(envs)
        env = envs[k]
        if states[k] is None:
            task = tasks[rng.integers(len(tasks))]
            s = env.reset(task.mesh, task.pose, cloud=task.cloud,
                          mass=task.mass)
            states[k] = s if state_filter is None else state_filter(s)
        raw, _ = sample_action(agent.policy, states[k], rng)
        out = env.step(raw)
        s2 = out.state if state_filter is None else state_filter(out.state)
        self_buf.push(states[k], out.action, out.r_grasp, out.r_effici, s2,
                      out.done)
        if out.done:
            row = _episode_row(stage, t, env.result)
            log.append(row)
            if log_fn:
                log_fn(row)
            states[k] = None
        else:
            states[k] = s2
        if len(self_buf) >= cfg.start_after:
            for _ in range(cfg.updates_per_step):
                batch = mixed_sample(buffers, cfg.batch_size, rng)
                closs = agent.critic_update(batch)
                aloss = agent.actor_update(batch)
                if not (np.isfinite(closs) and np.isfinite(aloss)):
                    raise RuntimeError(
                        f"training diverged at stage {stage} step {t}: "
                        f"critic loss {closs}, actor loss {aloss}")
            if t % log_every == 0:
                row = {"kind": "update", "stage": stage, "step": t,
                       "critic_loss": closs, "actor_loss": aloss,
                       "alpha": agent.alpha, "self_size": len(self_buf),
                       "pre_size": len(pre_buf) if pre_buf else 0}
                log.append(row)
                if log_fn:
                    log_fn(row)


def fill_buffer(env, policy, tasks, buf: ReplayBuffer,
                rng: np.random.Generator, state_filter=None) -> None:
    """Roll the stochastic policy until the buffer is exactly full."""
    state = None
    while len(buf) < buf.capacity:
        if state is None:
            task = tasks[rng.integers(len(tasks))]
            s = env.reset(task.mesh, task.pose, cloud=task.cloud,
                          mass=task.mass)
            state = s if state_filter is None else state_filter(s)
        raw, _ = sample_action(policy, state, rng)
        out = env.step(raw)
        s2 = out.state if state_filter is None else state_filter(out.state)
        buf.push(state, out.action, out.r_grasp, out.r_effici, s2, out.done)
        state = None if out.done else s2


def run_curriculum(make_env, make_policy, make_critic, tasks, cfg: SacConfig,
                   sched: StageSchedule, rng: np.random.Generator,
                   log_fn=None, n_envs: int = 1, state_filter=None,
                   chi1_final: str = "free", stage_hook=None, resume=None):
    """Train through the configured stages; returns (policy, log rows).

    ``make_env(chi1_mode, encoder)`` builds an episode driver (the mdp
    environment protocol); ``make_policy(rng)`` / ``make_critic(rng)`` build
    fresh networks. ``tasks`` is a sequence of episode setups (EnvTask
    protocol). A single ``rng`` drives initialization, task choice, action
    noise, and batch sampling, so one seed fixes the whole run.

    ``stage_hook(name, snap)`` fires as each stage completes; ``snap`` holds
    the live training state (completed stage names, injection buffer, agent,
    self buffer). A caller that serialized a snapshot together with the rng
    state can rebuild those objects and pass them back as ``resume`` to skip
    the completed stages and continue bit-exactly.
    """
    if not tasks:
        raise ValueError("no tasks to train on")
    log: list[dict] = []
    done = tuple(resume["completed"]) if resume else ()
    completed = list(done)
    pre_buf = agent = self_buf = None

    def fire(name):
        completed.append(name)
        if stage_hook:
            stage_hook(name, {"completed": tuple(completed),
                              "pre_buf": pre_buf, "agent": agent,
                              "self_buf": self_buf})

    if sched.use_pre and sched.pre_steps > 0:
        if "pre" in done:
            pre_buf = resume["pre_buf"]
        else:
            pre_policy = make_policy(rng)
            state_dim, act_dim = pre_policy.state_dim, pre_policy.act_dim
            pre_critic, pre_target = make_critic(rng), make_critic(rng)
            pre_agent = SacAgent(pre_policy, pre_critic, pre_target, cfg, rng)
            encoder = getattr(pre_policy, "encode_cloud", None)
            envs = [make_env("force1", encoder) for _ in range(n_envs)]
            pre_self = ReplayBuffer(cfg.self_capacity, state_dim, act_dim)
            _train_stage(pre_agent, envs, tasks, pre_self, None,
                         sched.pre_steps, rng, log, log_fn, "pre",
                         state_filter)
            pre_buf = ReplayBuffer(cfg.pre_capacity, state_dim, act_dim)
            fill_buffer(make_env("force1", encoder), pre_policy, tasks,
                        pre_buf, rng, state_filter)
            fire("pre")

    if resume is not None and resume.get("agent") is not None:
        agent = resume["agent"]
        policy = agent.policy
        self_buf = resume["self_buf"]
    else:
        policy = make_policy(rng)
        critic, target = make_critic(rng), make_critic(rng)
        agent = SacAgent(policy, critic, target, cfg, rng)
        self_buf = ReplayBuffer(cfg.self_capacity, policy.state_dim,
                                policy.act_dim)
    encoder = getattr(policy, "encode_cloud", None)
    if sched.curriculum:
        if "stage1" not in done:
            envs = [make_env("force0", encoder) for _ in range(n_envs)]
            _train_stage(agent, envs, tasks, self_buf, None,
                         sched.stage1_steps, rng, log, log_fn, "stage1",
                         state_filter)
            fire("stage1")
        if "stage2" not in done:
            envs = [make_env(chi1_final, encoder) for _ in range(n_envs)]
            _train_stage(agent, envs, tasks, self_buf, pre_buf,
                         sched.stage2_steps, rng, log, log_fn, "stage2",
                         state_filter)
            fire("stage2")
    elif "single" not in done:
        envs = [make_env(chi1_final, encoder) for _ in range(n_envs)]
        _train_stage(agent, envs, tasks, self_buf, pre_buf,
                     sched.stage1_steps + sched.stage2_steps, rng, log,
                     log_fn, "single", state_filter)
        fire("single")
    return policy, log


# ---------------------------------------------------------------------------
# Scripted policies and evaluation
# ---------------------------------------------------------------------------
_RAW_HI = 10.0   # tanh(10) ~ 1: decodes to full extension / fired switch


def _pins_from_layout(layout: dict) -> int:
    # f block length is total_pins * (15 + total_pins); invert the quadratic
    n_f = layout["f"].stop - layout["f"].start
    return (math.isqrt(4 * n_f + 225) - 15) // 2


def baseline_policy(kind: str, layout: dict | None = None,
                    rng: np.random.Generator | None = None, policy_fn=None):
    """Scripted action sources: ``passive`` extends everything then stops,
    ``random`` draws uniform targets and switches, ``gtl_only``/``gwl_only``
    wrap a learned policy with the mode switch pinned."""
    if kind == "passive":
        if layout is None:
            raise ValueError("passive baseline needs the state layout")
        g = layout["g"]
        step_hot = slice(g.start + 17, g.stop)
        n_pins = _pins_from_layout(layout)

        def fn(state):
            raw = np.full(n_pins + 2, _RAW_HI)
            raw[-2] = -_RAW_HI
            first = np.argmax(state[step_hot]) == 0
            raw[-1] = -_RAW_HI if first else _RAW_HI
            return raw
        return fn
    if kind == "random":
        if layout is None or rng is None:
            raise ValueError("random baseline needs a layout and an rng")
        n_pins = _pins_from_layout(layout)

        def fn(state):
            u = rng.random(n_pins + 2)
            return np.arctanh(np.clip(2.0 * u - 1.0, -0.999999, 0.999999))
        return fn
    if kind in ("gtl_only", "gwl_only"):
        if policy_fn is None:
            raise ValueError(f"{kind} wraps a learned policy")
        lock = -_RAW_HI if kind == "gtl_only" else _RAW_HI

        def fn(state):
            raw = np.array(policy_fn(state), dtype=np.float64)
            raw[-2] = lock
            return raw
        return fn
    raise ValueError(f"unknown baseline {kind!r}")


def evaluate_policy(env, act_fn, tasks, episodes_per_task: int = 1,
                    state_filter=None) -> list[dict]:
    """Roll episodes over the task list; one result row per episode."""
    rows = []
    for task in tasks:
        for ep in range(episodes_per_task):
            s = env.reset(task.mesh, task.pose, cloud=task.cloud,
                          mass=task.mass)
            if state_filter is not None:
                s = state_filter(s)
            while True:
                out = env.step(act_fn(s))
                if out.done:
                    break
                s = (out.state if state_filter is None
                     else state_filter(out.state))
            res = env.result
            rows.append({"object": task.name, "episode": ep,
                         "success": int(res.g == 1), "q1": res.q1,
                         "t_grasp": res.t_grasp, "t_lift": res.t_lift,
                         "t_total": res.t_grasp + res.t_lift,
                         "mode": res.mode, "steps": res.steps,
                         "travel_cm": res.travel_cm, "r_grasp": res.r_grasp})
    return rows
