"""Shared toy problems for the learner tests.

A two-state MDP is embedded in the continuous squashed-action interface: the
sign of the scalar action picks the discrete MDP action (its "bucket"), so
value iteration on the explicit tables gives exact expected values for the
continuous critic at the bucket-representative actions +-0.5. A stub episode
driver with the grasp-environment interface lets curriculum wiring be tested
at micro scale without physics.
"""

import numpy as np

from pingrip import sac
from pingrip.mdp import EpisodeResult, StepResult
from pingrip.nets import Adam, MlpCritic, MlpPolicy
from pingrip.oracle import ToyMDP, value_iteration
from pingrip.tape import Tensor

# Bucket 0 = negative actions, bucket 1 = positive; taking bucket b moves to
# state b from anywhere. Optimal behavior alternates: state 0 -> bucket 1,
# state 1 -> bucket 0.
TRANSITIONS = np.zeros((2, 2, 2))
TRANSITIONS[:, 0, 0] = 1.0
TRANSITIONS[:, 1, 1] = 1.0
REWARDS = np.array([[0.0, 1.0], [2.0, -1.0]])
GAMMA = 0.8

# All four (state, representative action) pairs, flattened row-major so the
# channel-0 critic output reshapes to the (2 states, 2 actions) Q table.
REP_STATES = np.array([[-1.0], [-1.0], [1.0], [1.0]])
REP_ACTIONS = np.array([[-0.5], [0.5], [-0.5], [0.5]])

_ATANH_HALF = float(np.arctanh(0.5))


def q_star():
    return value_iteration(ToyMDP(TRANSITIONS, REWARDS, GAMMA))


class ScriptedOptimalPolicy:
    """Fixed optimal-bucket policy at the representative actions.

    MDP state 0 (encoded -1) -> squashed action +0.5; state 1 -> -0.5.
    Owns no parameters, so critic updates regress toward the plain
    dynamic-programming targets with no actor coupling.
    """

    state_dim = 1
    act_dim = 1
    dtype = np.float64

    def __init__(self, log_std=-12.0):
        self.log_std = log_std

    def forward(self, state):
        s = state.data if isinstance(state, Tensor) else np.asarray(state)
        s = np.asarray(s, dtype=np.float64).reshape(-1, 1)
        mean = np.where(s < 0.0, _ATANH_HALF, -_ATANH_HALF)
        return Tensor(mean), Tensor(np.full_like(mean, self.log_std))

    def named_params(self):
        return []

    def trainable_params(self):
        return []


def fill_bucket_buffer(rng, n=1024, lo=0.4, hi=0.6, penalty=0.0):
    """Random-behavior transitions of the bucket MDP, grasp channel only.

    Action magnitudes are uniform on [lo, hi] around the representatives.
    ``penalty`` subtracts penalty*(|a|-0.5)^2 from the reward; it vanishes at
    the representatives (so the value-iteration oracle is unchanged there)
    but makes the optimal continuous action interior, which keeps a learned
    policy off the tanh saturation rails.
    """
    buf = sac.ReplayBuffer(n, 1, 1, dtype=np.float64)
    s_idx = rng.integers(0, 2, n)
    a = rng.uniform(lo, hi, n) * rng.choice([-1.0, 1.0], n)
    a_idx = (a >= 0).astype(int)
    r = REWARDS[s_idx, a_idx] - penalty * (np.abs(a) - 0.5) ** 2
    for i in range(n):
        buf.push([2.0 * s_idx[i] - 1.0], [a[i]], r[i], 0.0,
                 [2.0 * a_idx[i] - 1.0], False)
    return buf


def train_critic_to_fixed_point(seed=7):
    """Critic-only training under the scripted optimal policy.

    Returns (channel-0 Q at the representatives as a (2,2) table, the full
    (4,2) representative output, the value-iteration table). Minibatch
    warmup, then full-batch refinement until the probed values go
    stationary, then a small-step polish: the result is the TD fixed point
    within optimizer resolution.
    """
    rng = np.random.default_rng(seed)
    buf = fill_bucket_buffer(rng)
    cri = MlpCritic(rng, 1, 1, hidden=(64, 64), dtype=np.float64)
    tgt = MlpCritic(rng, 1, 1, hidden=(64, 64), dtype=np.float64)
    cfg = sac.SacConfig(gamma=GAMMA, tau=0.05, alpha_init=1e-6,
                        auto_alpha=False, reward_scale=1.0, batch_size=256,
                        lr=1e-3)
    agent = sac.SacAgent(ScriptedOptimalPolicy(), cri, tgt, cfg, rng)
    full = np.arange(len(buf))
    for _ in range(1500):
        agent.critic_update(buf.sample(cfg.batch_size, rng))
    agent.critic_opt = Adam(cri.trainable_params(), lr=1e-4)
    prev = cri.forward(REP_STATES, REP_ACTIONS).data[:, 0].copy()
    for _ in range(24):
        for _ in range(250):
            agent.critic_update(buf.gather(full))
        cur = cri.forward(REP_STATES, REP_ACTIONS).data[:, 0].copy()
        delta = float(np.max(np.abs(cur - prev)))
        prev = cur
        if delta < 3e-5:
            break
    agent.critic_opt = Adam(cri.trainable_params(), lr=1e-5)
    for _ in range(800):
        agent.critic_update(buf.gather(full))
    rep = cri.forward(REP_STATES, REP_ACTIONS).data
    return rep[:, 0].reshape(2, 2), rep, q_star()


def run_bandit(seed=11, iters=2000):
    """Full agent on the 1-D quadratic bandit; returns the final squashed
    policy mean. Terminal transitions (d=1), so targets are pure rewards and
    Q(a) = -a^2; the analytic optimum is 0."""
    rng = np.random.default_rng(seed)
    n = 1024
    a = rng.uniform(-1.0, 1.0, n)
    buf = sac.ReplayBuffer(n, 1, 1, dtype=np.float64)
    for i in range(n):
        buf.push([0.0], [a[i]], -a[i] ** 2, 0.0, [0.0], True)
    pol = MlpPolicy(rng, 1, 1, hidden=(32, 32), dtype=np.float64)
    cri = MlpCritic(rng, 1, 1, hidden=(32, 32), dtype=np.float64)
    tgt = MlpCritic(rng, 1, 1, hidden=(32, 32), dtype=np.float64)
    cfg = sac.SacConfig(gamma=0.9, reward_scale=1.0, batch_size=128)
    agent = sac.SacAgent(pol, cri, tgt, cfg, rng)
    for _ in range(iters):
        b = buf.sample(cfg.batch_size, rng)
        agent.critic_update(b)
        agent.actor_update(b)
    mean, _ = pol.forward(np.array([0.0]))
    return float(np.tanh(mean.data[0, 0]))


def run_full_loop(seed=7):
    """Actor and critic trained together on the penalty variant.

    Returns (squashed policy means for states 0 and 1, channel-0 critic
    table at the representatives, value-iteration table).
    """
    rng = np.random.default_rng(seed)
    buf = fill_bucket_buffer(rng, n=2048, lo=0.1, hi=0.99, penalty=2.0)
    pol = MlpPolicy(rng, 1, 1, hidden=(64, 64), dtype=np.float64)
    cri = MlpCritic(rng, 1, 1, hidden=(64, 64), dtype=np.float64)
    tgt = MlpCritic(rng, 1, 1, hidden=(64, 64), dtype=np.float64)
    cfg = sac.SacConfig(gamma=GAMMA, tau=0.05, alpha_init=1e-6,
                        auto_alpha=False, reward_scale=1.0, batch_size=256,
                        lr=1e-3)
    agent = sac.SacAgent(pol, cri, tgt, cfg, rng)
    for lr, iters in [(1e-3, 2000), (1e-4, 1000)]:
        agent.critic_opt = Adam(cri.trainable_params(), lr=lr)
        agent.policy_opt = Adam(pol.trainable_params(), lr=lr)
        for _ in range(iters):
            b = buf.sample(cfg.batch_size, rng)
            agent.critic_update(b)
            agent.actor_update(b)
    means = [float(np.tanh(pol.forward(np.array([s]))[0].data[0, 0]))
             for s in (-1.0, 1.0)]
    rep = cri.forward(REP_STATES, REP_ACTIONS).data
    return means, rep[:, 0].reshape(2, 2), q_star()


class StubEnv:
    """Deterministic miniature episode driver with the grasp-env interface.

    Dynamics are arbitrary but fixed functions of the executed actions;
    episodes end after ``ep_len`` decisions with a terminal grasp reward.
    """

    act_dim = 3

    def __init__(self, chi1_mode="free", encoder=None, state_dim=4, ep_len=3,
                 r_grasp_terminal=40.0, r_step=-2.0):
        self.chi1_mode = chi1_mode
        self.encoder = encoder
        self._state_dim = state_dim
        self.ep_len = ep_len
        self.r_grasp_terminal = r_grasp_terminal
        self.r_step = r_step
        self.result = None
        self.episodes = 0
        self._s = None
        self._t = 0

    @property
    def state_dim(self):
        return self._state_dim

    def reset(self, mesh, pose, cloud=None, mass=0.05):
        self._t = 0
        self.result = None
        self._s = np.full(self._state_dim, float(mass))
        return self._s.copy()

    def step(self, raw):
        a = np.tanh(np.asarray(raw, dtype=np.float64))
        self._t += 1
        self._s = np.roll(self._s, 1)
        self._s[:self.act_dim] += 0.1 * a
        done = self._t >= self.ep_len
        r_g = self.r_grasp_terminal if done else 0.0
        if done:
            self.episodes += 1
            self.result = EpisodeResult(
                g=1, q1=0.25, t_grasp=0.5 * self._t, t_lift=1.0,
                mode="GwL" if self.chi1_mode == "force1" else "GtL",
                steps=self._t, travel_cm=1.0, r_grasp=r_g,
                r_effici=[self.r_step] * self._t)
        return StepResult(state=self._s.copy(), action=a, r_grasp=r_g,
                          r_effici=self.r_step, done=done, info={})
