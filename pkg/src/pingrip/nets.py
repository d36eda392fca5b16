"""Policy and critic networks over the grasp state, plus optimizer and checkpoints.

The state vector is consumed in three slices: the cached 512-wide object
signature (already encoded once per episode), the task/gripper block, and the
per-pin feature rows. Pin rows go through a shared per-row MLP and a max-pool,
so the networks are permutation-invariant over pins (pin identity travels
inside each row as a one-hot). The policy head outputs a diagonal Gaussian
over raw actions; squashing happens at action decode.

Checkpoint byte layout (little-endian), documented for external loaders:
  magic b"PGNT" | u32 version=1 | u32 meta_len | meta (UTF-8 JSON)
  | u32 n_tensors | per tensor: u16 name_len | name | u8 dtype (0=f32, 1=f64)
  | u8 ndim | ndim * u32 shape | raw C-order data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import tape
from .tape import Tensor, add, clamp, concat, exp, matmul, relu, reshape, tmax


class Dense:
    """Affine layer; uniform +-1/sqrt(fan_in) init."""

    def __init__(self, rng, n_in: int, n_out: int, dtype=np.float32):
        s = 1.0 / np.sqrt(n_in)
        self.w = Tensor(rng.uniform(-s, s, (n_in, n_out)).astype(dtype))
        self.b = Tensor(rng.uniform(-s, s, (n_out,)).astype(dtype))

    def __call__(self, x):
        return add(matmul(x, self.w), self.b)

    def named_params(self, prefix):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]


class MLP:
    """Dense stack with relu between layers; final layer optionally linear."""

    def __init__(self, rng, sizes, dtype=np.float32, final_linear=True):
        self.layers = [Dense(rng, a, b, dtype)
                       for a, b in zip(sizes[:-1], sizes[1:])]
        self.final_linear = final_linear

    def __call__(self, x):
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < last or not self.final_linear:
                x = relu(x)
        return x

    def named_params(self, prefix):
        out = []
        for i, layer in enumerate(self.layers):
            out.extend(layer.named_params(f"{prefix}.{i}"))
        return out


def _state_layout(feat_dim, g_dim, total_pins, pin_feat):
    o_dim = 3 + 4 + feat_dim
    return {
        "of": slice(7, 7 + feat_dim),
        "g": slice(o_dim, o_dim + g_dim),
        "f": slice(o_dim + g_dim, o_dim + g_dim + total_pins * pin_feat),
        "state_dim": o_dim + g_dim + total_pins * pin_feat,
    }


class _EncoderCore:
    """Shared structure of both networks: pin-set + g encoders and a trunk."""

    def __init__(self, rng, total_pins, pin_feat, g_dim, feat_dim, extra_in,
                 dtype, pin_hidden=(128, 256), g_hidden=(64,),
                 trunk_hidden=(512, 256)):
        self.total_pins = total_pins
        self.pin_feat = pin_feat
        self.g_dim = g_dim
        self.feat_dim = feat_dim
        self.dtype = dtype
        self.pin_out = pin_hidden[-1]
        self.layout = _state_layout(feat_dim, g_dim, total_pins, pin_feat)
        self.pin_enc = MLP(rng, [pin_feat, *pin_hidden], dtype)
        self.g_enc = MLP(rng, [g_dim, *g_hidden], dtype, final_linear=False)
        self.trunk = MLP(rng, [feat_dim + pin_hidden[-1] + g_hidden[-1]
                               + extra_in, *trunk_hidden],
                         dtype, final_linear=False)
        self.trunk_out = trunk_hidden[-1]

    @property
    def state_dim(self) -> int:
        return self.layout["state_dim"]

    def _split(self, state):
        s = state.data if isinstance(state, Tensor) else np.asarray(state)
        s = s.astype(self.dtype, copy=False)
        if s.ndim == 1:
            s = s[None, :]
        if s.shape[1] != self.state_dim:
            raise ValueError(f"state dim {s.shape[1]} != {self.state_dim}")
        return (Tensor(s[:, self.layout["of"]]),
                Tensor(s[:, self.layout["g"]]),
                Tensor(np.ascontiguousarray(s[:, self.layout["f"]])))

    def _features(self, state, extras=()):
        of, g, f = self._split(state)
        b = f.shape[0]
        rows = reshape(f, (b * self.total_pins, self.pin_feat))
        h = reshape(self.pin_enc(rows), (b, self.total_pins, self.pin_out))
        pooled = tmax(h, axis=1)
        parts = [of, pooled, self.g_enc(g), *extras]
        return self.trunk(concat(parts, axis=-1))


class PolicyNet(_EncoderCore):
    """Gaussian policy: state -> (mean, log-std), each action-dim wide.

    Also owns the per-point object encoder whose pooled output is the cached
    object signature inside the state; it is evaluated once per episode and
    receives no gradients through the policy loss.
    """

    LOG_STD_MIN = -20.0
    LOG_STD_MAX = 2.0

    def __init__(self, rng=None, total_pins=32, pin_feat=47, g_dim=28,
                 feat_dim=512, dtype=np.float32, point_hidden=(64, 128),
                 **core_kw):
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(rng, total_pins, pin_feat, g_dim, feat_dim, 0, dtype,
                         **core_kw)
        self.act_dim = total_pins + 2
        self.point_enc = MLP(rng, [3, *point_hidden, feat_dim], dtype)
        self.mean_head = Dense(rng, self.trunk_out, self.act_dim, dtype)
        self.logstd_head = Dense(rng, self.trunk_out, self.act_dim, dtype)

    def encode_cloud(self, points) -> np.ndarray:
        """Pooled object signature of an (n, 3) point cloud; plain array out."""
        # contiguous copy: strided views can take a different (equally valid
        # but differently rounded) BLAS path, breaking bitwise pool invariance
        x = Tensor(np.ascontiguousarray(np.asarray(points, dtype=self.dtype)))
        return tmax(self.point_enc(x), axis=0).data

    def forward(self, state):
        h = self._features(state)
        mean = self.mean_head(h)
        log_std = clamp(self.logstd_head(h), self.LOG_STD_MIN, self.LOG_STD_MAX)
        return mean, log_std

    def named_params(self):
        return (self.point_enc.named_params("point_enc")
                + self.pin_enc.named_params("pin_enc")
                + self.g_enc.named_params("g_enc")
                + self.trunk.named_params("trunk")
                + self.mean_head.named_params("mean_head")
                + self.logstd_head.named_params("logstd_head"))

    def trainable_params(self):
        """Everything except the frozen object encoder."""
        return [t for name, t in self.named_params()
                if not name.startswith("point_enc")]


class CriticNet(_EncoderCore):
    """State-action value with two output channels (grasp, efficiency)."""

    def __init__(self, rng=None, total_pins=32, pin_feat=47, g_dim=28,
                 feat_dim=512, dtype=np.float32, **core_kw):
        rng = rng if rng is not None else np.random.default_rng(0)
        act_dim = total_pins + 2
        super().__init__(rng, total_pins, pin_feat, g_dim, feat_dim, act_dim,
                         dtype, **core_kw)
        self.act_dim = act_dim
        self.head = Dense(rng, self.trunk_out, 2, dtype)

    def forward(self, state, action):
        a = action if isinstance(action, Tensor) else \
            Tensor(np.asarray(action, dtype=self.dtype).reshape(-1,
                                                                self.act_dim))
        h = self._features(state, extras=(a,))
        return self.head(h)

    def named_params(self):
        return (self.pin_enc.named_params("pin_enc")
                + self.g_enc.named_params("g_enc")
                + self.trunk.named_params("trunk")
                + self.head.named_params("head"))

    def trainable_params(self):
        return [t for _, t in self.named_params()]


class MlpPolicy:
    """Plain Gaussian policy over a flat state; for toy problems and tests.

    Mirrors the PolicyNet interface (forward, act_dim, dtype, trainable
    params) so the learner code is agnostic to which family it drives.
    """

    def __init__(self, rng, state_dim, act_dim, hidden=(64, 64),
                 dtype=np.float32):
        self.state_dim = state_dim
        self.act_dim = act_dim
        self.dtype = dtype
        self.core = MLP(rng, [state_dim, *hidden], dtype, final_linear=False)
        self.mean_head = Dense(rng, hidden[-1], act_dim, dtype)
        self.logstd_head = Dense(rng, hidden[-1], act_dim, dtype)

    def _wrap(self, state):
        s = state.data if isinstance(state, Tensor) else np.asarray(state)
        s = s.astype(self.dtype, copy=False)
        return Tensor(s[None, :] if s.ndim == 1 else s)

    def forward(self, state):
        h = self.core(self._wrap(state))
        mean = self.mean_head(h)
        log_std = clamp(self.logstd_head(h), PolicyNet.LOG_STD_MIN,
                        PolicyNet.LOG_STD_MAX)
        return mean, log_std

    def named_params(self):
        return (self.core.named_params("core")
                + self.mean_head.named_params("mean_head")
                + self.logstd_head.named_params("logstd_head"))

    def trainable_params(self):
        return [t for _, t in self.named_params()]


class MlpCritic:
    """Plain state-action critic with two output channels; toy counterpart."""

    def __init__(self, rng, state_dim, act_dim, hidden=(64, 64),
                 dtype=np.float32):
        self.state_dim = state_dim
        self.act_dim = act_dim
        self.dtype = dtype
        self.core = MLP(rng, [state_dim + act_dim, *hidden], dtype,
                        final_linear=False)
        self.head = Dense(rng, hidden[-1], 2, dtype)

    def forward(self, state, action):
        s = state.data if isinstance(state, Tensor) else np.asarray(state)
        s = Tensor(s.astype(self.dtype, copy=False).reshape(-1, self.state_dim))
        a = action if isinstance(action, Tensor) else \
            Tensor(np.asarray(action, dtype=self.dtype).reshape(-1,
                                                                self.act_dim))
        return self.head(self.core(concat([s, a], axis=-1)))

    def named_params(self):
        return self.core.named_params("core") + self.head.named_params("head")

    def trainable_params(self):
        return [t for _, t in self.named_params()]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_action(net: PolicyNet, state, rng):
    """One reparameterized raw action and its squash-corrected log-prob."""
    mean, log_std = net.forward(state)
    noise = rng.standard_normal(net.act_dim).astype(net.dtype)
    raw = mean.data[0] + np.exp(log_std.data[0]) * noise
    logp = tape.gaussian_log_prob(raw[None, :], mean, log_std)
    return raw, float(logp.data[0])


def sample_batch(net: PolicyNet, states, noise):
    """Differentiable batched sampling for the actor update.

    ``noise`` is a pre-drawn (batch, act_dim) standard normal array so the
    whole computation is recorded on the active tape.
    """
    mean, log_std = net.forward(states)
    raw = add(mean, tape.mul(exp(log_std), noise.astype(net.dtype)))
    logp = tape.gaussian_log_prob(raw, mean, log_std)
    return raw, logp


def mean_action(net: PolicyNet, state) -> np.ndarray:
    """Deterministic head for evaluation: the raw mean (squashed at decode)."""
    mean, _ = net.forward(state)
    return mean.data[0]


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Adaptive-moment SGD over a fixed parameter list."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g.astype(p.data.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def copy_params(src, dst) -> None:
    for (_, a), (_, b) in zip(src.named_params(), dst.named_params()):
        b.data[...] = a.data


def polyak_update(src, dst, tau: float) -> None:
    for (_, a), (_, b) in zip(src.named_params(), dst.named_params()):
        b.data *= 1.0 - tau
        b.data += tau * a.data


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"PGNT"
_VERSION = 1
_DTYPES = {0: np.float32, 1: np.float64}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_checkpoint(path, named_params, meta: dict) -> None:
    """Serialize (name, Tensor) pairs with a JSON meta block."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(named_params)))
        for name, tensor in named_params:
            arr = np.ascontiguousarray(tensor.data)
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Returns ({name: array}, meta dict); validates magic and version."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, meta_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(fh.read(meta_len).decode())
        (count,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            dtype = np.dtype(_DTYPES[code])
            data = fh.read(int(np.prod(shape)) * dtype.itemsize)
            tensors[name] = np.frombuffer(data, dtype=dtype).reshape(shape)
        return tensors, meta


def load_into(net, tensors: dict) -> None:
    """Copy checkpoint arrays into a network; shapes must match exactly."""
    for name, tensor in net.named_params():
        if name not in tensors:
            raise KeyError(f"checkpoint missing tensor {name}")
        src = tensors[name]
        if src.shape != tensor.data.shape:
            raise ValueError(f"{name}: shape {src.shape} != "
                             f"{tensor.data.shape}")
        tensor.data = src.astype(tensor.data.dtype).copy()
