"""From-scratch feed-forward networks with exact reverse-mode gradients.

Everything is float64 numpy: parameters are plain arrays, the forward pass
caches what the backward pass needs, and Adam operates on flat lists of
arrays.  Checkpoints serialize parameters as little-endian float32 behind a
JSON header (magic "ASTX1").
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ContractViolationError

LOGSTD_MIN = -5.0
LOGSTD_MAX = 2.0
_LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# MLP

@dataclass
class MlpParams:
    """Linear layers with tanh hidden activations and identity output."""

    weights: list[np.ndarray]   # each (fan_in, fan_out)
    biases: list[np.ndarray]

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        arrays = list(arrays)
        return cls(weights=[a for a in arrays[0::2]],
                   biases=[a for a in arrays[1::2]])

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int,
               gain: float) -> np.ndarray:
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if fan_in < fan_out:
        q = q.T
    return np.ascontiguousarray(gain * q[:fan_in, :fan_out])


def mlp_init(sizes, rng: np.random.Generator, out_gain: float = 1.0) -> MlpParams:
    """Orthogonal-initialized MLP; `sizes` includes input and output widths."""
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        weights.append(orthogonal(rng, sizes[i], sizes[i + 1], gain))
        biases.append(np.zeros(sizes[i + 1]))
    return MlpParams(weights, biases)


class MlpCache:
    __slots__ = ("params", "inputs", "preacts")

    def __init__(self, params, inputs, preacts):
        self.params = params
        self.inputs = inputs      # activation entering each layer
        self.preacts = preacts    # pre-activation of each layer


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Returns (output, cache); x is (B, in) or (in,)."""
    squeeze = x.ndim == 1
    a = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if a.shape[1] != params.weights[0].shape[0]:
        raise ContractViolationError(
            f"input dim {a.shape[1]} != {params.weights[0].shape[0]}")
    inputs, preacts = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w + b
        preacts.append(z)
        a = z if i == last else np.tanh(z)
    out = a[0] if squeeze else a
    return out, MlpCache(params, inputs, preacts)


def mlp_backward(params: MlpParams, cache: MlpCache, dout: np.ndarray):
    """Exact gradients; returns (grads matching params.arrays(), dinput)."""
    if cache.params is not params:
        raise ContractViolationError("cache does not match these parameters")
    d = np.atleast_2d(np.asarray(dout, dtype=np.float64))
    grads_w = [None] * len(params.weights)
    grads_b = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        if i != len(params.weights) - 1:
            t = np.tanh(cache.preacts[i])
            d = d * (1.0 - t * t)
        grads_w[i] = cache.inputs[i].T @ d
        grads_b[i] = d.sum(axis=0)
        d = d @ params.weights[i].T
    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads.extend((gw, gb))
    return grads, d


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, arrays, lr: float, eps: float = 1e-8) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays],
                   step=0, lr=lr, eps=eps)


def global_norm(arrays) -> float:
    total = 0.0
    for a in arrays:
        total += float(np.sum(a * a))
    return float(np.sqrt(total))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if max_norm and np.isfinite(max_norm) and norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads], norm
    return list(grads), norm


def adam_update(adam: AdamState, params, grads, max_grad_norm: float = np.inf):
    """Global-norm clip then one bias-corrected Adam step.

    Returns (new_params, new_adam); inputs are not mutated.
    """
    params = list(params)
    if len(params) != len(adam.m) or any(p.shape != g.shape for p, g in zip(params, grads)):
        raise ContractViolationError("parameter/gradient shape mismatch")
    grads, _ = clip_by_global_norm(grads, max_grad_norm)
    step = adam.step + 1
    b1c = 1.0 - adam.beta1 ** step
    b2c = 1.0 - adam.beta2 ** step
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, adam.m, adam.v):
        m = adam.beta1 * m + (1.0 - adam.beta1) * g
        v = adam.beta2 * v + (1.0 - adam.beta2) * (g * g)
        mhat = m / b1c
        vhat = v / b2c
        new_p.append(p - adam.lr * mhat / (np.sqrt(vhat) + adam.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(m=new_m, v=new_v, step=step, lr=adam.lr,
                            beta1=adam.beta1, beta2=adam.beta2, eps=adam.eps)


# ---------------------------------------------------------------------------
# Gaussian policy heads

@dataclass(frozen=True)
class GaussianHead:
    """`ppo` samples an unsquashed Gaussian with state-independent log-std;
    `sac` squashes with tanh and applies the change-of-variables correction."""

    mode: str
    logstd_min: float = LOGSTD_MIN
    logstd_max: float = LOGSTD_MAX

    def __post_init__(self):
        if self.mode not in ("ppo", "sac"):
            raise ContractViolationError(f"unknown head mode {self.mode!r}")


def clamp_logstd(head: GaussianHead, logstd: np.ndarray) -> np.ndarray:
    return np.clip(logstd, head.logstd_min, head.logstd_max)


def gaussian_log_prob(mu, logstd, actions) -> np.ndarray:
    """Diagonal-Gaussian log density summed over action dimensions."""
    z = (actions - mu) * np.exp(-logstd)
    return np.sum(-0.5 * z * z - logstd - 0.5 * _LOG_2PI, axis=-1)


def tanh_correction(u: np.ndarray) -> np.ndarray:
    """sum over dims of log(1 - tanh(u)^2), evaluated stably."""
    return np.sum(2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u)), axis=-1)


def squashed_log_prob(mu, logstd, u) -> np.ndarray:
    """log-density of a = tanh(u) for u ~ N(mu, exp(logstd)^2)."""
    return gaussian_log_prob(mu, logstd, u) - tanh_correction(u)


def policy_sample(head: GaussianHead, mu, logstd, rng: np.random.Generator):
    """Draw actions and their log-probabilities.

    Returns (action, log_prob); in sac mode the pre-squash sample is also
    returned as a third element for reparameterized losses.
    """
    logstd = clamp_logstd(head, np.broadcast_to(logstd, np.shape(mu)))
    std = np.exp(logstd)
    eps = rng.standard_normal(np.shape(mu))
    u = mu + std * eps
    if head.mode == "ppo":
        return u, gaussian_log_prob(mu, logstd, u)
    a = np.tanh(u)
    return a, squashed_log_prob(mu, logstd, u), u


def policy_mean_action(head: GaussianHead, mu):
    return np.tanh(mu) if head.mode == "sac" else mu


def gaussian_entropy(logstd) -> np.ndarray:
    """Entropy of the unsquashed Gaussian, summed over dims."""
    return np.sum(logstd + 0.5 * (1.0 + _LOG_2PI), axis=-1)


# ---------------------------------------------------------------------------
# actor / critic parameter records

@dataclass
class PolicyParams:
    """Actor: MLP trunk plus head; ppo mode carries a separate logstd vector."""

    mlp: MlpParams
    head: GaussianHead
    logstd: np.ndarray | None = None

    @property
    def action_dim(self) -> int:
        out = self.mlp.sizes[-1]
        return out if self.head.mode == "ppo" else out // 2

    def arrays(self) -> list[np.ndarray]:
        arr = self.mlp.arrays()
        if self.head.mode == "ppo":
            arr.append(self.logstd)
        return arr

    def replace_arrays(self, arrays) -> "PolicyParams":
        arrays = list(arrays)
        if self.head.mode == "ppo":
            return PolicyParams(mlp=MlpParams.from_arrays(arrays[:-1]),
                                head=self.head, logstd=arrays[-1])
        return PolicyParams(mlp=MlpParams.from_arrays(arrays), head=self.head)

    def mu_logstd(self, obs):
        """Forward pass to (mu, clamped logstd, cache)."""
        out, cache = mlp_forward(self.mlp, obs)
        if self.head.mode == "ppo":
            mu = out
            logstd = clamp_logstd(self.head, self.logstd)
            logstd = np.broadcast_to(logstd, np.shape(mu))
        else:
            da = self.action_dim
            mu = out[..., :da]
            logstd = clamp_logstd(self.head, out[..., da:])
        return mu, logstd, cache


@dataclass
class CriticParams:
    """State-value or Q-value network; scalar output."""

    mlp: MlpParams

    def arrays(self) -> list[np.ndarray]:
        return self.mlp.arrays()

    def replace_arrays(self, arrays) -> "CriticParams":
        return CriticParams(mlp=MlpParams.from_arrays(list(arrays)))

    def value(self, x):
        out, cache = mlp_forward(self.mlp, x)
        return out[..., 0], cache


HIDDEN_SIZES = (64, 64)


def policy_init(obs_dim: int, action_dim: int, mode: str,
                rng: np.random.Generator) -> PolicyParams:
    head = GaussianHead(mode=mode)
    out = action_dim if mode == "ppo" else 2 * action_dim
    mlp = mlp_init([obs_dim, *HIDDEN_SIZES, out], rng, out_gain=0.01)
    logstd = np.zeros(action_dim) if mode == "ppo" else None
    return PolicyParams(mlp=mlp, head=head, logstd=logstd)


def critic_init(input_dim: int, rng: np.random.Generator) -> CriticParams:
    return CriticParams(mlp=mlp_init([input_dim, *HIDDEN_SIZES, 1], rng,
                                     out_gain=1.0))


# ---------------------------------------------------------------------------
# checkpoint format: magic "ASTX1", JSON header, little-endian float32 arrays

CHECKPOINT_MAGIC = b"ASTX1"
_META_KEYS = ("task", "algorithm", "agent_role", "disability", "seed")


def save_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write named arrays after a JSON header; header order is array order."""
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise ContractViolationError(f"checkpoint meta missing {missing}")
    header = dict(meta)
    header["arrays"] = [{"name": k, "shape": list(np.shape(v))}
                        for k, v in arrays.items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (meta, {name: float32 array}) or raises CheckpointError."""
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = p.read_bytes()
    if raw[:5] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    (hlen,) = struct.unpack("<I", raw[5:9])
    header = json.loads(raw[9:9 + hlen].decode("utf-8"))
    specs = header.pop("arrays")
    offset = 9 + hlen
    arrays = {}
    for spec in specs:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        arrays[spec["name"]] = arr.reshape(shape).copy()
        offset += 4 * count
    if offset != len(raw):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")
    return header, arrays


def policy_to_arrays(policy: PolicyParams) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(policy.mlp.weights, policy.mlp.biases)):
        out[f"w{i}"] = w
        out[f"b{i}"] = b
    if policy.head.mode == "ppo":
        out["logstd"] = policy.logstd
    return out


def policy_from_arrays(mode: str, arrays: dict[str, np.ndarray]) -> PolicyParams:
    n_layers = sum(1 for k in arrays if k.startswith("w"))
    mlp = MlpParams(
        weights=[arrays[f"w{i}"].astype(np.float64) for i in range(n_layers)],
        biases=[arrays[f"b{i}"].astype(np.float64) for i in range(n_layers)],
    )
    logstd = arrays["logstd"].astype(np.float64) if "logstd" in arrays else None
    return PolicyParams(mlp=mlp, head=GaussianHead(mode=mode), logstd=logstd)


def save_policy(path, policy: PolicyParams, meta: dict) -> None:
    meta = dict(meta)
    meta["head_mode"] = policy.head.mode
    save_checkpoint(path, meta, policy_to_arrays(policy))


def load_policy(path):
    meta, arrays = load_checkpoint(path)
    mode = meta.get("head_mode", "ppo")
    return policy_from_arrays(mode, arrays), meta
