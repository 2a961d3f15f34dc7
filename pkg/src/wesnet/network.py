"""Weight-scaled deep-unfolded MIMO detector.

Each layer ``r`` maps the running estimate ``(s_r, a_r)`` to
``(s_{r+1}, a_{r+1})``::

    x_r   = [H^T y, H^T H s_r, s_r, a_r]                 (5d)
    u_r   = relu(W1 x_r + b1)                            (8d)
    u~_r  = beta_r * u_r                                 (profile gating)
    s_r+1 = psi(W2 u~_r + b2)                            (d)
    a_r+1 = W3 u~_r + b3                                 (2d)

``psi`` is the two-kink soft sign saturating at the constellation level.
Hidden units with ``beta == 0`` touch nothing downstream, so the sparse path
skips their row of ``W1`` and column of ``W2``/``W3``.

All products go through :func:`wesnet._kernels.ordered_matmul`, whose fixed
reduction order makes the dense and sparse paths bitwise identical and
training bitwise reproducible.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .baselines import DetectorResult, _spd_solve, residual_norm
from .exceptions import ConfigError, ContractError, NumericalError, TrainingDivergedError
from .mimo import Constellation, Modulation, generate_batch, hard_slice
from .profiles import (
    Profile, ProfileKind, effective_profile, make_profile, project_monotone_unit,
)
from .rng import RngStream, as_stream

log = logging.getLogger(__name__)

LOSS_EPS = 1e-12


@dataclass(frozen=True)
class NetConfig:
    nt: int
    nr: int
    modulation: str = "bpsk"
    layers: Optional[int] = None          # defaults to 3 * nt
    profile: str = "halfexp"              # linear | halfexp | constant
    keep_fraction: float = 1.0
    learnable_beta: bool = False
    lam: float = 1e-3
    reg_start_layer: int = 1
    psi_t: float = 0.5
    input_profile_mode: bool = False
    normalize_inputs: bool = True         # divide H^T y, H^T H by the row count

    def __post_init__(self):
        if self.nt < 1 or self.nr < 1:
            raise ConfigError("nt and nr must be >= 1")
        Modulation(self.modulation)
        if self.layers is None:
            object.__setattr__(self, "layers", 3 * self.nt)
        if self.layers < 1:
            raise ConfigError("layers must be >= 1")
        kind = ProfileKind(self.profile)
        if kind is ProfileKind.LEARNABLE:
            raise ConfigError("use learnable_beta=True with an analytic initial profile")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigError("keep_fraction must be in (0, 1]")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if not 1 <= self.reg_start_layer <= self.layers:
            raise ConfigError("reg_start_layer must lie in [1, layers]")
        if self.psi_t <= 0:
            raise ConfigError("psi_t must be positive")
        if kind is ProfileKind.HALF_EXPONENTIAL and self.input_profile_mode and self.input_dim % 2:
            raise ConfigError(f"input profile of odd length {self.input_dim} cannot be half-exponential")

    @property
    def constellation(self) -> Constellation:
        return Constellation.from_name(self.modulation)

    @property
    def d(self) -> int:
        return self.constellation.signal_dim(self.nt)

    @property
    def hidden(self) -> int:
        return 8 * self.d

    @property
    def aux(self) -> int:
        return 2 * self.d

    @property
    def input_dim(self) -> int:
        return 5 * self.d

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class LayerParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    beta: np.ndarray
    beta_in: Optional[np.ndarray] = None

    TENSORS = ("W1", "b1", "W2", "b2", "W3", "b3", "beta")

    def profile(self, kind=ProfileKind.LEARNABLE, keep_fraction=1.0) -> Profile:
        return Profile(self.beta.copy(), kind, keep_fraction)


@dataclass
class NetworkParams:
    layers: list
    version: int = 0

    def __len__(self):
        return len(self.layers)

    def named_tensors(self, include_beta_in: bool = True):
        """``(name, array)`` pairs in a fixed order, e.g. ``("layer002.W1", ...)``."""
        for r, lp in enumerate(self.layers):
            for name in LayerParams.TENSORS:
                yield f"layer{r:03d}.{name}", getattr(lp, name)
            if include_beta_in and lp.beta_in is not None:
                yield f"layer{r:03d}.beta_in", lp.beta_in

    def copy(self) -> "NetworkParams":
        return copy.deepcopy(self)

    def bump(self):
        self.version += 1


@dataclass
class LayerTrace:
    x: np.ndarray     # network input after optional input profile (B, 5d)
    z: np.ndarray     # pre-activation (B, 8d)
    u: np.ndarray     # relu(z)
    ut: np.ndarray    # beta * u
    q: np.ndarray     # pre-soft-sign (B, d)
    s: np.ndarray     # s_{r+1}
    a: np.ndarray     # a_{r+1}


@dataclass
class ForwardTrace:
    H: np.ndarray
    y: np.ndarray
    hty: np.ndarray
    gram: np.ndarray
    layers: list
    layer_indices: list
    s_zf: Optional[np.ndarray] = None
    params_version: Optional[int] = None
    params_id: Optional[int] = None

    def __len__(self):
        return len(self.layers)

    @property
    def s_hat(self) -> np.ndarray:
        return self.layers[-1].s


@dataclass
class MacCounter:
    """Per-sample operation counts (one multiply plus one add per MAC = 2 ops).

    ``gated`` covers products whose size scales with the active hidden units;
    ``ungated`` is the ``H^T H s`` product per layer; ``preprocessing`` is the
    one-off ``H^T H`` / ``H^T y``.
    """

    gated: int = 0
    ungated: int = 0
    preprocessing: int = 0
    per_layer: dict = field(default_factory=dict)

    @property
    def layer_total(self) -> int:
        return self.gated + self.ungated

    @property
    def total(self) -> int:
        return self.gated + self.ungated + self.preprocessing


# ---------------------------------------------------------------------------
# initialisation and elementwise pieces


def xavier_init(rng, cfg: NetConfig) -> NetworkParams:
    """Uniform Xavier weights, zero biases, profile from ``cfg``."""
    rng = as_stream(rng)
    d, hid, aux, nin = cfg.d, cfg.hidden, cfg.aux, cfg.input_dim

    def uniform(fan_out, fan_in):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, (fan_out, fan_in))

    beta = effective_profile(make_profile(cfg.profile, hid), cfg.keep_fraction).values
    beta_in = None
    if cfg.input_profile_mode:
        beta_in = effective_profile(make_profile(cfg.profile, nin), cfg.keep_fraction).values
    layers = []
    for _ in range(cfg.layers):
        layers.append(LayerParams(
            W1=uniform(hid, nin), b1=np.zeros(hid),
            W2=uniform(d, hid), b2=np.zeros(d),
            W3=uniform(aux, hid), b3=np.zeros(aux),
            beta=np.array(beta), beta_in=None if beta_in is None else np.array(beta_in),
        ))
    return NetworkParams(layers)


def psi_soft_sign(x, t: float = 0.5, level: float = 1.0):
    """``level * (-1 + (relu(x + t) - relu(x - t)) / t)``."""
    if t <= 0:
        raise ContractError("t must be positive")
    x = np.asarray(x, dtype=np.float64)
    # same function written as a clip so that saturation is exactly +-level
    return level * np.clip(x / t, -1.0, 1.0)


def _psi_grad(q, t, level):
    # kinks take the linear-region slope
    return np.where(np.abs(q) <= t, level / t, 0.0)


def _mm(a, b):
    return _kernels.ordered_matmul(np.ascontiguousarray(a), np.ascontiguousarray(b))


def preprocess(H, y, normalize: bool = False):
    """Batched ``(H, y, H^T y, H^T H)`` with input validation.

    With ``normalize`` both products are divided by the number of real
    receive rows. This keeps the layer inputs O(1) for any antenna count
    without changing the detection problem.
    """
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if H.ndim == 2:
        H, y = H[None], y[None]
    if H.ndim != 3 or y.shape != H.shape[:2]:
        raise ContractError(f"incompatible shapes H={H.shape}, y={y.shape}")
    H = np.ascontiguousarray(H)
    y = np.ascontiguousarray(y)
    gram, hty = _kernels.batched_gram(H, y)
    if normalize:
        rows = float(H.shape[1])
        hty /= rows
        gram /= rows
    return H, y, hty, gram


def _check_layer_shapes(p: LayerParams, cfg: NetConfig):
    d, hid, aux, nin = cfg.d, cfg.hidden, cfg.aux, cfg.input_dim
    expected = {"W1": (hid, nin), "b1": (hid,), "W2": (d, hid), "b2": (d,),
                "W3": (aux, hid), "b3": (aux,), "beta": (hid,)}
    for name, shape in expected.items():
        if getattr(p, name).shape != shape:
            raise ContractError(f"{name} has shape {getattr(p, name).shape}, expected {shape}")


# ---------------------------------------------------------------------------
# forward


def layer_forward(p: LayerParams, s, a, hty, gram, cfg: NetConfig, sparse: bool = False,
                  counter: Optional[MacCounter] = None, index: int = 0):
    """One unfolded layer. Returns ``(s_next, a_next, LayerTrace)``."""
    _check_layer_shapes(p, cfg)
    d = cfg.d
    if s.shape[-1] != d or a.shape[-1] != cfg.aux or hty.shape[-1] != d:
        raise ContractError("state/input dimensions do not match the configuration")
    level = cfg.constellation.level
    gs = _kernels.batched_matvec(gram, s)
    x = np.concatenate([hty, gs, s, a], axis=1)
    in_cols = np.arange(x.shape[1])
    if p.beta_in is not None:
        x = p.beta_in * x
        if sparse:
            in_cols = np.flatnonzero(p.beta_in != 0.0)
    hid = np.flatnonzero(p.beta != 0.0) if sparse else np.arange(cfg.hidden)

    z = np.zeros((x.shape[0], cfg.hidden))
    z[:, hid] = _mm(x[:, in_cols], p.W1[np.ix_(hid, in_cols)].T) + p.b1[hid]
    u = np.maximum(z, 0.0)
    if sparse:
        ut = np.zeros_like(u)
        ut[:, hid] = p.beta[hid] * u[:, hid]
    else:
        ut = p.beta * u
    q = _mm(ut[:, hid], p.W2[:, hid].T) + p.b2
    s_next = psi_soft_sign(q, cfg.psi_t, level)
    a_next = _mm(ut[:, hid], p.W3[:, hid].T) + p.b3

    if counter is not None:
        n_in, n_hid = len(in_cols), len(hid)
        gated = 2 * (n_in * n_hid + n_hid * d + n_hid * cfg.aux)
        ungated = 2 * d * d
        counter.gated += gated
        counter.ungated += ungated
        counter.per_layer[index] = gated + ungated
    return s_next, a_next, LayerTrace(x, z, u, ut, q, s_next, a_next)


def detnet_layer_forward(p: LayerParams, s, a, hty, gram, cfg: NetConfig):
    """Reference layer without any profile scaling (plain unfolded detector)."""
    gs = _kernels.batched_matvec(gram, s)
    x = np.concatenate([hty, gs, s, a], axis=1)
    u = np.maximum(_mm(x, p.W1.T) + p.b1, 0.0)
    s_next = psi_soft_sign(_mm(u, p.W2.T) + p.b2, cfg.psi_t, cfg.constellation.level)
    a_next = _mm(u, p.W3.T) + p.b3
    return s_next, a_next


def _layer_range(n_layers, layers_to_run, drop):
    if layers_to_run is None:
        layers_to_run = n_layers
    if not 1 <= layers_to_run <= n_layers:
        raise ContractError(f"layers_to_run must be in [1, {n_layers}], got {layers_to_run}")
    if drop == "trailing":
        return list(range(layers_to_run))
    if drop == "leading":
        return list(range(n_layers - layers_to_run, n_layers))
    raise ContractError(f"unknown drop mode {drop!r}")


def zf_normalizer(H, y, hty=None, gram=None):
    """Zero-forcing soft estimate ``(H^T H)^{-1} H^T y`` per sample."""
    if gram is None:
        _, _, hty, gram = preprocess(H, y)
    return _spd_solve(gram, hty, "H^T H")


def network_forward(params: NetworkParams, H, y, cfg: NetConfig, layers_to_run=None,
                    sparse: bool = False, counter: Optional[MacCounter] = None,
                    with_zf: bool = False, drop: str = "trailing") -> ForwardTrace:
    """Run ``layers_to_run`` layers from ``s_0 = 0, a_0 = 0``.

    ``drop="trailing"`` (default) removes layers from the end; ``"leading"``
    removes them from the start instead.
    """
    H, y, hty, gram = preprocess(H, y, cfg.normalize_inputs)
    if H.shape[2] != cfg.d or H.shape[1] != 2 * cfg.nr:
        raise ContractError(f"channel shape {H.shape[1:]} does not match config "
                            f"({2 * cfg.nr}, {cfg.d})")
    idx = _layer_range(len(params), layers_to_run, drop)
    if counter is not None:
        rows, d = H.shape[1], H.shape[2]
        counter.preprocessing += 2 * rows * d + 2 * rows * d * (d + 1) // 2
    nb = H.shape[0]
    s = np.zeros((nb, cfg.d))
    a = np.zeros((nb, cfg.aux))
    traces = []
    for r in idx:
        s, a, tr = layer_forward(params.layers[r], s, a, hty, gram, cfg, sparse, counter, r)
        traces.append(tr)
    s_zf = zf_normalizer(H, y, hty, gram) if with_zf else None
    return ForwardTrace(H, y, hty, gram, traces, idx, s_zf, params.version, id(params))


def detect(params: NetworkParams, H, y, cfg: NetConfig, layers_to_run=None,
           sparse: bool = True, drop: str = "trailing") -> DetectorResult:
    """Feed-forward detection; single problems or batches."""
    single = np.asarray(H).ndim == 2
    trace = network_forward(params, H, y, cfg, layers_to_run, sparse=sparse, drop=drop)
    soft = trace.s_hat
    hard = hard_slice(soft, cfg.constellation)
    obj = residual_norm(trace.H, trace.y, hard)
    if single:
        return DetectorResult(soft[0], hard[0], obj[0])
    return DetectorResult(soft, hard, obj)


# ---------------------------------------------------------------------------
# losses


def _layer_weights(trace: ForwardTrace):
    # weights follow the executed position, r = 1..len(trace)
    return [math.log(r) for r in range(1, len(trace) + 1)]


def _denominator(trace, s_true):
    if trace.s_zf is None:
        raise ContractError("trace lacks the ZF normalizer; run network_forward(with_zf=True)")
    den = np.sum((s_true - trace.s_zf) ** 2, axis=1)
    if np.any(den < LOSS_EPS):
        log.debug("ZF error below %g on %d samples; floored", LOSS_EPS, int(np.sum(den < LOSS_EPS)))
    return np.maximum(den, LOSS_EPS)


def loss_weighted(trace: ForwardTrace, s_true) -> float:
    """Batch mean of ``sum_r log(r) ||s - s_r||^2 / ||s - s_zf||^2``."""
    s_true = np.atleast_2d(s_true)
    den = _denominator(trace, s_true)
    total = 0.0
    for w, lt in zip(_layer_weights(trace), trace.layers):
        if w == 0.0:
            continue
        total += w * float(np.mean(np.sum((s_true - lt.s) ** 2, axis=1) / den))
    return total


def _gated_l1(p: LayerParams):
    """Per-hidden-unit L1 mass touched by the profile: W1 row + W2/W3 columns."""
    return (np.abs(p.W1).sum(axis=1) + np.abs(p.W2).sum(axis=0) + np.abs(p.W3).sum(axis=0))


def sparsity_penalty(params: NetworkParams, cfg: NetConfig, n_layers: Optional[int] = None) -> float:
    """``sum_{r=l}^{L} log(1 + (r - 1) * ||beta_r W_r||_1)``."""
    n_layers = len(params) if n_layers is None else n_layers
    total = 0.0
    for r in range(cfg.reg_start_layer, n_layers + 1):
        if r == 1:
            continue
        p = params.layers[r - 1]
        mass = float(np.dot(p.beta, _gated_l1(p)))
        total += math.log1p((r - 1) * mass)
    return total


def loss_regularized(trace: ForwardTrace, s_true, params: NetworkParams, cfg: NetConfig) -> float:
    base = loss_weighted(trace, s_true)
    if cfg.lam == 0.0:
        return base
    return base + cfg.lam * sparsity_penalty(params, cfg, len(trace))


# ---------------------------------------------------------------------------
# backward


def _zeros_like_params(params: NetworkParams):
    return [{name: np.zeros_like(getattr(lp, name)) for name in LayerParams.TENSORS}
            for lp in params.layers]


def backward(trace: ForwardTrace, s_true, params: NetworkParams, cfg: NetConfig):
    """Exact gradients of :func:`loss_regularized`.

    Returns one dict per layer with keys ``W1, b1, W2, b2, W3, b3, beta``.
    The ``beta`` entry is always filled; it is only applied when
    ``cfg.learnable_beta`` is set.
    """
    if trace.params_id != id(params) or trace.params_version != params.version:
        raise ContractError("stale trace: parameters changed since the forward pass")
    if trace.layer_indices != list(range(len(trace))):
        raise ContractError("backward requires a forward pass over leading layers")
    s_true = np.atleast_2d(s_true)
    nb = s_true.shape[0]
    d = cfg.d
    level = cfg.constellation.level
    den = _denominator(trace, s_true)
    weights = _layer_weights(trace)
    grads = _zeros_like_params(params)

    gs = np.zeros((nb, d))
    ga = np.zeros((nb, cfg.aux))
    for k in range(len(trace) - 1, -1, -1):
        lt = trace.layers[k]
        p = params.layers[k]
        g = grads[k]
        if weights[k] != 0.0:
            gs = gs + (2.0 * weights[k] / nb) * (lt.s - s_true) / den[:, None]
        gq = gs * _psi_grad(lt.q, cfg.psi_t, level)
        g["W2"] += _mm(gq.T, lt.ut)
        g["b2"] += gq.sum(axis=0)
        g["W3"] += _mm(ga.T, lt.ut)
        g["b3"] += ga.sum(axis=0)
        gut = _mm(gq, p.W2) + _mm(ga, p.W3)
        g["beta"] += np.sum(gut * lt.u, axis=0)
        gz = (gut * p.beta) * (lt.z > 0.0)
        g["W1"] += _mm(gz.T, lt.x)
        g["b1"] += gz.sum(axis=0)
        gx = _mm(gz, p.W1)
        if p.beta_in is not None:
            gx = gx * p.beta_in
        # x = [H^T y, H^T H s, s, a]; H^T H is symmetric
        gs = _kernels.batched_matvec(trace.gram, np.ascontiguousarray(gx[:, d:2 * d])) + gx[:, 2 * d:3 * d]
        ga = gx[:, 3 * d:]

    if cfg.lam != 0.0:
        for r in range(max(cfg.reg_start_layer, 2), len(trace) + 1):
            p = params.layers[r - 1]
            g = grads[r - 1]
            mass = float(np.dot(p.beta, _gated_l1(p)))
            c = cfg.lam * (r - 1) / (1.0 + (r - 1) * mass)
            g["W1"] += c * p.beta[:, None] * np.sign(p.W1)
            g["W2"] += c * p.beta[None, :] * np.sign(p.W2)
            g["W3"] += c * p.beta[None, :] * np.sign(p.W3)
            g["beta"] += c * _gated_l1(p)
    return grads


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def named_tensors(self):
        for key in sorted(self.m):
            yield f"adam.m.{key}", self.m[key]
            yield f"adam.v.{key}", self.v[key]


def adam_step(state: AdamState, params: NetworkParams, grads, cfg: NetConfig) -> NetworkParams:
    """In-place Adam update with bias correction; returns ``params``.

    Learnable profiles are re-projected onto monotone ``[0, 1]`` sequences
    and re-masked after the step.
    """
    if len(grads) != len(params):
        raise ContractError("gradient list length does not match the network")
    names = LayerParams.TENSORS if cfg.learnable_beta else LayerParams.TENSORS[:-1]
    for r, g in enumerate(grads):
        for name in names:
            if not np.all(np.isfinite(g[name])):
                raise NumericalError(f"non-finite gradient in layer {r} tensor {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for r, (lp, g) in enumerate(zip(params.layers, grads)):
        for name in names:
            key = f"layer{r:03d}.{name}"
            w = getattr(lp, name)
            if g[name].shape != w.shape:
                raise ContractError(f"gradient shape mismatch for {key}")
            m = state.m.get(key)
            if m is None:
                m = state.m[key] = np.zeros_like(w)
                state.v[key] = np.zeros_like(w)
            v = state.v[key]
            m *= state.beta1
            m += (1.0 - state.beta1) * g[name]
            v *= state.beta2
            v += (1.0 - state.beta2) * g[name] ** 2
            w -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        if cfg.learnable_beta:
            projected = project_monotone_unit(lp.beta)
            lp.beta[:] = effective_profile(Profile(projected, ProfileKind.LEARNABLE),
                                           cfg.keep_fraction).values
    params.bump()
    return params


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch: int = 500
    snr_lo: float = 8.0
    snr_hi: float = 14.0
    seed: int = 0
    learning_rate: float = 1e-2
    lr_schedule: str = "cosine"           # constant | cosine
    lr_min: float = 1e-3

    def __post_init__(self):
        if self.iterations < 1 or self.batch < 1:
            raise ConfigError("iterations and batch must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not 0 < self.lr_min <= self.learning_rate and self.lr_schedule == "cosine":
            raise ConfigError("cosine schedule needs 0 < lr_min <= learning_rate")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.snr_lo > self.snr_hi:
            raise ConfigError("snr_lo must not exceed snr_hi")

    def lr_at(self, iteration: int) -> float:
        if self.lr_schedule == "constant":
            return self.learning_rate
        frac = iteration / self.iterations
        return self.lr_min + 0.5 * (self.learning_rate - self.lr_min) * (1 + math.cos(math.pi * frac))


@dataclass
class TrainResult:
    params: NetworkParams
    losses: np.ndarray
    adam: AdamState


def train(cfg: NetConfig, train_cfg: TrainConfig, params: Optional[NetworkParams] = None,
          callback: Optional[Callable] = None) -> TrainResult:
    """Adam training on fresh synthetic batches, one per iteration.

    The random stream for initialisation is ``(seed, 0)`` and for iteration
    ``i`` it is ``(seed, 1, i)``, so runs are reproducible bit for bit.
    ``callback(iteration, params, loss)`` runs after every optimizer step.
    """
    root = RngStream(train_cfg.seed)
    if params is None:
        params = xavier_init(root.child(0), cfg)
    state = AdamState(lr=train_cfg.learning_rate)
    losses = np.empty(train_cfg.iterations)
    last_good = params.copy()
    for it in range(train_cfg.iterations):
        batch = generate_batch(root.child(1, it), cfg.nt, cfg.nr, cfg.constellation,
                               train_cfg.snr_lo, train_cfg.snr_hi, train_cfg.batch)
        trace = network_forward(params, batch.H, batch.y, cfg, with_zf=True)
        loss = loss_regularized(trace, batch.s, params, cfg)
        if not math.isfinite(loss):
            raise TrainingDivergedError(f"loss became {loss} at iteration {it}",
                                        last_good=last_good, iteration=it)
        losses[it] = loss
        grads = backward(trace, batch.s, params, cfg)
        last_good = params.copy()
        state.lr = train_cfg.lr_at(it)
        adam_step(state, params, grads, cfg)
        if callback is not None:
            callback(it, params, loss)
        if it % 100 == 0:
            log.debug("iteration %d loss %.6f", it, loss)
    return TrainResult(params, losses, state)


def with_overrides(cfg: NetConfig, **kw) -> NetConfig:
    return replace(cfg, **kw)
