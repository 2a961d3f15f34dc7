"""Monotone weight-profile coefficients.

A profile is a non-increasing vector ``beta`` in ``[0, 1]`` that scales the
hidden units of a layer. Entries that are exactly zero mark units that can
be skipped entirely at inference.

Index convention: formulas are written 1-indexed (``i = 1..N``), so the
linear profile reaches exactly 0 at its last entry.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ContractError, InputDomainError


class ProfileKind(str, enum.Enum):
    LINEAR = "linear"
    HALF_EXPONENTIAL = "halfexp"
    LEARNABLE = "learnable"
    CONSTANT = "constant"   # beta == 1, i.e. an unscaled layer


@dataclass(frozen=True)
class KeepMask:
    cutoff_index: int
    n: int

    def __post_init__(self):
        if not 1 <= self.cutoff_index <= self.n:
            raise ContractError(f"cutoff_index {self.cutoff_index} outside [1, {self.n}]")

    @classmethod
    def from_fraction(cls, n: int, keep_fraction: float) -> "KeepMask":
        if not 0.0 < keep_fraction <= 1.0:
            raise ContractError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
        # guard against 0.5 * 240 = 120.00000000000001 style round-up
        cut = math.ceil(round(keep_fraction * n, 9))
        return cls(max(1, min(n, cut)), n)

    def as_bool(self) -> np.ndarray:
        keep = np.zeros(self.n, dtype=bool)
        keep[: self.cutoff_index] = True
        return keep


@dataclass(frozen=True)
class Profile:
    values: np.ndarray
    kind: ProfileKind
    keep_fraction: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "kind", ProfileKind(self.kind))

    def __len__(self):
        return len(self.values)

    @property
    def active(self) -> np.ndarray:
        """Indices of non-zero coefficients (ascending)."""
        return np.flatnonzero(self.values != 0.0)

    def is_valid(self) -> bool:
        v = self.values
        return bool(np.all(v >= 0.0) and np.all(v <= 1.0) and np.all(np.diff(v) <= 0.0))


def linear_profile(n: int) -> Profile:
    """``beta_i = 1 - i/n`` for ``i = 1..n``."""
    if n < 1:
        raise ContractError("n must be >= 1")
    i = np.arange(1, n + 1, dtype=np.float64)
    return Profile(1.0 - i / n, ProfileKind.LINEAR)


def half_exp_profile(n: int) -> Profile:
    """Unit plateau on the first half, then ``exp(n/2 - i - 1)``."""
    if n < 2 or n % 2:
        raise ConfigError(f"half-exponential profile needs an even n >= 2, got {n}")
    i = np.arange(1, n + 1, dtype=np.float64)
    half = n // 2
    values = np.where(i <= half, 1.0, np.exp(half - i - 1.0))
    return Profile(values, ProfileKind.HALF_EXPONENTIAL)


def constant_profile(n: int) -> Profile:
    return Profile(np.ones(n), ProfileKind.CONSTANT)


def make_profile(kind, n: int) -> Profile:
    kind = ProfileKind(kind)
    if kind is ProfileKind.LINEAR:
        return linear_profile(n)
    if kind is ProfileKind.HALF_EXPONENTIAL:
        return half_exp_profile(n)
    if kind is ProfileKind.CONSTANT:
        return constant_profile(n)
    raise ConfigError("a learnable profile must be initialised from an analytic kind")


def effective_profile(p: Profile, keep_fraction: float) -> Profile:
    """Zero every entry past ``ceil(keep_fraction * N)``."""
    mask = KeepMask.from_fraction(len(p), keep_fraction)
    values = np.where(mask.as_bool(), p.values, 0.0)
    return Profile(values, p.kind, keep_fraction)


def apply_profile(u, p, sparse: bool = False) -> np.ndarray:
    """Elementwise ``beta * u`` along the last axis.

    With ``sparse=True`` positions where ``beta == 0`` are never read and the
    output there is written as 0; both paths give identical bits.
    """
    beta = p.values if isinstance(p, Profile) else np.asarray(p, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != beta.shape[0]:
        raise ContractError(f"profile length {beta.shape[0]} != input length {u.shape[-1]}")
    if not sparse:
        # + 0.0 turns the -0.0 of (0 * negative) into +0.0, matching the sparse path
        return beta * u + 0.0
    out = np.zeros(np.broadcast_shapes(u.shape, beta.shape))
    idx = np.flatnonzero(beta != 0.0)
    out[..., idx] = beta[idx] * u[..., idx]
    return out


def profile_grad(upstream, u) -> np.ndarray:
    """Gradient of ``sum(upstream * beta * u)`` with respect to ``beta``."""
    g = np.asarray(upstream) * np.asarray(u)
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def _pav_nonincreasing(y: np.ndarray) -> np.ndarray:
    # pool adjacent violators: blocks kept as (mean, weight)
    means: list = []
    weights: list = []
    for v in y:
        means.append(float(v))
        weights.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            w = weights[-2] + weights[-1]
            m = (means[-2] * weights[-2] + means[-1] * weights[-1]) / w
            means[-2:] = [m]
            weights[-2:] = [w]
    return np.repeat(np.asarray(means), weights)


def project_monotone_unit(values) -> np.ndarray:
    """Euclidean projection onto non-increasing sequences, then clamp to [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError("expected a vector")
    if not np.all(np.isfinite(v)):
        raise InputDomainError("profile values must be finite")
    if v.size == 0:
        return v.copy()
    return np.clip(_pav_nonincreasing(v), 0.0, 1.0)
