"""Classical MIMO detectors: ZF, MMSE, exhaustive ML and SDR.

Every detector accepts a single problem (``h``: ``(rows, d)``, ``y``:
``(rows,)``) or a batch (``h``: ``(B, rows, d)``, ``y``: ``(B, rows)``) and
returns a :class:`DetectorResult` whose arrays follow the same layout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .exceptions import CapacityError, ContractError, NumericalError, SingularMatrixError
from .mimo import BPSK, Constellation, Modulation, _as_constellation, hard_slice
from .rng import as_stream

ML_MAX_DIM = 24
_PIVOT_TOL = 1e-13


@dataclass
class DetectorResult:
    soft: np.ndarray
    hard: np.ndarray
    objective: np.ndarray  # ||y - H hard||^2
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SdrConfig:
    """ADMM / rounding settings for :func:`sdr_detect`.

    ``rho`` applies to the cost matrix after it is rescaled to unit RMS
    eigenvalue, which makes one default work across SNRs and sizes.
    """

    admm_iterations: int = 500
    rho: float = 0.1
    rounding_samples: int = 100
    eig_tolerance: float = 1e-10
    tolerance: float = 1e-7
    max_sweeps: int = 100

    def __post_init__(self):
        if self.admm_iterations < 1:
            raise ContractError("admm_iterations must be >= 1")
        if self.rounding_samples < 1:
            raise ContractError("rounding_samples must be >= 1")
        if not (self.rho > 0 and self.eig_tolerance > 0 and self.tolerance > 0):
            raise ContractError("rho, eig_tolerance and tolerance must be positive")


def _batched(h, y):
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    single = h.ndim == 2
    if single:
        h, y = h[None], y[None]
    if h.ndim != 3 or y.ndim != 2 or h.shape[:2] != y.shape:
        raise ContractError(f"incompatible shapes h={h.shape}, y={y.shape}")
    return np.ascontiguousarray(h), np.ascontiguousarray(y), single


def _unbatch(single, *arrays):
    return tuple(a[0] if single else a for a in arrays)


def residual_norm(h, y, s) -> np.ndarray:
    """``||y - H s||^2`` per sample."""
    r = y - np.einsum("...ij,...j->...i", h, s)
    return np.einsum("...i,...i->...", r, r)


def _spd_solve(gram, rhs, what):
    x, bad = _kernels.batched_cholesky_solve(gram, rhs, _PIVOT_TOL)
    if np.any(bad >= 0):
        idx = int(np.flatnonzero(bad >= 0)[0])
        raise SingularMatrixError(
            f"{what} (dimension {gram.shape[-1]}) is singular or not positive "
            f"definite: pivot {int(bad[idx])} collapsed (sample {idx})")
    return x


def _result(h, y, soft, constellation, single, **info):
    hard = hard_slice(soft, constellation)
    obj = residual_norm(h, y, hard)
    soft, hard, obj = _unbatch(single, soft, hard, obj)
    return DetectorResult(soft, hard, obj, info)


def zf_detect(h, y, constellation=BPSK) -> DetectorResult:
    """Zero forcing: least-squares solution of the normal equations."""
    h, y, single = _batched(h, y)
    if h.shape[1] < h.shape[2]:
        raise SingularMatrixError(
            f"H^T H is rank deficient: {h.shape[1]} rows < dimension {h.shape[2]}")
    gram, hty = _kernels.batched_gram(h, y)
    soft = _spd_solve(gram, hty, "H^T H")
    return _result(h, y, soft, constellation, single)


def mmse_detect(h, y, sigma, constellation=BPSK) -> DetectorResult:
    """Linear MMSE with regulariser ``2 sigma**2`` (sigma per real component)."""
    h, y, single = _batched(h, y)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), (h.shape[0],))
    if np.any(sigma < 0):
        raise ContractError("sigma must be >= 0")
    gram, hty = _kernels.batched_gram(h, y)
    d = h.shape[2]
    gram = gram + (2.0 * sigma**2)[:, None, None] * np.eye(d)
    soft = _spd_solve(gram, hty, "H^T H + 2 sigma^2 I")
    return _result(h, y, soft, constellation, single)


def candidate_lattice(d: int, constellation) -> np.ndarray:
    """All ``|levels|**d`` symbol vectors in lexicographic order."""
    levels = _as_constellation(constellation).levels
    return np.array(list(itertools.product(levels, repeat=d)), dtype=np.float64)


def ml_detect(h, y, constellation=BPSK, chunk: int = 1 << 16) -> DetectorResult:
    """Exhaustive maximum-likelihood search.

    Ties resolve to the lexicographically smallest candidate.
    """
    constellation = _as_constellation(constellation)
    h, y, single = _batched(h, y)
    d = h.shape[2]
    if d > ML_MAX_DIM:
        raise CapacityError(
            f"ML enumeration over {len(constellation.levels)}**{d} candidates exceeds "
            f"the d <= {ML_MAX_DIM} guard; use sdr_detect or the WeSNet detector")
    nb = h.shape[0]
    best = np.full(nb, np.inf)
    best_idx = np.zeros(nb, dtype=np.int64)
    levels = np.asarray(constellation.levels)
    total = len(levels) ** d
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // (len(levels) ** np.arange(d - 1, -1, -1))) % len(levels)
        cand = levels[digits]                       # (K, d)
        r = y[:, None, :] - np.einsum("bij,kj->bki", h, cand)
        obj = np.einsum("bki,bki->bk", r, r)
        k = np.argmin(obj, axis=1)
        val = obj[np.arange(nb), k]
        better = val < best
        best[better] = val[better]
        best_idx[better] = idx[k[better]]
    digits = (best_idx[:, None] // (len(levels) ** np.arange(d - 1, -1, -1))) % len(levels)
    hard = levels[digits]
    soft, hard_out, obj = _unbatch(single, hard.copy(), hard, best)
    return DetectorResult(soft, hard_out, obj)


def sdr_cost_matrix(h, y) -> np.ndarray:
    """``L = [[H^T H, -H^T y], [-y^T H, ||y||^2]]`` for a single problem."""
    g = h.T @ h
    c = h.T @ y
    d = h.shape[1]
    lmat = np.empty((d + 1, d + 1))
    lmat[:d, :d] = g
    lmat[:d, d] = -c
    lmat[d, :d] = -c
    lmat[d, d] = y @ y
    return lmat


def solve_sdp(lmat, cfg: SdrConfig = SdrConfig()):
    """Solve ``min tr(L X) s.t. diag(X) = 1, X psd`` by ADMM.

    Returns ``(X, eigvals, eigvecs, residuals)``; raises
    :class:`NumericalError` when the eigensolver fails to converge.
    """
    lmat = np.asarray(lmat, dtype=np.float64)
    n = lmat.shape[0]
    norm = np.linalg.norm(lmat)
    scaled = lmat * (np.sqrt(n) / norm) if norm > 0 else lmat
    x, w, v, res, _, status, off = _kernels.sdr_admm(
        np.ascontiguousarray(scaled), cfg.rho, cfg.admm_iterations, cfg.tolerance,
        cfg.eig_tolerance, cfg.max_sweeps)
    if status != 0:
        raise NumericalError(
            f"Jacobi eigensolver did not converge within {cfg.max_sweeps} sweeps "
            f"(off-diagonal norm {off:.3e})", residual=float(res[-1]) if len(res) else None)
    return x, w, v, res


def sdr_detect(h, y, cfg: SdrConfig = SdrConfig(), rng=None, constellation=BPSK) -> DetectorResult:
    """Semidefinite relaxation with Gaussian randomized rounding.

    4-QAM problems are solved as +-1 problems on ``H / sqrt(2)``.
    """
    constellation = _as_constellation(constellation)
    h, y, single = _batched(h, y)
    rng = as_stream(rng)
    nb, _, d = h.shape
    amp = constellation.level
    hs = h * amp
    samples = rng.standard_normal((nb, cfg.rounding_samples, d + 1))
    hard = np.empty((nb, d))
    relaxed = np.empty((nb, d))
    residuals = []
    diag_dev = np.empty(nb)
    for b in range(nb):
        x, w, v, res = solve_sdp(sdr_cost_matrix(hs[b], y[b]), cfg)
        residuals.append(res)
        diag_dev[b] = np.max(np.abs(np.diag(x) - 1.0))
        relaxed[b] = x[:d, d]
        factor = v * np.sqrt(np.clip(w, 0.0, None))
        cand = np.where(samples[b] @ factor.T >= 0.0, 1.0, -1.0)
        cand = cand[:, :d] * cand[:, d:]
        r = y[b][None, :] - cand @ hs[b].T
        k = int(np.argmin(np.einsum("ki,ki->k", r, r)))
        hard[b] = cand[k]
    hard = hard * amp
    obj = residual_norm(h, y, hard)
    info = {"residuals": residuals[0] if single else residuals,
            "diag_deviation": diag_dev[0] if single else diag_dev,
            "relaxed": relaxed[0] * amp if single else relaxed * amp}
    soft, hard, obj = _unbatch(single, hard.copy(), hard, obj)
    return DetectorResult(soft, hard, obj, info)


def psd_projection(a, cfg: SdrConfig = SdrConfig()) -> np.ndarray:
    """Nearest PSD matrix (Frobenius) of a symmetric matrix."""
    a = np.asarray(a, dtype=np.float64)
    out, _, _, off, converged = _kernels.project_psd(
        np.ascontiguousarray(a), np.eye(a.shape[0]), cfg.eig_tolerance, cfg.max_sweeps)
    if not converged:
        raise NumericalError("Jacobi eigensolver did not converge", residual=off)
    return out


def jacobi_eigh(a, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigenvalues (ascending) and eigenvectors of a symmetric matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError("expected a square matrix")
    w, v, _, off, converged = _kernels.jacobi_eigh(np.ascontiguousarray(a), tol, max_sweeps)
    if not converged:
        raise NumericalError(f"Jacobi did not converge in {max_sweeps} sweeps", residual=off)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


__all__ = [
    "DetectorResult", "SdrConfig", "zf_detect", "mmse_detect", "ml_detect", "sdr_detect",
    "candidate_lattice", "sdr_cost_matrix", "solve_sdp", "psd_projection", "jacobi_eigh",
    "residual_norm", "Constellation", "Modulation",
]
