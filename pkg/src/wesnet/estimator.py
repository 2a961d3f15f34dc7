"""Scikit-learn style wrappers around the detectors.

A detection problem is one row of ``X``: the real channel ``H`` (``rows x d``,
row-major) followed by the received vector ``y`` (``rows``). Use
:func:`pack_problems` / :func:`unpack_problems` to convert. ``predict``
returns hard symbol decisions, ``score`` returns ``1 - BER``.

The learned detector trains on synthetic data it draws itself, so ``fit``
ignores ``X`` and ``y``; classical detectors have nothing to fit and only
validate their settings.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baselines import SdrConfig, ml_detect, mmse_detect, sdr_detect, zf_detect
from .exceptions import ContractError, InputDomainError
from .mimo import Constellation, bit_error_rate, noise_std_from_snr
from .network import NetConfig, TrainConfig, detect, train


def problem_dims(nt: int, nr: int, modulation="bpsk"):
    """``(rows, d)`` of the real-valued model."""
    return 2 * nr, Constellation.from_name(modulation).signal_dim(nt)


def pack_problems(H, y) -> np.ndarray:
    """Stack ``H`` (B, rows, d) and ``y`` (B, rows) into ``X`` (B, rows*d + rows)."""
    H = np.asarray(H, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if H.ndim == 2:
        H, y = H[None], y[None]
    if H.ndim != 3 or y.shape != H.shape[:2]:
        raise ContractError(f"incompatible shapes H={H.shape}, y={y.shape}")
    return np.concatenate([H.reshape(H.shape[0], -1), y], axis=1)


def unpack_problems(X, rows: int, d: int):
    X = check_problem_array(X, rows, d)
    n = X.shape[0]
    H = np.ascontiguousarray(X[:, : rows * d].reshape(n, rows, d))
    y = np.ascontiguousarray(X[:, rows * d:])
    return H, y


def check_problem_array(X, rows: int, d: int) -> np.ndarray:
    """Validate a packed problem matrix and return it as float64."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2:
        raise ContractError(f"X must be 2-D, got {X.ndim}-D")
    width = rows * d + rows
    if X.shape[1] != width:
        raise ContractError(f"X has {X.shape[1]} columns, expected {width} "
                            f"({rows}x{d} channel plus {rows} observations)")
    if X.shape[0] == 0:
        raise ContractError("X has no rows")
    if not np.all(np.isfinite(X)):
        raise InputDomainError("X contains non-finite values")
    return X


def check_symbols(s, n: int, d: int) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 1 and n == 1:
        s = s[None]
    if s.shape != (n, d):
        raise ContractError(f"symbols must have shape {(n, d)}, got {s.shape}")
    return s


class _DetectorBase(BaseEstimator):
    """Shared plumbing; subclasses implement ``_detect(H, y, sigma)``."""

    def _dims(self):
        return problem_dims(self.nt, self.nr, self.modulation)

    def _sigma(self, n, sigma):
        if sigma is not None:
            return np.broadcast_to(np.asarray(sigma, dtype=np.float64), (n,))
        snr = getattr(self, "snr_db", None)
        if snr is None:
            return None
        return np.full(n, noise_std_from_snr(snr, self.nt))

    def fit(self, X=None, y=None):
        Constellation.from_name(self.modulation)
        if self.nt < 1 or self.nr < 1:
            raise ContractError("nt and nr must be >= 1")
        rows, d = self._dims()
        self.n_features_in_ = rows * d + rows
        self.is_fitted_ = True
        return self

    def predict_result(self, X, sigma=None):
        check_is_fitted(self)
        rows, d = self._dims()
        H, y = unpack_problems(X, rows, d)
        return self._detect(H, y, self._sigma(H.shape[0], sigma))

    def predict(self, X, sigma=None) -> np.ndarray:
        return self.predict_result(X, sigma).hard

    def decision_function(self, X, sigma=None) -> np.ndarray:
        """Soft estimates before slicing."""
        return self.predict_result(X, sigma).soft

    def score(self, X, y, sigma=None) -> float:
        pred = self.predict(X, sigma)
        return 1.0 - bit_error_rate(check_symbols(y, *pred.shape), pred)


class ZeroForcingDetector(_DetectorBase):
    def __init__(self, nt=4, nr=8, modulation="bpsk"):
        self.nt = nt
        self.nr = nr
        self.modulation = modulation

    def _detect(self, H, y, sigma):
        return zf_detect(H, y, self.modulation)


class MMSEDetector(_DetectorBase):
    """Linear MMSE; noise std from ``predict(..., sigma=)`` or from ``snr_db``."""

    def __init__(self, nt=4, nr=8, modulation="bpsk", snr_db=None):
        self.nt = nt
        self.nr = nr
        self.modulation = modulation
        self.snr_db = snr_db

    def _detect(self, H, y, sigma):
        if sigma is None:
            raise ContractError("MMSE needs sigma at predict time or snr_db at construction")
        return mmse_detect(H, y, sigma, self.modulation)


class MLDetector(_DetectorBase):
    def __init__(self, nt=4, nr=8, modulation="bpsk"):
        self.nt = nt
        self.nr = nr
        self.modulation = modulation

    def _detect(self, H, y, sigma):
        return ml_detect(H, y, self.modulation)


class SDRDetector(_DetectorBase):
    def __init__(self, nt=4, nr=8, modulation="bpsk", admm_iterations=500, rho=0.1,
                 rounding_samples=100, random_state=0):
        self.nt = nt
        self.nr = nr
        self.modulation = modulation
        self.admm_iterations = admm_iterations
        self.rho = rho
        self.rounding_samples = rounding_samples
        self.random_state = random_state

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.sdr_config_ = SdrConfig(admm_iterations=self.admm_iterations, rho=self.rho,
                                     rounding_samples=self.rounding_samples)
        return self

    def _detect(self, H, y, sigma):
        return sdr_detect(H, y, self.sdr_config_, self.random_state, self.modulation)


class WeSNetDetector(_DetectorBase):
    """Weight-scaled unfolded detector trained on synthetic transmissions.

    After ``fit``: ``params_``, ``config_`` (a :class:`NetConfig`),
    ``loss_curve_`` and ``adam_``. ``truncate_layers`` limits how many layers
    run at prediction time.
    """

    def __init__(self, nt=4, nr=8, modulation="bpsk", layers=12, profile="halfexp",
                 keep_fraction=0.5, learnable_beta=False, lam=1e-3, iterations=2000,
                 batch=500, snr_lo=8.0, snr_hi=14.0, learning_rate=1e-2,
                 lr_schedule="cosine", lr_min=1e-3, random_state=0, truncate_layers=None):
        self.nt = nt
        self.nr = nr
        self.modulation = modulation
        self.layers = layers
        self.profile = profile
        self.keep_fraction = keep_fraction
        self.learnable_beta = learnable_beta
        self.lam = lam
        self.iterations = iterations
        self.batch = batch
        self.snr_lo = snr_lo
        self.snr_hi = snr_hi
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.lr_min = lr_min
        self.random_state = random_state
        self.truncate_layers = truncate_layers

    def _net_config(self) -> NetConfig:
        return NetConfig(nt=self.nt, nr=self.nr, modulation=self.modulation,
                         layers=self.layers, profile=self.profile,
                         keep_fraction=self.keep_fraction, learnable_beta=self.learnable_beta,
                         lam=self.lam)

    def fit(self, X=None, y=None, callback=None):
        cfg = self._net_config()
        tcfg = TrainConfig(iterations=self.iterations, batch=self.batch, snr_lo=self.snr_lo,
                           snr_hi=self.snr_hi, seed=self.random_state,
                           learning_rate=self.learning_rate, lr_schedule=self.lr_schedule,
                           lr_min=self.lr_min)
        result = train(cfg, tcfg, callback=callback)
        self.config_ = cfg
        self.params_ = result.params
        self.loss_curve_ = result.losses
        self.adam_ = result.adam
        rows, d = self._dims()
        self.n_features_in_ = rows * d + rows
        return self

    @classmethod
    def from_checkpoint(cls, ckpt, truncate_layers=None) -> "WeSNetDetector":
        """Wrap a loaded :class:`~wesnet.checkpoint.Checkpoint` without training."""
        c = ckpt.net_config
        est = cls(nt=c.nt, nr=c.nr, modulation=c.modulation, layers=c.layers,
                  profile=c.profile, keep_fraction=c.keep_fraction,
                  learnable_beta=c.learnable_beta, lam=c.lam, truncate_layers=truncate_layers)
        est.config_ = c
        est.params_ = ckpt.params
        est.adam_ = ckpt.adam
        rows, d = est._dims()
        est.n_features_in_ = rows * d + rows
        return est

    def _detect(self, H, y, sigma):
        return detect(self.params_, H, y, self.config_, self.truncate_layers)
