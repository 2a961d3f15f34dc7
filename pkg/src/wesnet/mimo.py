"""Real-valued MIMO channel model, symbol generation and BER scoring.

Conventions
-----------
* Complex channel entries are i.i.d. CN(0, 1).
* Symbols have unit average energy (BPSK: +-1, 4-QAM: (+-1 +- 1j)/sqrt(2)).
* SNR is ``E||Hs||^2 / E||n||^2``, giving a complex noise variance of
  ``Nt * Es * 10**(-snr_db / 10)``; :func:`noise_std_from_snr` returns the
  standard deviation of each *real* noise component.
* BPSK uses the stacked model ``[Re H; Im H]`` (signal dimension ``Nt``);
  4-QAM uses the full block form (signal dimension ``2 Nt``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, InputDomainError
from .rng import RngStream, as_stream


class Modulation(str, enum.Enum):
    BPSK = "bpsk"
    QAM4 = "qam4"


@dataclass(frozen=True)
class Constellation:
    kind: Modulation
    levels: tuple
    bits_per_real_dim: int = 1

    @classmethod
    def from_name(cls, name) -> "Constellation":
        kind = Modulation(str(getattr(name, "value", name)).lower())
        if kind is Modulation.BPSK:
            return cls(kind, (-1.0, 1.0))
        a = 1.0 / math.sqrt(2.0)
        return cls(kind, (-a, a))

    @property
    def level(self) -> float:
        """Largest amplitude, i.e. the saturation value of the soft sign."""
        return self.levels[-1]

    @property
    def energy_per_real_dim(self) -> float:
        return float(np.mean(np.square(self.levels)))

    def signal_dim(self, nt: int) -> int:
        return nt if self.kind is Modulation.BPSK else 2 * nt

    @property
    def size(self) -> int:
        """Number of complex constellation points, |S|."""
        return 2 if self.kind is Modulation.BPSK else 4


BPSK = Constellation.from_name("bpsk")
QAM4 = Constellation.from_name("qam4")


def _as_constellation(c) -> Constellation:
    return c if isinstance(c, Constellation) else Constellation.from_name(c)


@dataclass(frozen=True)
class ChannelRealization:
    """Complex channel(s) with their real-valued counterpart.

    Arrays may carry a leading batch dimension (one channel per sample).
    """

    h_complex: np.ndarray
    h_real: np.ndarray
    nt: int
    nr: int


@dataclass(frozen=True)
class TransmissionBatch:
    s: np.ndarray        # (B, d)
    y: np.ndarray        # (B, 2Nr)
    h: ChannelRealization  # h.h_real: (B, 2Nr, d)
    snr_db: np.ndarray   # (B,)
    sigma: np.ndarray    # (B,) per real component
    n: np.ndarray        # (B, 2Nr), the stored noise realization

    @property
    def H(self) -> np.ndarray:
        return self.h.h_real


def realify_channel(h_complex, constellation) -> ChannelRealization:
    """Real-valued representation of ``h_complex`` (shape ``(..., Nr, Nt)``)."""
    constellation = _as_constellation(constellation)
    h = np.asarray(h_complex, dtype=np.complex128)
    if h.ndim < 2 or h.shape[-1] < 1 or h.shape[-2] < 1:
        raise ContractError(f"channel must be (..., Nr, Nt) with Nr, Nt >= 1, got {h.shape}")
    if not np.all(np.isfinite(h)):
        raise InputDomainError("channel matrix has non-finite entries")
    re, im = h.real, h.imag
    if constellation.kind is Modulation.BPSK:
        hr = np.concatenate([re, im], axis=-2)
    else:
        top = np.concatenate([re, -im], axis=-1)
        bottom = np.concatenate([im, re], axis=-1)
        hr = np.concatenate([top, bottom], axis=-2)
    return ChannelRealization(h, np.ascontiguousarray(hr), h.shape[-1], h.shape[-2])


def noise_std_from_snr(snr_db, nt: int, es: float = 1.0):
    """Per-real-component noise std: ``sigma**2 = nt * es * 10**(-snr_db/10) / 2``.

    ``snr_db = inf`` yields 0 (noiseless).
    """
    if nt < 1 or es <= 0:
        raise ContractError("need nt >= 1 and es > 0")
    snr = np.asarray(snr_db, dtype=np.float64)
    if np.any(np.isnan(snr)) or np.any(snr == -np.inf):
        raise InputDomainError("snr_db must be finite or +inf")
    var = nt * es * np.power(10.0, -snr / 10.0) / 2.0
    out = np.sqrt(var)
    return float(out) if out.ndim == 0 else out


def generate_batch(rng, nt: int, nr: int, constellation, snr_lo: float, snr_hi: float,
                   batch: int, fixed_channel: bool = False) -> TransmissionBatch:
    """Draw ``batch`` transmissions ``y = H s + n``.

    One fresh channel per sample unless ``fixed_channel`` is set; per-sample
    SNR is uniform on ``[snr_lo, snr_hi]``.
    """
    constellation = _as_constellation(constellation)
    if batch < 1:
        raise ContractError("batch must be >= 1")
    if snr_lo > snr_hi:
        raise ContractError(f"snr_lo ({snr_lo}) > snr_hi ({snr_hi})")
    rng = as_stream(rng)
    n_ch = 1 if fixed_channel else batch
    scale = math.sqrt(0.5)
    hc = (rng.normal(0.0, scale, (n_ch, nr, nt))
          + 1j * rng.normal(0.0, scale, (n_ch, nr, nt)))
    if fixed_channel:
        hc = np.broadcast_to(hc, (batch, nr, nt)).copy()
    ch = realify_channel(hc, constellation)
    d = constellation.signal_dim(nt)
    levels = np.asarray(constellation.levels)
    s = levels[rng.integers(0, len(levels), (batch, d))]
    if snr_lo == snr_hi:
        snr = np.full(batch, float(snr_lo))
    else:
        snr = rng.uniform(snr_lo, snr_hi, batch)
    sigma = np.asarray(noise_std_from_snr(snr, nt, 1.0), dtype=np.float64).reshape(batch)
    n = rng.standard_normal((batch, 2 * nr)) * sigma[:, None]
    y = np.einsum("bij,bj->bi", ch.h_real, s) + n
    return TransmissionBatch(s=s, y=y, h=ch, snr_db=snr, sigma=sigma, n=n)


def hard_slice(x, constellation) -> np.ndarray:
    """Map each component to the nearest constellation level.

    Both supported constellations are antipodal, so this is a sign decision;
    exact zeros go to the positive level.
    """
    constellation = _as_constellation(constellation)
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, constellation.level, -constellation.level)


def bit_error_rate(s_true, s_est, constellation=None) -> float:
    """Fraction of wrong bits; one bit per real component for BPSK/4-QAM."""
    s_true = np.asarray(s_true)
    s_est = np.asarray(s_est)
    if s_true.shape != s_est.shape:
        raise ContractError(f"shape mismatch: {s_true.shape} vs {s_est.shape}")
    if s_true.size == 0:
        raise ContractError("empty input")
    return float(np.count_nonzero(bit_errors(s_true, s_est)) / s_true.size)


def bit_errors(s_true, s_est) -> np.ndarray:
    """Boolean error mask (sign disagreement per real component)."""
    return np.signbit(np.asarray(s_true)) != np.signbit(np.asarray(s_est))
