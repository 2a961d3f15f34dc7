"""Analytic FLOP formulas, parameter counts and measured operation counts.

Formula coefficients such as 56/3 are evaluated with :class:`fractions.Fraction`
and converted to an integer only at the end (floor, which is exact whenever
the formula yields an integer).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exceptions import ContractError


class Expr(str, enum.Enum):
    VEC_SCALE = "vec_scale"
    MAT_SCALE = "mat_scale"
    MATVEC = "matvec"
    MATMAT = "matmat"
    MATDIAG = "matdiag"
    INNER = "inner"
    OUTER = "outer"
    GRAM = "gram"
    EUCLID_NORM = "euclid_norm"
    SPD_INVERSE = "spd_inverse"


# which of M, N, L each basic expression needs
_DIMS = {
    Expr.VEC_SCALE: "N", Expr.MAT_SCALE: "MN", Expr.MATVEC: "MN", Expr.MATMAT: "MNL",
    Expr.MATDIAG: "MN", Expr.INNER: "N", Expr.OUTER: "MN", Expr.GRAM: "MN",
    Expr.EUCLID_NORM: "MN", Expr.SPD_INVERSE: "N",
}


def table1_flops(expr, M=None, N=None, L=None) -> int:
    """FLOPs of a basic matrix/vector expression (A: MxN, B: NxL, Q: NxN)."""
    expr = Expr(expr)
    given = {"M": M, "N": N, "L": L}
    for name in _DIMS[expr]:
        if given[name] is None:
            raise ContractError(f"{expr.value} requires dimension {name}")
        if given[name] < 1:
            raise ContractError(f"dimension {name} must be positive")
    M, N, L = (Fraction(v) if v is not None else None for v in (M, N, L))
    if expr is Expr.VEC_SCALE:
        value = N
    elif expr in (Expr.MAT_SCALE, Expr.MATDIAG, Expr.OUTER):
        value = M * N
    elif expr is Expr.MATVEC:
        value = 2 * M * N - M
    elif expr is Expr.MATMAT:
        value = 2 * M * N * L - M * L
    elif expr is Expr.INNER:
        value = 2 * N - 1
    elif expr is Expr.GRAM:
        value = M * N**2 + N * (M - N / 2) - N / 2
    elif expr is Expr.EUCLID_NORM:
        value = 2 * M * N - 1
    else:
        value = N**3 + N**2 + N
    return _to_int(value)


def _to_int(value: Fraction) -> int:
    return math.floor(value)


class Detector(str, enum.Enum):
    ZF = "zf"
    MMSE = "mmse"
    ML = "ml"
    SDR = "sdr"
    WESNET = "wesnet"
    DETNET = "detnet"


def _require(extras, name, detector):
    if extras.get(name) is None:
        raise ContractError(f"{detector} FLOP formula requires '{name}'")
    return extras[name]


def detector_flops(detector, nt: int, constellation_size=None, n_iterations=None,
                   keep_fraction=None, layers=None) -> int:
    """Per-symbol-slot FLOPs of a detector at ``nt`` transmit antennas."""
    det = Detector(str(getattr(detector, "value", detector)).lower())
    if nt < 1:
        raise ContractError("nt must be >= 1")
    extras = dict(constellation_size=constellation_size, n_iterations=n_iterations,
                  keep_fraction=keep_fraction, layers=layers)
    n = Fraction(nt)
    if det is Detector.ZF:
        value = Fraction(56, 3) * n**3 + 38 * n**2 + Fraction(28, 3) * n
    elif det is Detector.MMSE:
        value = Fraction(56, 3) * n**3 + 40 * n**2 + Fraction(34, 3) * n + 1
    elif det is Detector.ML:
        size = _require(extras, "constellation_size", det.value)
        value = Fraction(size) ** nt * (8 * n**2 + 8 * n - 2)
    elif det is Detector.SDR:
        iters = _require(extras, "n_iterations", det.value)
        value = (13 * n**3 + 25 * n**2 + 17 * n + 4) * iters
    elif det is Detector.WESNET:
        keep = Fraction(str(_require(extras, "keep_fraction", det.value)))
        n_layers = _require(extras, "layers", det.value)
        value = (keep * n * (128 * n + 5) + 9 * n) * n_layers
    else:
        n_layers = _require(extras, "layers", det.value)
        value = n * (128 * n - 2) * n_layers
    return _to_int(value)


def mlp_forward_flops(layer_sizes: Sequence[int]) -> int:
    """Feed-forward cost ``N_matmul + N_g`` of a chain of layer sizes.

    ``N_matmul = sum_{r=2}^{L} N[r] N[r-1] N[r-2] + N[1] N[0]`` and
    ``N_g = sum_{r=1}^{L} N[r]``, with ``N[0]`` the input size.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ContractError("need at least an input and one layer size")
    if any(s < 1 for s in sizes):
        raise ContractError("layer sizes must be positive")
    matmul = sizes[1] * sizes[0]
    matmul += sum(sizes[r] * sizes[r - 1] * sizes[r - 2] for r in range(2, len(sizes)))
    activations = sum(sizes[1:])
    return matmul + activations


def detnet_layer_matvec_flops(d: int) -> int:
    """Matrix-vector FLOPs of one unfolded layer (three sublayers, no biases)."""
    return (table1_flops("matvec", M=8 * d, N=5 * d) + table1_flops("matvec", M=d, N=8 * d)
            + table1_flops("matvec", M=2 * d, N=8 * d))


def wesnet_param_count(cfg, active_only: bool = False) -> int:
    """Learnable parameters: ``64 d^2 + 11 d`` per layer, plus ``8d`` for learnable profiles.

    With ``active_only`` only weights attached to kept hidden units count
    (``8d + 1`` per kept unit plus the ``W2``/``W3`` biases).
    """
    d = cfg.d
    if active_only:
        kept = math.ceil(round(cfg.keep_fraction * cfg.hidden, 9))
        per_layer = kept * (8 * d + 1) + 3 * d
    else:
        per_layer = 64 * d * d + 11 * d
    if cfg.learnable_beta:
        per_layer += 8 * d
    return per_layer * cfg.layers


@dataclass
class ComplexityReport:
    detector: str
    nt: int
    analytic_flops: int
    measured_macs: Optional[int] = None
    parameters: int = 0
    layers: Optional[int] = None
    keep_fraction: Optional[float] = None
    assumptions: list = field(default_factory=list)

    def __post_init__(self):
        if self.analytic_flops < 0:
            raise ContractError("analytic_flops must be non-negative")
        if self.detector in ("sdr", "wesnet", "detnet") and not self.assumptions:
            raise ContractError(f"{self.detector} report must list its assumptions")


def measured_macs(params, cfg, layers_to_run=None, sparse: bool = True, seed: int = 0,
                  drop: str = "trailing"):
    """Instrumented per-sample operation count of one forward pass.

    Returns the :class:`~wesnet.network.MacCounter`; ``.total`` is the headline
    number (multiply and add counted separately).
    """
    from .mimo import generate_batch
    from .network import MacCounter, network_forward

    batch = generate_batch(seed, cfg.nt, cfg.nr, cfg.constellation, 10.0, 10.0, 1)
    counter = MacCounter()
    network_forward(params, batch.H, batch.y, cfg, layers_to_run, sparse=sparse,
                    counter=counter, drop=drop)
    return counter


def classical_report(detector, nt: int, constellation_size: int = 2,
                     n_iterations: Optional[int] = None) -> ComplexityReport:
    det = Detector(detector)
    assumptions = []
    if det is Detector.SDR:
        assumptions = [f"N_iterations={n_iterations}"]
    return ComplexityReport(
        detector=det.value, nt=nt,
        analytic_flops=detector_flops(det, nt, constellation_size=constellation_size,
                                      n_iterations=n_iterations),
        assumptions=assumptions)


def network_report(params, cfg, layers_to_run=None, detnet: bool = False) -> ComplexityReport:
    """Analytic and measured cost of a (possibly truncated) network."""
    layers = cfg.layers if layers_to_run is None else layers_to_run
    keep = 1.0 if detnet else cfg.keep_fraction
    if detnet:
        flops = detector_flops(Detector.DETNET, cfg.nt, layers=layers)
    else:
        flops = detector_flops(Detector.WESNET, cfg.nt, keep_fraction=keep, layers=layers)
    counter = measured_macs(params, cfg, layers_to_run, sparse=not detnet)
    return ComplexityReport(
        detector="detnet" if detnet else "wesnet", nt=cfg.nt, analytic_flops=flops,
        measured_macs=counter.total,
        parameters=wesnet_param_count(cfg) * layers // cfg.layers,
        layers=layers, keep_fraction=keep,
        assumptions=[f"L={layers}", f"keep_fraction={keep}", f"d={cfg.d}",
                     f"profile={cfg.profile}"])


def relative_gap(a, b) -> float:
    return float(abs(np.float64(a) - b) / max(abs(b), 1))
