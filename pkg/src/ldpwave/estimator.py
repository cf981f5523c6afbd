"""Linear and hard-thresholded wavelet estimators built from privatised records."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import simpson

from .density import CoefficientSet, SlotLayout, expansion
from .privacy import MechanismConfig, PrivatizedRecord, RecordBatch, _sup_for_noise
from .wavelet import WaveletBasis

__all__ = [
    "CoefficientAccumulator",
    "DensityEstimate",
    "EstimatorConfig",
    "EstimatorError",
    "adaptive_estimate",
    "choose_adaptive_levels",
    "choose_linear_level",
    "empirical_coefficients",
    "estimate_extent",
    "evaluate",
    "linear_estimate",
    "threshold",
    "threshold_constant",
    "write_estimate",
    "write_grid",
]

MODES = ("Linear", "Adaptive")


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning inputs.  ``gamma_t`` defaults to ``r (N + 1)``; ``K`` overrides ``4 (L_bar + sigma)``."""

    mode: str
    n: int
    alpha: float
    s: float = 1.0
    N: int = 1
    r: float = 2.0
    nu: float = 2.0
    gamma_t: float | None = None
    L_bar: float = 1.0
    K: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise EstimatorError(f"mode must be one of {MODES}")
        if self.n < 1 or not self.alpha > 0:
            raise EstimatorError("need n >= 1 and alpha > 0")
        if self.r < 1 or not self.nu > 1 or self.N < 1 or not self.L_bar > 0 or not self.s > 0:
            raise EstimatorError("need r >= 1, nu > 1, N >= 1, L_bar > 0, s > 0")

    @property
    def threshold_gamma(self) -> float:
        return self.r * (self.N + 1) if self.gamma_t is None else float(self.gamma_t)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "n": int(self.n), "alpha": float(self.alpha), "s": float(self.s),
                "N": int(self.N), "r": float(self.r), "nu": float(self.nu),
                "gamma_t": self.threshold_gamma, "L_bar": float(self.L_bar), "K": self.K}


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    coeffs: CoefficientSet
    basis: WaveletBasis
    mode: str
    meta: dict = field(default_factory=dict)

    def __call__(self, xs, normalize: bool = False):
        return evaluate(self, xs, normalize=normalize)

    def to_json(self) -> dict:
        return {"mode": self.mode, "family": self.basis.family, "depth": self.basis.depth,
                "meta": self.meta, **self.coeffs.to_json()}


# --------------------------------------------------------------------------
# Empirical coefficients


class CoefficientAccumulator:
    """Running ``(sum, count)`` of record values; partial accumulators merge exactly."""

    def __init__(self, layout: SlotLayout):
        self.layout = layout
        self.total = np.zeros(layout.size)
        self.count = 0

    def add(self, values: np.ndarray) -> "CoefficientAccumulator":
        values = np.atleast_2d(values)
        if values.shape[1] != self.layout.size:
            raise EstimatorError("record layout does not match")
        self.total += values.sum(axis=0)
        self.count += values.shape[0]
        return self

    def merge(self, other: "CoefficientAccumulator") -> "CoefficientAccumulator":
        if other.layout != self.layout:
            raise EstimatorError("inconsistent layouts")
        self.total += other.total
        self.count += other.count
        return self

    def result(self) -> CoefficientSet:
        if self.count == 0:
            raise EstimatorError("no records")
        return CoefficientSet(self.layout, self.total / self.count)


def empirical_coefficients(records: RecordBatch | Sequence[PrivatizedRecord]) -> CoefficientSet:
    """Slot-wise mean of the released values."""
    if isinstance(records, RecordBatch):
        if len(records) == 0:
            raise EstimatorError("empty record set")
        return CoefficientSet(records.layout, records.values.mean(axis=0))
    records = list(records)
    if not records:
        raise EstimatorError("empty record set")
    layout = records[0].layout
    acc = CoefficientAccumulator(layout)
    for rec in records:
        if rec.layout != layout:
            raise EstimatorError("inconsistent layouts")
        acc.add(rec.values)
    return acc.result()


# --------------------------------------------------------------------------
# Level and threshold rules


def choose_linear_level(n: int, alpha: float, s: float) -> int:
    """``floor(log2(min((n alpha^2)^(1/(2s+2)), n^(1/(2s+1)))))``, clamped at 0."""
    if n < 2 or not alpha > 0 or not s > 0:
        raise EstimatorError("need n >= 2, alpha > 0, s > 0")
    lg = min(math.log2(n * alpha**2) / (2 * s + 2), math.log2(n) / (2 * s + 1))
    return max(0, math.floor(lg + 1e-12))


def choose_adaptive_levels(n: int, alpha: float, N: int) -> tuple[int, int]:
    """Coarse and fine levels of the thresholded estimator.

    ``2^j0 ~ (n a^2)^(1/(2N+4)) ^ n^(1/(2N+3))``, ``2^j1' ~ n / ln n``,
    ``2^(2 j1'') ~ n a^2 / ln(n a^2)`` with unit constants and floors;
    ``j1 = max(j0, min(j1', j1''))``.
    """
    if n < 8:
        raise EstimatorError("adaptive rule needs n >= 8")
    na2 = n * alpha**2
    if na2 <= math.e:
        raise EstimatorError("privacy budget too small for adaptive rule at this n (n*alpha^2 <= e)")
    j0 = max(0, math.floor(min(math.log2(na2) / (2 * N + 4), math.log2(n) / (2 * N + 3)) + 1e-12))
    j1p = math.floor(math.log2(n / math.log(n)))
    j1pp = math.floor(0.5 * math.log2(na2 / math.log(na2)))
    return j0, max(j0, min(j1p, j1pp))


def threshold(j: int, n: int, alpha: float, gamma_t: float, nu: float) -> float:
    """``gamma_t (j v 1)^(nu + 1/2) / sqrt(n) * max(1, 2^(j/2) / alpha)``."""
    jj = max(j, 1)
    return gamma_t * jj ** (nu + 0.5) / math.sqrt(n) * max(1.0, 2.0 ** (j / 2.0) / alpha)


def threshold_constant(basis: WaveletBasis, nu: float, L_bar: float) -> float:
    """``K = 4 (L_bar + sigma)`` with ``sigma = 4 c_A |psi|_inf (2 nu - 1)/(nu - 1)``."""
    _, psi_sup = _sup_for_noise(basis)
    sigma = 4.0 * basis.overlap_count_cA * psi_sup * (2.0 * nu - 1.0) / (nu - 1.0)
    return 4.0 * (L_bar + sigma)


# --------------------------------------------------------------------------
# Estimators


def _mechanism_dict(mechanism) -> dict | None:
    if mechanism is None:
        return None
    return mechanism.to_dict() if isinstance(mechanism, MechanismConfig) else dict(mechanism)


def linear_estimate(coeffs: CoefficientSet, basis: WaveletBasis, j1: int | None = None, mechanism=None) -> DensityEstimate:
    """Keep every empirical coefficient up to level ``j1``."""
    j1 = coeffs.j1 if j1 is None else j1
    if j1 > coeffs.j1:
        raise EstimatorError(f"j1={j1} exceeds available level {coeffs.j1}")
    kept = coeffs.truncate(j1)
    mech = _mechanism_dict(mechanism)
    flags = []
    if mech is not None and mech.get("variant") == "Mechanism2":
        flags.append("off-theorem configuration: linear estimator on Mechanism2 records")
    meta = {"j0": kept.j0, "j1": kept.j1, "flags": flags,
            "kept": {str(lab): len(ks) for lab, _, _, ks, _ in kept.layout.blocks()}}
    return DensityEstimate(kept, basis, "Linear", meta)


def adaptive_estimate(coeffs: CoefficientSet, basis: WaveletBasis, config: EstimatorConfig, mechanism=None) -> DensityEstimate:
    """Keep scaling coefficients; keep ``beta_jk`` only when ``|beta_jk| >= K t_j``."""
    mech = _mechanism_dict(mechanism)
    flags = []
    if mech is not None:
        if mech.get("variant") == "Mechanism2" and abs(float(mech.get("nu", config.nu)) - config.nu) > 1e-12:
            raise EstimatorError(f"estimator nu={config.nu} does not match mechanism nu={mech['nu']}")
        if mech.get("variant") != "Mechanism2":
            flags.append("off-theorem configuration: adaptive estimator on Mechanism1 records")
    K = threshold_constant(basis, config.nu, config.L_bar) if config.K is None else float(config.K)
    values = np.array(coeffs.values)
    thresholds, kept = {}, {str(coeffs.j0 - 1): len(coeffs.layout.father)}
    for j in range(coeffs.j0, coeffs.j1 + 1):
        cut = K * threshold(j, config.n, config.alpha, config.threshold_gamma, config.nu)
        sl = coeffs.layout.level_slice(j)
        keep = np.abs(values[sl]) >= cut
        values[sl] = np.where(keep, values[sl], 0.0)
        thresholds[str(j)] = cut
        kept[str(j)] = int(keep.sum())
    meta = {"j0": coeffs.j0, "j1": coeffs.j1, "K": K, "thresholds": thresholds, "kept": kept, "flags": flags,
            "config": config.to_dict()}
    return DensityEstimate(coeffs.replace(values), basis, "Adaptive", meta)


def estimate_extent(basis: WaveletBasis, layout: SlotLayout) -> tuple[float, float]:
    """Smallest interval containing the supports of all slots."""
    lo, hi = math.inf, -math.inf
    for _, kind, j, ks, _ in layout.blocks():
        a, b = basis.support(kind)
        lo = min(lo, (ks.start + a) / 2.0**j)
        hi = max(hi, (ks.stop - 1 + b) / 2.0**j)
    return lo, hi


def evaluate(estimate: DensityEstimate, xs, normalize: bool = False) -> np.ndarray:
    """Finite expansion at ``xs``.

    ``normalize=True`` applies positive part and rescales to unit mass; this
    is for display only and is not the analysed estimator.
    """
    out = expansion(estimate.coeffs, estimate.basis, xs)
    if not normalize:
        return out
    lo, hi = estimate_extent(estimate.basis, estimate.coeffs.layout)
    grid = np.linspace(lo, hi, 2**14 + 1)
    mass = simpson(np.maximum(expansion(estimate.coeffs, estimate.basis, grid), 0.0), x=grid)
    return np.maximum(out, 0.0) / mass if mass > 0 else np.zeros_like(out)


def write_estimate(path: str | Path, estimate: DensityEstimate) -> Path:
    path = Path(path)
    path.write_text(json.dumps(estimate.to_json(), indent=1, sort_keys=True) + "\n")
    return path


def write_grid(path: str | Path, estimate: DensityEstimate, xs: Iterable[float], normalize: bool = False) -> Path:
    path = Path(path)
    xs = np.asarray(list(xs), dtype=float)
    ys = evaluate(estimate, xs, normalize=normalize)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "fhat"])
        w.writerows((repr(float(a)), repr(float(b))) for a, b in zip(xs, ys))
    return path
