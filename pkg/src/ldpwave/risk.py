"""Monte Carlo risk, convergence-rate fitting and the concentration check."""
from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing as mp
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .density import Density, sample, slot_sums, wavelet_coefficients
from .estimator import (
    DensityEstimate,
    EstimatorConfig,
    adaptive_estimate,
    choose_adaptive_levels,
    choose_linear_level,
    empirical_coefficients,
    estimate_extent,
    evaluate,
    linear_estimate,
    threshold,
    threshold_constant,
)
from .privacy import MechanismConfig, privatize_batch, slot_scales
from .seeding import derive_seed, generator
from .wavelet import WaveletBasis, eval_scaled

__all__ = [
    "RateStudy",
    "RiskReport",
    "Scenario",
    "concentration_check",
    "fit_power_law",
    "lr_risk",
    "monte_carlo_risk",
    "rate_study",
    "theoretical_exponent",
]

log = logging.getLogger(__name__)

REGIMES = ("dense", "dense_nonhomogeneous", "sparse")


def _risk_grid_size(j1: int) -> int:
    return max(2 ** (j1 + 6), 2**14)


def lr_risk(estimate: DensityEstimate, truth: Density, r: float = 2.0, grid_size: int | None = None) -> float:
    """Composite-Simpson value of ``int |fhat - f|^r`` over the union of both supports."""
    if r < 1:
        raise ValueError("r must be >= 1")
    size = _risk_grid_size(estimate.coeffs.j1) if grid_size is None else int(grid_size)
    size += size % 2  # even number of panels
    lo, hi = estimate_extent(estimate.basis, estimate.coeffs.layout)
    lo, hi = min(lo, -truth.T), max(hi, truth.T)
    x = np.linspace(lo, hi, size + 1)
    diff = np.abs(evaluate(estimate, x) - truth.eval(x))
    return float(max(simpson(diff**r, x=x), 0.0))


def lr_distance(f: Callable, g: Callable, lo: float, hi: float, r: float = 2.0, grid_size: int = 2**14) -> float:
    x = np.linspace(lo, hi, grid_size + 1)
    return float(simpson(np.abs(f(x) - g(x)) ** r, x=x))


# --------------------------------------------------------------------------
# Scenarios and Monte Carlo


@dataclass(frozen=True, eq=False)
class Scenario:
    """Truth, basis and tuning rules; :meth:`configs` instantiates them at a sample size."""

    truth: Density
    basis: WaveletBasis
    mode: str = "Linear"
    alpha: float = 1.0
    s: float = 1.0
    N: int = 1
    r: float = 2.0
    nu: float = 2.0
    L_bar: float = 1.0
    K: float | None = None
    gamma_t: float | None = None
    variant: str | None = None
    scenario_id: str = "scenario"

    def configs(self, n: int) -> tuple[MechanismConfig, EstimatorConfig]:
        est = EstimatorConfig(self.mode, n, self.alpha, s=self.s, N=self.N, r=self.r, nu=self.nu,
                              gamma_t=self.gamma_t, L_bar=self.L_bar, K=self.K)
        if self.mode == "Linear":
            j0, j1 = 0, choose_linear_level(n, self.alpha, self.s)
            variant = self.variant or "Mechanism1"
        else:
            j0, j1 = choose_adaptive_levels(n, self.alpha, self.N)
            variant = self.variant or "Mechanism2"
        return MechanismConfig(variant, self.alpha, j0, j1, self.basis, self.truth.T, self.nu), est


@dataclass
class RiskReport:
    scenario_id: str
    n: int
    alpha: float
    r: float
    replications: int
    risk_mean: float
    risk_stderr: float
    per_replication: list[float]
    normalized: list[float] | None = None

    @classmethod
    def from_risks(cls, scenario_id, n, alpha, r, risks, normalized=None) -> "RiskReport":
        arr = np.asarray(risks, dtype=float)
        sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        return cls(scenario_id, int(n), float(alpha), float(r), len(arr), float(arr.mean()),
                   sd / math.sqrt(len(arr)), arr.tolist(), None if normalized is None else list(normalized))

    def to_dict(self) -> dict:
        d = {"scenario_id": self.scenario_id, "n": self.n, "alpha": self.alpha, "r": self.r,
             "replications": self.replications, "risk_mean": self.risk_mean, "risk_stderr": self.risk_stderr,
             "per_replication": self.per_replication}
        if self.normalized is not None:
            d["normalized_per_replication"] = self.normalized
            d["normalized_risk_mean"] = float(np.mean(self.normalized))
        return d


# Work shared with forked workers; set right before a pool starts.
_JOB: dict = {}


def _estimate_once(truth, mech: MechanismConfig, est: EstimatorConfig, master_seed: int, key: int,
                   aggregate: bool, noiseless: bool) -> DensityEstimate:
    n = est.n
    x = sample(truth, n, derive_seed(master_seed, key, 0))
    if aggregate or noiseless:
        total = slot_sums(mech.basis, mech.layout, x)
        if not noiseless:
            # a sum of n standard Laplace draws equals Gamma(n) - Gamma(n) in law
            rng = generator(master_seed, key, 1)
            g = rng.standard_gamma(n, size=(2, mech.layout.size))
            total = total + slot_scales(mech) * (g[0] - g[1])
        from .density import CoefficientSet

        coeffs = CoefficientSet(mech.layout, total / n)
    else:
        coeffs = empirical_coefficients(privatize_batch(x, mech, derive_seed(master_seed, key, 1)))
    if est.mode == "Linear":
        return linear_estimate(coeffs, mech.basis, mech.j1, mechanism=mech)
    return adaptive_estimate(coeffs, mech.basis, est, mechanism=mech)


def _replicate(key: int) -> tuple[float, float | None]:
    job = _JOB
    fhat = _estimate_once(job["truth"], job["mech"], job["est"], job["seed"], key, job["aggregate"], job["noiseless"])
    risk = lr_risk(fhat, job["truth"], job["r"])
    norm = None
    if job["normalized"]:
        lo, hi = estimate_extent(fhat.basis, fhat.coeffs.layout)
        lo, hi = min(lo, -job["truth"].T), max(hi, job["truth"].T)
        norm = lr_distance(lambda t: evaluate(fhat, t, normalize=True), job["truth"].eval, lo, hi, job["r"])
    return risk, norm


def _run_keys(keys: Sequence[int], workers: int) -> list[tuple[float, float | None]]:
    if workers <= 1 or len(keys) < 2:
        return [_replicate(k) for k in keys]
    ctx = mp.get_context("fork")
    with ctx.Pool(workers) as pool:
        return pool.map(_replicate, keys, chunksize=max(1, len(keys) // (4 * workers)))


def monte_carlo_risk(truth: Density, mechanism_config: MechanismConfig, estimator_config: EstimatorConfig,
                     reps: int, master_seed: int, *, r: float | None = None, workers: int = 1,
                     aggregate: bool = True, noiseless: bool = False, normalized: bool = False,
                     replication_keys: Sequence[int] | None = None, scenario_id: str = "scenario") -> RiskReport:
    """Replicate sample -> privatise -> estimate -> ``L^r`` risk.

    Replication ``i`` draws everything from seeds derived from
    ``(master_seed, key_i)`` so results do not depend on ``workers``.
    ``aggregate=True`` draws each slot's summed noise directly (exactly the
    law of the per-record sum); ``aggregate=False`` materialises every record.
    ``noiseless`` disables the Laplace noise (non-private reference).
    """
    if reps < 2:
        raise ValueError("reps must be >= 2")
    keys = list(range(reps)) if replication_keys is None else list(replication_keys)
    if len(keys) != reps:
        raise ValueError("replication_keys must have length reps")
    r = estimator_config.r if r is None else r
    _JOB.clear()
    _JOB.update(truth=truth, mech=mechanism_config, est=estimator_config, seed=int(master_seed), r=r,
                aggregate=aggregate, noiseless=noiseless, normalized=normalized)
    try:
        out = _run_keys(keys, workers)
    finally:
        _JOB.clear()
    risks = [a for a, _ in out]
    norms = [b for _, b in out] if normalized else None
    return RiskReport.from_risks(scenario_id, estimator_config.n, estimator_config.alpha, r, risks, norms)


# --------------------------------------------------------------------------
# Rates


def theoretical_exponent(s: float, p: float, q: float, r: float, alpha_regime: str = "private") -> tuple[float, str]:
    """Exponent of ``n`` in the minimax rate (log factors ignored) and the zone label.

    Zones: ``dense`` for ``p > r/(s+1)``, ``dense_nonhomogeneous`` for
    ``r/(2s+1) < p <= r/(s+1)``, ``sparse`` for ``p <= r/(2s+1)``.
    """
    if s <= 0 or p < 1 or q < 1 or r < 1 or s < 1.0 / p:
        raise ValueError(f"invalid parameters s={s}, p={p}, q={q}, r={r} (need s >= 1/p, p,q,r >= 1)")
    if alpha_regime not in ("private", "nonprivate"):
        raise ValueError("alpha_regime must be 'private' or 'nonprivate'")
    if p > r / (s + 1):
        zone = "dense"
    elif p > r / (2 * s + 1):
        zone = "dense_nonhomogeneous"
    else:
        zone = "sparse"
    sp = s - 1.0 / p
    if alpha_regime == "private":
        exp = r * s / (2 * s + 2) if zone == "dense" else r * (sp + 1.0 / r) / (2 * sp + 2)
    else:
        exp = r * s / (2 * s + 1) if p > r / (2 * s + 1) else r * (sp + 1.0 / r) / (2 * sp + 1)
    return exp, zone


def fit_power_law(ns, risks) -> tuple[float, float, float, np.ndarray]:
    """OLS of ``ln risk = a + b ln n``; returns ``(b, stderr(b), a, residuals)``."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(risks, dtype=float))
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = len(x) - 2
    if dof > 0:
        s2 = float(resid @ resid) / dof
        se = math.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        se = float("nan")
    return float(coef[1]), se, float(coef[0]), resid


@dataclass
class RateStudy:
    scenario_id: str
    n_grid: list[int]
    risks: list[RiskReport]
    fitted_exponent: float
    exponent_stderr: float
    intercept: float
    theoretical_exponent: float
    regime: str
    alpha_regime: str
    dropped: list[int] = field(default_factory=list)
    log_corrected_exponent: float | None = None
    fit_rows: list[tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"scenario_id": self.scenario_id, "n_grid": self.n_grid,
                "fitted_exponent": self.fitted_exponent, "exponent_stderr": self.exponent_stderr,
                "intercept": self.intercept, "theoretical_exponent": self.theoretical_exponent,
                "regime": self.regime, "alpha_regime": self.alpha_regime, "dropped_n": self.dropped,
                "log_corrected_exponent": self.log_corrected_exponent,
                "risks": [rep.to_dict() for rep in self.risks]}

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")
        return path

    def write_csv(self, path: str | Path) -> Path:
        """One row per ``(scenario, n, replication)``."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scenario", "n", "replication", "risk"])
            for rep in self.risks:
                for i, v in enumerate(rep.per_replication):
                    w.writerow([self.scenario_id, rep.n, i, repr(float(v))])
        return path

    def write_fit_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["ln_n", "ln_risk", "residual"])
            w.writerows([repr(a), repr(b), repr(c)] for a, b, c in self.fit_rows)
        return path


def summarize_rates(reports: Sequence[RiskReport], theory: tuple[float, float, float, float],
                    alpha_regime: str = "private", scenario_id: str = "scenario") -> RateStudy:
    """Fit the slope of a finished set of risk reports and attach the theoretical exponent."""
    reports = sorted(reports, key=lambda rep: rep.n)
    if len(reports) < 4:
        raise ValueError("need at least 4 sample sizes")
    used = list(reports)
    dropped = []
    if used[0].risk_stderr > 0.1 * used[0].risk_mean:
        log.info("dropping n=%d from the fit: stderr %.3g > 10%% of mean %.3g",
                 used[0].n, used[0].risk_stderr, used[0].risk_mean)
        dropped.append(used[0].n)
        used = used[1:]
    ns = [rep.n for rep in used]
    means = [rep.risk_mean for rep in used]
    b, se, a, resid = fit_power_law(ns, means)
    b_log, *_ = fit_power_law([n / math.log(n) for n in ns], means)
    s, p, q, r = theory
    exp, zone = theoretical_exponent(s, p, q, r, alpha_regime)
    rows = [(math.log(n), math.log(m), float(e)) for n, m, e in zip(ns, means, resid)]
    return RateStudy(scenario_id, [rep.n for rep in reports], list(reports), b, se, a, -exp, zone,
                     alpha_regime, dropped, b_log, rows)


def rate_study(truth: Density, config_family: Callable[[int], tuple[MechanismConfig, EstimatorConfig]],
               n_grid: Sequence[int], reps: int, master_seed: int, *,
               theory: tuple[float, float, float, float] = (1.0, 2.0, 2.0, 2.0), alpha_regime: str = "private",
               workers: int = 1, scenario_id: str = "scenario", **mc_kwargs) -> RateStudy:
    """Risk at every ``n`` of a geometric grid and the fitted decay exponent.

    Each ``n`` uses its own derived master seed, so the grid can be extended
    without changing earlier entries.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 4:
        raise ValueError("n_grid needs at least 4 entries")
    if any(b < 2 * a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be geometric with ratio >= 2")
    reports = []
    for n in n_grid:
        mech, est = config_family(n)
        reports.append(monte_carlo_risk(truth, mech, est, reps, derive_seed(master_seed, n), workers=workers,
                                        scenario_id=scenario_id, **mc_kwargs))
    return summarize_rates(reports, theory, alpha_regime, scenario_id)


# --------------------------------------------------------------------------
# Concentration


def concentration_check(truth: Density, mechanism_config: MechanismConfig, j: int, k: int, n: int,
                        gamma: float, reps: int, seed: int, c_bar: float | None = None) -> tuple[float, float]:
    """Empirical frequency of ``|beta_hat_jk - beta_jk| >= 4 (c_bar + sigma) gamma t_j`` and the bound ``2^(-gamma j)``.

    ``c_bar`` defaults to the truth's sup bound.
    """
    mech = mechanism_config
    if mech.variant != "Mechanism2":
        raise ValueError("the concentration bound is stated for Mechanism2")
    if not mech.j0 <= j <= mech.j1 or j > n or gamma < 1:
        raise ValueError("need j0 <= j <= j1, j <= n and gamma >= 1")
    c_bar = truth.sup if c_bar is None else c_bar
    beta = wavelet_coefficients(truth, mech.basis, j, j, truth.T).beta(j).get(k, 0.0)
    cut = threshold_constant(mech.basis, mech.nu, c_bar) * threshold(j, n, mech.alpha, gamma, mech.nu)
    sigma_j = _level_scale(mech, j)
    hits = 0
    for rep in range(reps):
        x = sample(truth, n, derive_seed(seed, rep, 0))
        g = generator(seed, rep, 1).standard_gamma(n, size=2)
        bhat = (np.sum(eval_scaled(mech.basis, "mother", j, k, x)) + sigma_j * (g[0] - g[1])) / n
        hits += abs(bhat - beta) >= cut
    return hits / reps, 2.0 ** (-gamma * j)


def _level_scale(mech: MechanismConfig, j: int) -> float:
    from .privacy import noise_scales

    return noise_scales(mech)[j]
