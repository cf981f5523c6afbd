"""Ground-truth densities, wavelet coefficient sets and Besov norms."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .wavelet import WaveletBasis, active_shifts, eval_scaled, level_values

__all__ = [
    "CDF_POINTS",
    "CoefficientSet",
    "Density",
    "DensityError",
    "SlotLayout",
    "besov_norm",
    "coefficients_from_json",
    "density_from_json",
    "density_to_json",
    "expansion",
    "make_hypothesis_density",
    "make_reference_density",
    "packing_shifts",
    "sample",
    "slot_entries",
    "uniform_density",
    "validate_density",
    "wavelet_coefficients",
]

CDF_POINTS = 2**17


class DensityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Density:
    """A probability density supported in ``[-T, T]``.

    ``fn`` must be vectorised.  ``sup`` is an upper bound on the density used
    for concentration constants; ``flat``/``c0`` describe a region where the
    density is constant (needed to plant hypothesis perturbations).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    T: float
    label: str
    sup: float
    flat: tuple[float, float] | None = None
    c0: float | None = None
    meta: dict = field(default_factory=dict)
    cdf_table: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        x = np.linspace(-self.T, self.T, CDF_POINTS + 1)
        f = self.eval(x)
        F = np.concatenate([[0.0], cumulative_simpson(f, x=x)])
        F = np.maximum.accumulate(np.clip(F, 0.0, None))
        F /= F[-1]
        object.__setattr__(self, "cdf_table", (x, F))

    @property
    def support(self) -> tuple[float, float]:
        return (-self.T, self.T)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= -self.T) & (x <= self.T)
        return np.where(inside, self.fn(np.where(inside, x, 0.0)), 0.0)

    __call__ = eval


def validate_density(d: Density, tol: float = 1e-6) -> None:
    """Raise :class:`DensityError` unless mass, support and CDF checks pass."""
    x = np.linspace(-d.T, d.T, CDF_POINTS + 1)
    f = d.eval(x)
    if np.any(f < -1e-12):
        raise DensityError(f"{d.label}: negative values (min {f.min():.3g})")
    mass = simpson(f, x=x)
    if abs(mass - 1.0) > tol:
        raise DensityError(f"{d.label}: mass {mass:.9f} differs from 1")
    outside = d.eval(np.array([-d.T - 1e-9, d.T + 1e-9, -2 * d.T - 1, 2 * d.T + 1]))
    if np.any(outside != 0.0):
        raise DensityError(f"{d.label}: non-zero outside [-T, T]")
    _, F = d.cdf_table
    if np.any(np.diff(F) < 0) or abs(F[0]) > tol or abs(F[-1] - 1.0) > tol:
        raise DensityError(f"{d.label}: malformed CDF table")


def _smoothstep5(t):
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _bump(t):
    # unit-mass C2 bump on [0, 1], vanishing with two derivatives at both ends
    return 140.0 * t**3 * (1.0 - t) ** 3


def make_reference_density(T: float = 1.0, c0: float = 0.5, flat: tuple[float, float] = (-0.5, 0.5)) -> Density:
    """C2 density equal to ``c0`` on ``flat`` and zero outside ``[-T, T]``.

    Each shoulder is a quintic smoothstep ramp from 0 to ``c0`` plus a
    polynomial bump; the bump heights are set so that both shoulders carry
    mass ``(1 - c0 (b - a)) / 2``.
    """
    a, b = map(float, flat)
    if not -T < a < b < T:
        raise DensityError("flat interval must lie strictly inside (-T, T)")
    if c0 <= 0 or c0 * (b - a) >= 1.0:
        raise DensityError(f"infeasible mass: c0*(b-a) = {c0 * (b - a):.3g} must be in (0, 1)")
    m = (1.0 - c0 * (b - a)) / 2.0
    wl, wr = a + T, T - b
    hl, hr = m / wl - c0 / 2.0, m / wr - c0 / 2.0

    def fn(x):
        tl = np.clip((x + T) / wl, 0.0, 1.0)
        tr = np.clip((T - x) / wr, 0.0, 1.0)
        left = c0 * _smoothstep5(tl) + hl * _bump(tl)
        right = c0 * _smoothstep5(tr) + hr * _bump(tr)
        return np.where(x < a, left, np.where(x > b, right, c0))

    grid = np.linspace(-T, T, 20001)
    vals = fn(grid)
    if vals.min() < -1e-12:
        raise DensityError("shoulder shape goes negative for these parameters")
    return Density(fn, float(T), f"reference(T={T:g},c0={c0:g},flat=[{a:g},{b:g}])",
                   sup=float(vals.max()) * 1.0001, flat=(a, b), c0=float(c0))


def uniform_density(a: float = 0.0, b: float = 1.0, T: float | None = None) -> Density:
    """Uniform density on ``[a, b)`` viewed inside ``[-T, T]``."""
    if T is None:
        T = max(abs(a), abs(b))
    if not (-T <= a < b <= T):
        raise DensityError("uniform interval must lie inside [-T, T]")
    c = 1.0 / (b - a)
    return Density(lambda x: np.where((x >= a) & (x < b), c, 0.0), float(T),
                   f"uniform[{a:g},{b:g})", sup=c, flat=(a, b), c0=c)


def packing_shifts(basis: WaveletBasis, j: int, a: float, b: float) -> list[int]:
    """Greedy left-to-right set of shifts with pairwise disjoint mother supports inside ``[a, b]``.

    Supports that merely touch at an endpoint count as disjoint.
    """
    lo, hi = basis.support_mother
    width = hi - lo
    scale = 2.0**j
    k = math.ceil(a * scale - lo)
    out = []
    while (k + hi) / scale <= b:
        out.append(k)
        k += int(math.ceil(width))
    return out


def make_hypothesis_density(f0: Density, basis: WaveletBasis, j: int, theta: Sequence[int], gamma: float) -> Density:
    """``f0 + gamma * sum_k theta_k psi_jk`` over the packing of ``f0``'s flat region."""
    if f0.flat is None or f0.c0 is None:
        raise DensityError("base density has no flat region")
    shifts = packing_shifts(basis, j, *f0.flat)
    if not shifts:
        raise DensityError(f"no disjoint mother supports fit inside {f0.flat} at level {j}")
    theta = np.asarray(theta, dtype=int)
    if theta.shape != (len(shifts),) or np.any((theta != 0) & (theta != 1)):
        raise DensityError(f"theta must be a 0/1 vector of length {len(shifts)}")
    bump = abs(gamma) * 2.0 ** (j / 2.0) * basis.sup_mother
    if bump > f0.c0:
        raise DensityError(f"gamma*2^(j/2)*|psi|_inf = {bump:.4g} exceeds c0 = {f0.c0:.4g}")
    active = [k for k, t in zip(shifts, theta) if t]

    def fn(x):
        out = f0.fn(x)
        for k in active:
            out = out + gamma * eval_scaled(basis, "mother", j, k, x)
        return out

    return Density(fn, f0.T, f"{f0.label}+hyp(j={j},gamma={gamma:g},active={active})",
                   sup=f0.sup + (bump if active else 0.0),
                   meta={"j": j, "shifts": shifts, "active": active, "gamma": gamma})


def sample(density: Density, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws by inverse-CDF lookup in ``density.cdf_table``."""
    if n == 0:
        return np.empty(0)
    rng = np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))
    return inverse_cdf(density, rng.random(n))


def inverse_cdf(density: Density, u: np.ndarray) -> np.ndarray:
    x, F = density.cdf_table
    i = np.clip(np.searchsorted(F, u, side="right"), 1, len(F) - 1)
    f_lo, f_hi = F[i - 1], F[i]
    frac = np.where(f_hi > f_lo, (u - f_lo) / np.where(f_hi > f_lo, f_hi - f_lo, 1.0), 0.0)
    return x[i - 1] + frac * (x[i] - x[i - 1])


# --------------------------------------------------------------------------
# Coefficient layouts


@dataclass(frozen=True)
class SlotLayout:
    """Slot order for one configuration.

    Level ``j0 - 1`` carries the father wavelets at scale ``j0``; levels
    ``j0 .. j1`` carry mother wavelets.  Slots are flattened level by level.
    """

    j0: int
    j1: int
    father: range
    mother: tuple[range, ...]

    @classmethod
    def build(cls, basis: WaveletBasis, j0: int, j1: int, T: float) -> "SlotLayout":
        if j1 < j0:
            raise ValueError(f"j1={j1} < j0={j0}")
        return cls(j0, j1, active_shifts(basis, "father", j0, T),
                   tuple(active_shifts(basis, "mother", j, T) for j in range(j0, j1 + 1)))

    def blocks(self) -> Iterator[tuple[int, str, int, range, int]]:
        """Yield ``(level label, kind, scale, shifts, offset)`` per level."""
        yield self.j0 - 1, "father", self.j0, self.father, 0
        off = len(self.father)
        for j, ks in zip(range(self.j0, self.j1 + 1), self.mother):
            yield j, "mother", j, ks, off
            off += len(ks)

    @property
    def size(self) -> int:
        return len(self.father) + sum(len(r) for r in self.mother)

    def level_slice(self, level: int) -> slice:
        for lab, _, _, ks, off in self.blocks():
            if lab == level:
                return slice(off, off + len(ks))
        raise KeyError(level)

    def labels(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-slot ``(level label, shift)`` arrays."""
        lv = np.concatenate([np.full(len(ks), lab) for lab, _, _, ks, _ in self.blocks()])
        kk = np.concatenate([np.arange(ks.start, ks.stop) for _, _, _, ks, _ in self.blocks()])
        return lv.astype(np.int64), kk.astype(np.int64)

    def truncate(self, j1: int) -> "SlotLayout":
        if not self.j0 - 1 <= j1 <= self.j1:
            raise ValueError(f"cannot truncate levels {self.j0}..{self.j1} at {j1}")
        return SlotLayout(self.j0, max(j1, self.j0), self.father, self.mother[: j1 - self.j0 + 1])

    def to_dict(self) -> dict:
        return {"j0": self.j0, "j1": self.j1, "father": [self.father.start, self.father.stop],
                "mother": [[r.start, r.stop] for r in self.mother]}

    @classmethod
    def from_dict(cls, d: dict) -> "SlotLayout":
        return cls(d["j0"], d["j1"], range(*d["father"]), tuple(range(*r) for r in d["mother"]))


def slot_entries(basis: WaveletBasis, layout: SlotLayout, x) -> tuple[np.ndarray, np.ndarray]:
    """Sparse slot evaluations at points ``x``.

    Returns ``(idx, val)`` of shape ``(len(x), M)``: slot indices (``-1`` where
    the shift falls outside the layout) and basis values.  Each point touches
    at most the support length of the generator per level.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    idx_parts, val_parts = [], []
    for _, kind, j, ks, off in layout.blocks():
        kk, vv = level_values(basis, kind, j, x)
        ok = (kk >= ks.start) & (kk < ks.stop)
        idx_parts.append(np.where(ok, kk - ks.start + off, -1))
        val_parts.append(np.where(ok, vv, 0.0))
    return np.concatenate(idx_parts, axis=1), np.concatenate(val_parts, axis=1)


def slot_matrix(basis: WaveletBasis, layout: SlotLayout, x) -> np.ndarray:
    """Dense ``(len(x), layout.size)`` matrix of basis values."""
    idx, val = slot_entries(basis, layout, x)
    out = np.zeros((idx.shape[0], layout.size))
    rows = np.broadcast_to(np.arange(idx.shape[0])[:, None], idx.shape)
    ok = idx >= 0
    np.add.at(out, (rows[ok], idx[ok]), val[ok])
    return out


def slot_sums(basis: WaveletBasis, layout: SlotLayout, x, chunk: int = 1 << 16) -> np.ndarray:
    """``sum_i g_s(x_i)`` for every slot ``s``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    total = np.zeros(layout.size)
    for start in range(0, len(x), chunk):
        idx, val = slot_entries(basis, layout, x[start : start + chunk])
        ok = idx >= 0
        total += np.bincount(idx[ok], weights=val[ok], minlength=layout.size)
    return total


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Scaling coefficients at ``j0`` and detail coefficients at ``j0..j1``."""

    layout: SlotLayout
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.layout.size,):
            raise ValueError(f"expected {self.layout.size} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def j0(self) -> int:
        return self.layout.j0

    @property
    def j1(self) -> int:
        return self.layout.j1

    @property
    def alpha(self) -> dict[int, float]:
        sl = self.layout.level_slice(self.j0 - 1)
        return dict(zip(self.layout.father, self.values[sl].tolist()))

    def beta(self, j: int) -> dict[int, float]:
        sl = self.layout.level_slice(j)
        return dict(zip(self.layout.mother[j - self.j0], self.values[sl].tolist()))

    def level(self, level: int) -> np.ndarray:
        return self.values[self.layout.level_slice(level)]

    def triples(self) -> list[tuple[int, int, float]]:
        lv, kk = self.layout.labels()
        return [(int(a), int(b), float(c)) for a, b, c in zip(lv, kk, self.values)]

    def truncate(self, j1: int) -> "CoefficientSet":
        lay = self.layout.truncate(j1)
        return CoefficientSet(lay, self.values[: lay.size])

    def replace(self, values) -> "CoefficientSet":
        return CoefficientSet(self.layout, values)

    def __add__(self, other: "CoefficientSet") -> "CoefficientSet":
        if other.layout != self.layout:
            raise ValueError("layouts differ")
        return CoefficientSet(self.layout, self.values + other.values)

    def to_json(self) -> dict:
        return {"layout": self.layout.to_dict(),
                "coefficients": [[j, k, v] for j, k, v in self.triples()]}


def coefficients_from_json(doc: dict) -> CoefficientSet:
    layout = SlotLayout.from_dict(doc["layout"])
    return CoefficientSet(layout, [c[2] for c in doc["coefficients"]])


def _slot_quadrature(basis: WaveletBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit-scale nodes, weights and generator values for one slot's support.

    Smooth bases use composite Simpson on the table grid (exact table values);
    piecewise-constant bases use three-point Gauss-Legendre per table cell so
    that no node sits on a jump.
    """
    a, b = basis.support_mother
    h = 2.0**-basis.depth
    grid = basis.grid
    if basis.piecewise_constant:
        gl_x, gl_w = np.polynomial.legendre.leggauss(3)
        left = grid[:-1]
        nodes = (left[:, None] + h * (gl_x[None, :] + 1.0) / 2.0).ravel()
        weights = np.tile(gl_w * h / 2.0, len(left))
        phi = np.repeat(basis.father[:-1], 3)
        psi = np.repeat(basis.mother[:-1], 3)
        return nodes, weights, np.stack([phi, psi])
    w = np.ones(len(grid))
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    return grid, w, np.stack([basis.father, basis.mother])


def wavelet_coefficients(density: Density, basis: WaveletBasis, j0: int, j1: int, T: float | None = None) -> CoefficientSet:
    """Quadrature coefficients ``int f g_jk`` for every slot of the layout.

    Each slot is integrated over its own support with ``(b - a) 2**depth``
    subintervals, which is at least ``2**(j1 + 6)`` points over ``[-T, T]``
    for the depths used here.
    """
    T = density.T if T is None else T
    layout = SlotLayout.build(basis, j0, j1, T)
    nodes, weights, gvals = _slot_quadrature(basis)
    out = np.empty(layout.size)
    for _, kind, j, ks, off in layout.blocks():
        g = gvals[0] if kind == "father" else gvals[1]
        scale = 2.0**j
        k = np.arange(ks.start, ks.stop, dtype=float)
        x = (k[:, None] + nodes[None, :]) / scale
        # int f(x) 2^{j/2} g(2^j x - k) dx = 2^{-j/2} int f((k+t)/2^j) g(t) dt
        out[off : off + len(ks)] = density.eval(x) @ (weights * g) / math.sqrt(scale)
    return CoefficientSet(layout, out)


def expansion(coeffs: CoefficientSet, basis: WaveletBasis, xs) -> np.ndarray:
    """Evaluate ``sum_s c_s g_s(x)`` touching only overlapping shifts."""
    xs = np.asarray(xs, dtype=float)
    flat = xs.reshape(-1)
    out = np.zeros(len(flat))
    padded = np.concatenate([coeffs.values, [0.0]])
    for start in range(0, len(flat), 1 << 16):
        idx, val = slot_entries(basis, coeffs.layout, flat[start : start + (1 << 16)])
        out[start : start + len(idx)] = np.sum(padded[idx] * val, axis=1)
    return out.reshape(xs.shape)


def besov_norm(coeffs: CoefficientSet, s: float, p: float, q: float) -> float:
    """Sequence-space Besov norm truncated at ``coeffs.j1``.

    ``||alpha_j0.||_p + (sum_j (2^{j(s+1/2-1/p)} ||beta_j.||_p)^q)^{1/q}``; the
    ``q = inf`` case takes the maximum over levels.  Levels above ``j1`` are
    not observed, so the value is a lower bound of the full norm.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if p < 1 or q < 1:
        raise ValueError("p and q must be >= 1")

    def lp(v):
        v = np.abs(np.asarray(v))
        if v.size == 0:
            return 0.0
        return float(v.max()) if math.isinf(p) else float(np.sum(v**p) ** (1.0 / p))

    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    head = lp(coeffs.level(coeffs.j0 - 1))
    terms = np.array([2.0 ** (j * (s + 0.5 - inv_p)) * lp(coeffs.level(j)) for j in range(coeffs.j0, coeffs.j1 + 1)])
    if terms.size == 0:
        return head
    tail = float(terms.max()) if math.isinf(q) else float(np.sum(terms**q) ** (1.0 / q))
    return head + tail


# --------------------------------------------------------------------------
# JSON


def density_to_json(d: Density, points: int = 4097) -> dict:
    x = np.linspace(-d.T, d.T, points)
    return {"label": d.label, "support": [-d.T, d.T], "sup": d.sup,
            "flat": list(d.flat) if d.flat else None, "c0": d.c0,
            "x": x.tolist(), "f": d.eval(x).tolist()}


def density_from_json(doc: dict) -> Density:
    """Rebuild a density from its gridded values (linear interpolation)."""
    x = np.asarray(doc["x"], dtype=float)
    f = np.asarray(doc["f"], dtype=float)
    T = float(doc["support"][1])
    return Density(lambda t: np.interp(t, x, f), T, doc["label"], sup=float(doc.get("sup", f.max())),
                   flat=tuple(doc["flat"]) if doc.get("flat") else None, c0=doc.get("c0"))


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=True)

