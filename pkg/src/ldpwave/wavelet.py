"""Compactly supported orthonormal wavelets tabulated on dyadic grids.

Daubechies filters are obtained by spectral factorisation; the scaling
function is evaluated exactly at the integers (eigenvector of the refinement
matrix for eigenvalue 1) and then refined dyadically with the cascade
recursion.  Off-grid values use linear interpolation (piecewise-constant
lookup for Haar).
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import comb

__all__ = [
    "FAMILIES",
    "SUP_SAFETY",
    "WaveletBasis",
    "active_shifts",
    "build_basis",
    "daubechies_filter",
    "dump_tables",
    "eval_scaled",
    "integer_values",
    "level_values",
    "sup_norms",
]

FAMILIES = ("Haar",) + tuple(f"Daubechies{n}" for n in range(2, 11))

#: Multiplier applied to tabulated sup-norms wherever they set privacy noise.
SUP_SAFETY = 1.001


class WaveletError(ValueError):
    pass


def _parse_family(family: str) -> tuple[str, int]:
    key = family.strip().lower()
    if key in ("haar", "db1", "daubechies1"):
        return "Haar", 1
    m = re.fullmatch(r"(?:db|daubechies)(\d+)", key)
    if m is None or not 2 <= int(m.group(1)) <= 10:
        raise WaveletError(f"unsupported wavelet family {family!r}; choose one of {FAMILIES}")
    n = int(m.group(1))
    return f"Daubechies{n}", n


def daubechies_filter(n_moments: int) -> np.ndarray:
    """Orthonormal Daubechies scaling filter with ``n_moments`` vanishing moments.

    Coefficients are ordered so that the scaling function lives on
    ``[0, 2N-1]`` (for N=2, ``phi(1) = (1+sqrt 3)/2``) and sum to ``sqrt 2``.
    """
    if n_moments == 1:
        return np.array([1.0, 1.0]) / math.sqrt(2.0)
    n = n_moments
    # P(y) = sum_k C(N-1+k, k) y^k, y = sin^2(w/2); roots mapped to z via y = (2 - z - 1/z)/4
    p = [comb(n - 1 + k, k, exact=True) for k in range(n)]
    y_roots = np.roots(p[::-1])
    z_roots = []
    for y in y_roots:
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        z_roots.append(pair[np.argmin(np.abs(pair))])
    roots = np.concatenate([-np.ones(n), np.array(z_roots)])
    h = np.real(np.poly(roots))
    return h * (math.sqrt(2.0) / h.sum())


def integer_values(filt: np.ndarray) -> np.ndarray:
    """Scaling-function values at ``0, 1, ..., len(filt)-1``.

    Solves ``phi(i) = sqrt2 * sum_m h_m phi(2i - m)`` as the eigenvector for
    eigenvalue 1, normalised so the values sum to one.
    """
    length = len(filt)
    mat = np.zeros((length, length))
    for i in range(length):
        for j in range(length):
            m = 2 * i - j
            if 0 <= m < length:
                mat[i, j] = math.sqrt(2.0) * filt[m]
    evals, evecs = np.linalg.eig(mat)
    hits = np.flatnonzero(np.abs(evals - 1.0) < 1e-8)
    if len(hits) != 1:
        raise WaveletError("refinement matrix has no simple eigenvalue 1; filter is not a valid scaling filter")
    v = np.real(evecs[:, hits[0]])
    total = v.sum()
    if abs(total) < 1e-12:
        raise WaveletError("integer-value eigenvector sums to zero; cannot normalise")
    return v / total


def _cascade(filt: np.ndarray, depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Tabulate phi and psi on ``m / 2**depth`` for ``m = 0 .. L * 2**depth``."""
    length = len(filt)
    span = length - 1
    g = np.array([(-1) ** k * filt[span - k] for k in range(length)])
    s2 = math.sqrt(2.0)
    phi = integer_values(filt)
    prev = phi
    for d in range(1, depth + 1):
        size = span * 2**d + 1
        step = 2 ** (d - 1)
        cur = np.zeros(size)
        for k, hk in enumerate(filt):
            lo = k * step
            if lo >= size:
                break
            n_take = min(size - lo, len(prev))
            cur[lo : lo + n_take] += s2 * hk * prev[:n_take]
        if d == depth:
            psi = np.zeros(size)
            for k, gk in enumerate(g):
                lo = k * step
                if lo >= size:
                    break
                n_take = min(size - lo, len(prev))
                psi[lo : lo + n_take] += s2 * gk * prev[:n_take]
        prev = cur
    return prev, psi


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    """Father/mother wavelet tables on a common dyadic grid.

    ``father`` and ``mother`` hold values at ``a + m * 2**-depth``; both
    generators share the support ``[a, b]`` with the filter convention used
    here.  Instances are immutable and safe to share between workers.
    """

    family: str
    filter: np.ndarray
    depth: int
    father: np.ndarray
    mother: np.ndarray
    support_father: tuple[float, float]
    support_mother: tuple[float, float]
    piecewise_constant: bool = False

    def __post_init__(self):
        self.filter.setflags(write=False)
        self.father.setflags(write=False)
        self.mother.setflags(write=False)

    @property
    def grid(self) -> np.ndarray:
        a, _ = self.support_father
        return a + np.arange(len(self.father)) / 2.0**self.depth

    @property
    def sup_father(self) -> float:
        return float(np.max(np.abs(self.father)))

    @property
    def sup_mother(self) -> float:
        return float(np.max(np.abs(self.mother)))

    @property
    def half_width_A(self) -> float:
        return float(max(abs(v) for v in (*self.support_father, *self.support_mother)))

    @property
    def overlap_count_cA(self) -> int:
        return 2 * math.ceil(self.half_width_A) + 1

    @property
    def smooth(self) -> bool:
        """False for Haar, which is kept for exact mechanics tests only."""
        return not self.piecewise_constant

    def table(self, kind: str) -> tuple[np.ndarray, np.ndarray]:
        return self.grid, self._values(kind)

    def support(self, kind: str) -> tuple[float, float]:
        return self.support_father if _kind(kind) == "father" else self.support_mother

    def _values(self, kind: str) -> np.ndarray:
        return self.father if _kind(kind) == "father" else self.mother

    def __repr__(self) -> str:
        return f"WaveletBasis({self.family!r}, depth={self.depth})"


def _kind(kind: str) -> str:
    k = kind.lower()
    if k in ("father", "phi", "scaling"):
        return "father"
    if k in ("mother", "psi", "wavelet"):
        return "mother"
    raise ValueError(f"kind must be 'father' or 'mother', got {kind!r}")


def build_basis(family: str = "Daubechies4", depth: int = 12) -> WaveletBasis:
    """Construct a tabulated wavelet basis.

    Args:
        family: ``"Haar"`` or ``"DaubechiesN"`` with ``N`` in 2..10 (``"dbN"``
            is accepted as shorthand).
        depth: dyadic refinement depth of the tables, 4..24.
    """
    if not 4 <= int(depth) <= 24:
        raise WaveletError(f"depth must lie in [4, 24], got {depth}")
    depth = int(depth)
    name, n = _parse_family(family)
    filt = daubechies_filter(n)
    if name == "Haar":
        size = 2**depth + 1
        phi = np.ones(size)
        phi[-1] = 0.0
        psi = np.where(np.arange(size) < size // 2, 1.0, -1.0)
        psi[-1] = 0.0
        return WaveletBasis(name, filt, depth, phi, psi, (0.0, 1.0), (0.0, 1.0), piecewise_constant=True)
    phi, psi = _cascade(filt, depth)
    span = float(len(filt) - 1)
    return WaveletBasis(name, filt, depth, phi, psi, (0.0, span), (0.0, span))


def _lookup(basis: WaveletBasis, kind: str, t: np.ndarray) -> np.ndarray:
    values = basis._values(kind)
    a, _ = basis.support(kind)
    pos = (np.asarray(t, dtype=float) - a) * 2.0**basis.depth
    last = len(values) - 1
    inside = (pos >= 0.0) & (pos <= last)
    p = np.where(inside, pos, 0.0)
    i0 = np.floor(p).astype(np.int64)
    if basis.piecewise_constant:
        out = values[i0]
    else:
        i0 = np.minimum(i0, last - 1)
        frac = p - i0
        out = values[i0] * (1.0 - frac) + values[i0 + 1] * frac
    return np.where(inside, out, 0.0)


def eval_scaled(basis: WaveletBasis, kind: str, j: int, k, x):
    """``2**(j/2) * g(2**j x - k)`` for ``g`` the father or mother wavelet.

    Broadcasts over ``k`` and ``x``; returns a float for scalar input.
    """
    t = np.ldexp(np.asarray(x, dtype=float), j) - np.asarray(k, dtype=float)
    out = 2.0 ** (j / 2.0) * _lookup(basis, kind, t)
    return float(out) if np.ndim(out) == 0 else out


def level_values(basis: WaveletBasis, kind: str, j: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shifts ``k`` with possibly non-zero ``g_jk(x)`` and the corresponding values.

    Returns two ``(len(x), m)`` arrays where ``m`` is the support length of
    the generator; every non-zero ``g_jk(x_i)`` appears exactly once per row.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    a, b = basis.support(kind)
    m = int(math.ceil(b - a))
    u = np.ldexp(x, j)
    first = np.floor(u - b).astype(np.int64) + 1
    ks = first[:, None] + np.arange(m)[None, :]
    vals = 2.0 ** (j / 2.0) * _lookup(basis, kind, u[:, None] - ks)
    return ks, vals


def sup_norms(basis: WaveletBasis) -> tuple[float, float]:
    """Table maxima of ``|phi|`` and ``|psi|``.

    These are lower bounds of the true suprema that converge as the depth
    grows; privacy noise scales multiply them by :data:`SUP_SAFETY`.
    """
    return basis.sup_father, basis.sup_mother


def active_shifts(basis: WaveletBasis, kind: str, j: int, T: float) -> range:
    """Shifts ``k`` whose scaled support overlaps ``[-T, T]`` with positive length."""
    if T <= 0:
        raise ValueError("T must be positive")
    a, b = basis.support(kind)
    scale = 2.0**j
    # (k + b)/2^j > -T  and  (k + a)/2^j < T
    k_lo = math.floor(-T * scale - b) + 1
    k_hi = math.ceil(T * scale - a) - 1
    return range(k_lo, k_hi + 1)


def dump_tables(basis: WaveletBasis, path: str | Path) -> Path:
    """Write the tables as CSV with columns ``x, phi, psi``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "phi", "psi"])
        for x, p, q in zip(basis.grid, basis.father, basis.mother):
            w.writerow([repr(float(x)), repr(float(p)), repr(float(q))])
    return path
