"""Non-interactive Laplace release of wavelet evaluations and its privacy audit.

Each data holder releases, for every slot ``(j, k)`` of a fixed layout, the
value ``g_jk(x) + sigma_j W_jk`` with independent standard Laplace ``W``.
Two noise schedules are provided: a flat one tied to the top level ``j1``
(``Mechanism1``) and a level-dependent one with the ``(j v 1)^nu`` factor
(``Mechanism2``).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .density import SlotLayout, slot_entries, slot_matrix
from .seeding import mix, uniform_from_hash
from .wavelet import SUP_SAFETY, WaveletBasis, build_basis

__all__ = [
    "AuditResult",
    "MechanismConfig",
    "PrivatizedRecord",
    "RecordBatch",
    "audit_grid",
    "audit_privacy",
    "budget_terms",
    "laplace_from_uniform",
    "laplace_sample",
    "noise_scales",
    "privacy_bound",
    "privatize",
    "privatize_batch",
    "read_records",
    "slot_scales",
    "write_records",
]

VARIANTS = ("Mechanism1", "Mechanism2")


@dataclass(frozen=True, eq=False)
class MechanismConfig:
    variant: str
    alpha: float
    j0: int
    j1: int
    basis: WaveletBasis
    T: float = 1.0
    nu: float = 2.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.j0 < 0 or self.j1 < self.j0:
            raise ValueError(f"need 0 <= j0 <= j1, got j0={self.j0}, j1={self.j1}")
        if self.variant == "Mechanism2" and not self.nu > 1:
            raise ValueError("Mechanism2 needs nu > 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @cached_property
    def layout(self) -> SlotLayout:
        return SlotLayout.build(self.basis, self.j0, self.j1, self.T)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "alpha": float(self.alpha), "j0": int(self.j0), "j1": int(self.j1),
                "nu": float(self.nu), "family": self.basis.family, "depth": int(self.basis.depth),
                "T": float(self.T)}

    @classmethod
    def from_dict(cls, d: dict, basis: WaveletBasis | None = None) -> "MechanismConfig":
        if basis is None:
            basis = build_basis(d["family"], d["depth"])
        return cls(d["variant"], d["alpha"], d["j0"], d["j1"], basis, d["T"], d.get("nu", 2.0))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _sup_for_noise(basis: WaveletBasis) -> tuple[float, float]:
    # piecewise-constant tables hold the exact suprema
    f = 1.0 if basis.piecewise_constant else SUP_SAFETY
    return basis.sup_father * f, basis.sup_mother * f


def noise_scales(config: MechanismConfig) -> dict[int, float]:
    """Laplace scale per level label (``j0 - 1`` is the father level)."""
    phi_sup, psi_sup = _sup_for_noise(config.basis)
    c_a = config.basis.overlap_count_cA
    a = config.alpha
    out = {config.j0 - 1: 4.0 * c_a * phi_sup / a * 2.0 ** (config.j0 / 2.0)}
    for j in range(config.j0, config.j1 + 1):
        if config.variant == "Mechanism1":
            out[j] = 4.0 * c_a * psi_sup / a * math.sqrt(2.0) / (math.sqrt(2.0) - 1.0) * 2.0 ** (config.j1 / 2.0)
        else:
            nu = config.nu
            out[j] = 4.0 * c_a * psi_sup / a * (2.0 * nu - 1.0) / (nu - 1.0) * max(j, 1) ** nu * 2.0 ** (j / 2.0)
    return out


def slot_scales(config: MechanismConfig) -> np.ndarray:
    scales = noise_scales(config)
    return np.concatenate([np.full(len(ks), scales[lab]) for lab, _, _, ks, _ in config.layout.blocks()])


def laplace_from_uniform(u, scale: float):
    """Inverse-CDF Laplace transform of ``u`` uniform on ``(-1/2, 1/2)``."""
    u = np.asarray(u, dtype=float)
    out = np.sign(u) * scale * np.log1p(-2.0 * np.abs(u))
    return float(out) if out.ndim == 0 else out


def laplace_sample(scale: float, rng: np.random.Generator, size=None):
    """Centred Laplace draw(s) with scale ``scale``."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    return laplace_from_uniform(rng.random(size) - 0.5, scale)


@dataclass(frozen=True, eq=False)
class PrivatizedRecord:
    """One data holder's release: one value per layout slot."""

    layout: SlotLayout
    values: np.ndarray

    @property
    def slots(self) -> dict[tuple[int, int], float]:
        lv, kk = self.layout.labels()
        return {(int(j), int(k)): float(v) for j, k, v in zip(lv, kk, self.values)}


@dataclass(frozen=True, eq=False)
class RecordBatch:
    """Many records sharing one layout; ``values`` has shape ``(n, slots)``."""

    layout: SlotLayout
    values: np.ndarray
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.values.shape[0]

    def record(self, i: int) -> PrivatizedRecord:
        return PrivatizedRecord(self.layout, self.values[i])


def _slot_noise(config: MechanismConfig, seed: int, record_ids: np.ndarray) -> np.ndarray:
    # one stream per (seed, record, level, shift)
    lv, kk = config.layout.labels()
    h = mix(int(seed), record_ids[:, None], lv[None, :], kk[None, :])
    return laplace_from_uniform(uniform_from_hash(h) - 0.5, 1.0) * slot_scales(config)[None, :]


def privatize(x: float, config: MechanismConfig, seed: int, index: int = 0) -> PrivatizedRecord:
    """Release one observation.  Out-of-support ``x`` is treated like any other value."""
    batch = privatize_batch(np.array([x], dtype=float), config, seed, start_index=index)
    return batch.record(0)


def privatize_batch(xs, config: MechanismConfig, seed: int, start_index: int = 0, chunk: int = 4096) -> RecordBatch:
    """Release many observations; record ``i`` uses stream ``start_index + i``."""
    xs = np.asarray(xs, dtype=float).reshape(-1)
    out = np.empty((len(xs), config.layout.size))
    for s in range(0, len(xs), chunk):
        part = xs[s : s + chunk]
        ids = np.arange(start_index + s, start_index + s + len(part), dtype=np.int64)
        out[s : s + len(part)] = slot_matrix(config.basis, config.layout, part) + _slot_noise(config, seed, ids)
    return RecordBatch(config.layout, out, config.to_dict())


# --------------------------------------------------------------------------
# Audit


def _scaled_parts(config: MechanismConfig, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = slot_matrix(config.basis, config.layout, xs) / slot_scales(config)[None, :]
    nf = len(config.layout.father)
    return m[:, :nf], m[:, nf:]


def audit_privacy(config: MechanismConfig, x: float, x_prime: float) -> float:
    """Exact supremum over outputs of the log density ratio between inputs ``x`` and ``x'``.

    For product Laplace densities this is ``sum_s |g_s(x) - g_s(x')| / sigma_s``.
    """
    fa, mo = _scaled_parts(config, np.array([x, x_prime], dtype=float))
    return float(np.abs(fa[0] - fa[1]).sum() + np.abs(mo[0] - mo[1]).sum())


def budget_terms(config: MechanismConfig, x: float, x_prime: float) -> tuple[float, float]:
    """Father-level and mother-level contributions to :func:`audit_privacy`."""
    fa, mo = _scaled_parts(config, np.array([x, x_prime], dtype=float))
    return float(np.abs(fa[0] - fa[1]).sum()), float(np.abs(mo[0] - mo[1]).sum())


@dataclass(frozen=True)
class AuditResult:
    alpha: float
    max_log_ratio: float
    argmax: tuple[float, float]
    max_father_term: float
    max_mother_term: float
    grid_step: float
    grid_points: int
    analytic_bound: float

    @property
    def passed(self) -> bool:
        return self.max_log_ratio <= self.alpha + 1e-9

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "max_log_ratio": self.max_log_ratio, "argmax": list(self.argmax),
                "max_father_term": self.max_father_term, "max_mother_term": self.max_mother_term,
                "grid_step": self.grid_step, "grid_points": self.grid_points,
                "analytic_bound": self.analytic_bound, "passed": self.passed}


def audit_grid(config: MechanismConfig, step: float | None = None, T: float | None = None) -> AuditResult:
    """Sweep all pairs of a uniform grid over ``[-T, T]`` and report the largest log ratio.

    The default step ``2**-(depth - 2)`` brackets every breakpoint of the tables
    at level zero.
    """
    T = config.T if T is None else T
    step = 2.0 ** -(config.basis.depth - 2) if step is None else step
    xs = np.arange(-T, T + step / 2, step)
    fa, mo = _scaled_parts(config, xs)
    d_f = cdist(fa, fa, "cityblock")
    d_m = cdist(mo, mo, "cityblock")
    total = d_f + d_m
    i, j = np.unravel_index(np.argmax(total), total.shape)
    return AuditResult(float(config.alpha), float(total[i, j]), (float(xs[i]), float(xs[j])),
                       float(d_f.max()), float(d_m.max()), float(step), len(xs), privacy_bound(config, T=T))


def privacy_bound(config: MechanismConfig, T: float | None = None, points: int = 1 << 14) -> float:
    """``2 max_x sum_s |g_s(x)| / sigma_s`` on a fine grid: the triangle-inequality bound on the log ratio."""
    T = config.T if T is None else T
    xs = np.linspace(-T - 1.0, T + 1.0, points + 1)
    sc = slot_scales(config)
    best = 0.0
    for s in range(0, len(xs), 4096):
        idx, val = slot_entries(config.basis, config.layout, xs[s : s + 4096])
        w = np.where(idx >= 0, np.abs(val) / sc[np.maximum(idx, 0)], 0.0)
        best = max(best, float(w.sum(axis=1).max()))
    return 2.0 * best


# --------------------------------------------------------------------------
# Record files

_MAGIC = "# ldpwave-records v1"


def write_records(path: str | Path, batch: RecordBatch) -> Path:
    """CSV with ``record_id, j, k, z`` rows; the header carries the config and its digest."""
    path = Path(path)
    cfg = batch.config
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    lv, kk = batch.layout.labels()
    n, m = batch.values.shape
    with path.open("w", newline="\n") as fh:
        fh.write(f"{_MAGIC}\n# config: {json.dumps(cfg, sort_keys=True, separators=(',', ':'))}\n")
        fh.write(f"# digest: {digest}\nrecord_id,j,k,z\n")
        lv_s = [str(v) for v in lv]
        kk_s = [str(v) for v in kk]
        for i in range(n):
            row = batch.values[i].tolist()
            fh.write("".join(f"{i},{lv_s[s]},{kk_s[s]},{row[s]!r}\n" for s in range(m)))
    return path


class DigestMismatch(ValueError):
    pass


def read_records(path: str | Path) -> tuple[MechanismConfig, RecordBatch]:
    """Parse a record file, verifying the digest and the slot layout."""
    path = Path(path)
    with path.open() as fh:
        magic = fh.readline().rstrip("\n")
        cfg_line = fh.readline().rstrip("\n")
        dig_line = fh.readline().rstrip("\n")
    if magic != _MAGIC or not cfg_line.startswith("# config: ") or not dig_line.startswith("# digest: "):
        raise ValueError(f"{path}: not a record file")
    cfg = json.loads(cfg_line[len("# config: "):])
    digest = dig_line[len("# digest: "):]
    expect = hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
    if digest != expect:
        raise DigestMismatch(f"{path}: header digest does not match its config")
    config = MechanismConfig.from_dict(cfg)
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=4, ndmin=2)
    m = config.layout.size
    if data.shape[0] % m:
        raise ValueError(f"{path}: row count {data.shape[0]} is not a multiple of {m} slots")
    n = data.shape[0] // m
    lv, kk = config.layout.labels()
    ids = data[:, 0].reshape(n, m)
    if not (np.all(data[:, 1].reshape(n, m) == lv) and np.all(data[:, 2].reshape(n, m) == kk)
            and np.all(ids == ids[:, :1])):
        raise ValueError(f"{path}: slot layout does not match the header config")
    return config, RecordBatch(config.layout, data[:, 3].reshape(n, m).copy(), cfg)
