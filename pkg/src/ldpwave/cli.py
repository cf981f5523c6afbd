"""Batch front end: ``ldpwave {privatize,estimate,audit,rate-study}``.

Every run is a pure function of the experiment spec plus flags.  Outputs go
to ``<out>/<command>-<digest>/`` where the digest covers the effective
configuration; an existing run directory is left untouched.
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .density import (
    DensityError,
    make_hypothesis_density,
    make_reference_density,
    sample,
    uniform_density,
)
from .estimator import (
    EstimatorConfig,
    EstimatorError,
    adaptive_estimate,
    choose_adaptive_levels,
    choose_linear_level,
    empirical_coefficients,
    estimate_extent,
    linear_estimate,
    write_estimate,
    write_grid,
)
from .privacy import DigestMismatch, MechanismConfig, audit_grid, privatize_batch, read_records, write_records
from .risk import RiskReport, Scenario, rate_study, summarize_rates
from .seeding import derive_seed, generator
from .wavelet import WaveletError, build_basis

EXIT_OK, EXIT_CONFIG, EXIT_DIGEST, EXIT_AUDIT = 0, 2, 3, 4

log = logging.getLogger("ldpwave")

DEFAULT_SPEC = {
    "scenario": {
        "density": {"kind": "reference", "T": 1.0, "c0": 0.5, "flat": [-0.5, 0.5]},
        "basis": {"family": "Daubechies4", "depth": 12},
        "mechanism": {"variant": "Mechanism1", "alpha": 1.0, "nu": 2.0},
        "estimator": {"mode": "Linear", "s": 1.0, "N": 1, "r": 2.0, "nu": 2.0},
    },
    "n": 1000,
    "n_grid": [1024, 4096, 16384, 65536],
    "reps": 20,
    "master_seed": 0,
    "outputs": "runs",
    "formats": ["csv", "json"],
    "theory": {"s": 1.0, "p": 2.0, "q": 2.0, "r": 2.0},
    "alpha_regime": "private",
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Spec handling


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_spec(path: str | None, args) -> dict:
    spec = copy.deepcopy(DEFAULT_SPEC)
    if path:
        try:
            spec = _merge(spec, json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read spec {path}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        spec["master_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        spec["outputs"] = args.out
    if getattr(args, "format", None) is not None:
        spec["formats"] = [args.format]
    validate_spec(spec)
    return spec


def validate_spec(spec: dict) -> None:
    sc = spec["scenario"]
    mech, est = sc["mechanism"], sc["estimator"]
    if mech.get("variant") == "Mechanism2" and float(mech.get("nu", 2.0)) != float(est.get("nu", 2.0)):
        raise ConfigError("mechanism and estimator nu disagree")
    grid = [int(n) for n in spec["n_grid"]]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("n_grid must be strictly increasing")
    if not set(spec["formats"]) <= {"csv", "json"} or not spec["formats"]:
        raise ConfigError("formats must be a non-empty subset of {csv, json}")
    if not 0 <= int(spec["master_seed"]) < 2**64:
        raise ConfigError("master_seed must be an unsigned 64-bit integer")


def build_density(doc: dict, basis=None):
    kind = doc.get("kind", "reference")
    if kind == "reference":
        return make_reference_density(float(doc.get("T", 1.0)), float(doc.get("c0", 0.5)),
                                      tuple(doc.get("flat", (-0.5, 0.5))))
    if kind == "uniform":
        return uniform_density(float(doc.get("a", 0.0)), float(doc.get("b", 1.0)), doc.get("T"))
    if kind == "hypothesis":
        if basis is None:
            raise ConfigError("hypothesis density needs a basis")
        base = build_density(doc.get("base", {"kind": "reference"}))
        return make_hypothesis_density(base, basis, int(doc["j"]), doc["theta"], float(doc["gamma"]))
    raise ConfigError(f"unknown density kind {kind!r}")


def _basis(spec):
    b = spec["scenario"]["basis"]
    return build_basis(b.get("family", "Haar"), int(b.get("depth", 12)))


def _scenario(spec, basis, truth) -> Scenario:
    sc = spec["scenario"]
    mech, est = sc["mechanism"], sc["estimator"]
    return Scenario(truth, basis, est.get("mode", "Linear"), float(mech.get("alpha", 1.0)),
                    s=float(est.get("s", 1.0)), N=int(est.get("N", 1)), r=float(est.get("r", 2.0)),
                    nu=float(est.get("nu", mech.get("nu", 2.0))), L_bar=float(est.get("L_bar", 1.0)),
                    K=est.get("K"), gamma_t=est.get("gamma_t"), variant=mech.get("variant"),
                    scenario_id=str(spec.get("scenario_id", "scenario")))


def mechanism_for(spec: dict, basis, n: int, T: float) -> MechanismConfig:
    """Mechanism from the spec; missing levels follow the estimator's tuning rule at ``n``."""
    mech = spec["scenario"]["mechanism"]
    est = spec["scenario"]["estimator"]
    variant = mech.get("variant", "Mechanism1")
    alpha = float(mech.get("alpha", 1.0))
    j0, j1 = mech.get("j0"), mech.get("j1")
    if j0 is None or j1 is None:
        if variant == "Mechanism1":
            auto = (0, choose_linear_level(n, alpha, float(est.get("s", 1.0))))
        else:
            auto = choose_adaptive_levels(n, alpha, int(est.get("N", 1)))
        j0 = auto[0] if j0 is None else j0
        j1 = auto[1] if j1 is None else j1
    return MechanismConfig(variant, alpha, int(j0), int(j1), basis, float(mech.get("T", T)),
                           float(mech.get("nu", 2.0)))


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def run_dir(spec: dict, command: str, extra: dict) -> tuple[Path, bool]:
    """Content-addressed output directory; second value is False when it already exists."""
    payload = {k: v for k, v in spec.items() if k != "outputs"}
    digest = hashlib.sha256(_canonical({"command": command, "spec": payload, "extra": extra}).encode()).hexdigest()
    path = Path(spec["outputs"]) / f"{command}-{digest[:16]}"
    if path.exists():
        return path, False
    tmp = path.with_name(path.name + ".partial")
    tmp.mkdir(parents=True, exist_ok=True)
    (tmp / "spec.json").write_text(json.dumps({"command": command, "spec": payload, "extra": extra},
                                              indent=1, sort_keys=True) + "\n")
    return tmp, True


def _finish(tmp: Path) -> Path:
    final = tmp.with_name(tmp.name.removesuffix(".partial"))
    tmp.rename(final)
    return final


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# Subcommands


def cmd_privatize(args) -> int:
    spec = load_spec(args.spec, args)
    if args.n is not None:
        spec["n"] = args.n
    n = int(spec["n"])
    if n < 1:
        raise ConfigError("n must be >= 1")
    basis = _basis(spec)
    truth = build_density(spec["scenario"]["density"], basis)
    mech = mechanism_for(spec, basis, max(n, 2), truth.T)
    path, fresh = run_dir(spec, "privatize", {"n": n})
    if fresh:
        seed = int(spec["master_seed"])
        x = sample(truth, n, derive_seed(seed, 0, 0))
        write_records(path / "records.csv", privatize_batch(x, mech, derive_seed(seed, 0, 1)))
        path = _finish(path)
    print(path / "records.csv")
    return EXIT_OK


def cmd_estimate(args) -> int:
    spec = load_spec(args.spec, args)
    if not args.records:
        raise ConfigError("--records is required")
    mech, batch = read_records(args.records)
    est_doc = dict(spec["scenario"]["estimator"])
    for key in ("mode", "nu", "K", "gamma_t", "L_bar", "s", "N", "r"):
        val = getattr(args, key, None)
        if val is not None:
            est_doc[key] = val
    if args.mode is None and args.spec is None:
        est_doc["mode"] = "Adaptive" if mech.variant == "Mechanism2" else "Linear"
    if mech.variant == "Mechanism2" and float(est_doc.get("nu", 2.0)) != mech.nu:
        raise DigestMismatch(f"requested nu={est_doc.get('nu')} but records were released with nu={mech.nu}")
    est = EstimatorConfig(est_doc.get("mode", "Linear"), len(batch), mech.alpha, s=float(est_doc.get("s", 1.0)),
                          N=int(est_doc.get("N", 1)), r=float(est_doc.get("r", 2.0)),
                          nu=float(est_doc.get("nu", mech.nu)), gamma_t=est_doc.get("gamma_t"),
                          L_bar=float(est_doc.get("L_bar", 1.0)), K=est_doc.get("K"))
    extra = {"records_digest": hashlib.sha256(Path(args.records).read_bytes()).hexdigest(),
             "estimator": est.to_dict(), "j1": args.j1, "grid_points": args.grid_points}
    path, fresh = run_dir(spec, "estimate", extra)
    if fresh:
        coeffs = empirical_coefficients(batch)
        if est.mode == "Linear":
            fhat = linear_estimate(coeffs, mech.basis, args.j1, mechanism=mech)
        else:
            fhat = adaptive_estimate(coeffs, mech.basis, est, mechanism=mech)
        fhat.meta["mechanism"] = mech.to_dict()
        fhat.meta["mechanism_digest"] = mech.digest()
        for flag in fhat.meta.get("flags", []):
            log.warning(flag)
        if "json" in spec["formats"]:
            write_estimate(path / "estimate.json", fhat)
        if "csv" in spec["formats"]:
            lo, hi = estimate_extent(mech.basis, fhat.coeffs.layout)
            write_grid(path / "grid.csv", fhat, np.linspace(lo, hi, args.grid_points))
        path = _finish(path)
    print(path)
    return EXIT_OK


def cmd_audit(args) -> int:
    spec = load_spec(args.spec, args)
    mdoc = spec["scenario"]["mechanism"]
    for key in ("variant", "alpha", "j0", "j1", "nu", "T"):
        val = getattr(args, key, None)
        if val is not None:
            mdoc[key] = val
    if args.family is not None:
        spec["scenario"]["basis"]["family"] = args.family
    if args.depth is not None:
        spec["scenario"]["basis"]["depth"] = args.depth
    mdoc.setdefault("j0", 0)
    mdoc.setdefault("j1", 3)
    basis = _basis(spec)
    mech = mechanism_for(spec, basis, 2, float(mdoc.get("T", 1.0)))
    path, fresh = run_dir(spec, "audit", {"mechanism": mech.to_dict(), "step": args.step})
    result = audit_grid(mech, step=args.step)
    if fresh:
        doc = {"mechanism": mech.to_dict(), **result.to_dict()}
        if "json" in spec["formats"]:
            _dump_json(path / "audit.json", doc)
        if "csv" in spec["formats"]:
            with (path / "audit.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["key", "value"])
                for key, val in sorted(result.to_dict().items()):
                    w.writerow([key, json.dumps(val)])
        path = _finish(path)
    print(path)
    print(f"max log-ratio {result.max_log_ratio:.6g} vs alpha {result.alpha:g}: "
          f"{'pass' if result.passed else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_AUDIT


def synthetic_reports(spec: dict, exponent: float) -> list[RiskReport]:
    """Noisy draws of ``risk = n^-exponent`` for checking the fitting path."""
    out = []
    for n in spec["n_grid"]:
        rng = generator(int(spec["master_seed"]), int(n))
        risks = n ** (-exponent) * np.exp(0.05 * rng.standard_normal(int(spec["reps"])))
        out.append(RiskReport.from_risks("synthetic", n, 1.0, 2.0, risks))
    return out


def cmd_rate_study(args) -> int:
    spec = load_spec(args.spec, args)
    th = spec["theory"]
    theory = (float(th["s"]), float(th["p"]), float(th["q"]), float(th["r"]))
    extra = {"synthetic": args.synthetic, "aggregate": not args.per_record}
    path, fresh = run_dir(spec, "rate-study", extra)
    if fresh:
        if args.synthetic is not None:
            study = summarize_rates(synthetic_reports(spec, args.synthetic), theory, spec["alpha_regime"], "synthetic")
        else:
            basis = _basis(spec)
            if not basis.smooth:
                log.warning("%s is for mechanics tests only; rate exponents assume a smooth basis", basis.family)
            truth = build_density(spec["scenario"]["density"], basis)
            sc = _scenario(spec, basis, truth)
            study = rate_study(truth, sc.configs, spec["n_grid"], int(spec["reps"]), int(spec["master_seed"]),
                               theory=theory, alpha_regime=spec["alpha_regime"], workers=args.threads,
                               scenario_id=sc.scenario_id, aggregate=not args.per_record)
        if "json" in spec["formats"]:
            study.write_json(path / "rate_study.json")
        if "csv" in spec["formats"]:
            study.write_csv(path / "risks.csv")
            study.write_fit_csv(path / "fit.csv")
        path = _finish(path)
        print(f"fitted exponent {study.fitted_exponent:.4f} +- {study.exponent_stderr:.4f}; "
              f"theory {study.theoretical_exponent:.4f} ({study.regime})")
    print(path)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser


def _common(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--spec", default=d, help="experiment spec (JSON)")
    p.add_argument("--seed", type=int, default=d, help="master seed (u64), overrides the spec")
    p.add_argument("--out", default=d, help="output root, overrides the spec")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="worker processes for replications")
    p.add_argument("--format", choices=("csv", "json"), default=d, help="restrict outputs to one format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldpwave", description=__doc__.splitlines()[0])
    _common(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("privatize", help="sample from the truth and write privatised records")
    _common(p, suppress=True)
    p.add_argument("--n", type=int, default=None, help="number of records, overrides the spec")
    p.set_defaults(func=cmd_privatize)

    p = sub.add_parser("estimate", help="estimate a density from a records file")
    _common(p, suppress=True)
    p.add_argument("--records", required=True)
    p.add_argument("--mode", choices=("Linear", "Adaptive"))
    p.add_argument("--nu", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--gamma-t", dest="gamma_t", type=float)
    p.add_argument("--L-bar", dest="L_bar", type=float)
    p.add_argument("--j1", type=int, help="truncation level for the linear estimator")
    p.add_argument("--grid-points", type=int, default=1025)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("audit", help="grid sweep of the privacy log-ratio")
    _common(p, suppress=True)
    p.add_argument("--family")
    p.add_argument("--depth", type=int)
    p.add_argument("--variant", choices=("Mechanism1", "Mechanism2"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--j0", type=int)
    p.add_argument("--j1", type=int)
    p.add_argument("--nu", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--step", type=float)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("rate-study", help="Monte Carlo risk over n_grid and fitted exponent")
    _common(p, suppress=True)
    p.add_argument("--synthetic", type=float, default=None, metavar="EXPONENT",
                   help="self-test: fit noisy n^-EXPONENT instead of running the pipeline")
    p.add_argument("--per-record", action="store_true", help="materialise every record instead of aggregate noise")
    p.set_defaults(func=cmd_rate_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except DigestMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIGEST
    except (ConfigError, DensityError, EstimatorError, WaveletError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
