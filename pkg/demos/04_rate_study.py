"""
A small convergence-rate study.

Risk is averaged over replications at each n and a line is fitted to
log risk against log n.  With alpha fixed the slope should approach
-s r / (2 s + 2); with alpha huge it should approach the classical
-s r / (2 s + 1).  Reps are kept low so this runs in a minute or two.
"""
from ldpwave import Scenario, build_basis, make_reference_density, rate_study

truth = make_reference_density()
basis = build_basis("Daubechies4")
n_grid = [2**10, 2**12, 2**14, 2**16]

for alpha, regime in ((1.0, "private"), (1e6, "nonprivate")):
    sc = Scenario(truth, basis, "Linear", alpha)
    study = rate_study(truth, sc.configs, n_grid, 30, 1, theory=(1.0, 2.0, 2.0, 2.0), alpha_regime=regime)
    print(f"alpha={alpha:g}: fitted slope {study.fitted_exponent:.3f} +- {study.exponent_stderr:.3f}, "
          f"theory {study.theoretical_exponent:.3f} ({study.regime})")
    for rep in study.risks:
        print(f"   n={rep.n:6d}  risk {rep.risk_mean:.4g} +- {rep.risk_stderr:.2g}")
