"""
A short tour of the wavelet tables.

Daubechies filters are built by spectral factorisation, the scaling
function is fixed at the integers by an eigenvector of the refinement
matrix and then refined by the cascade recursion.  The sup norms and
overlap counts printed here are the constants that later set the
privacy noise.
"""
import numpy as np

from ldpwave import build_basis, eval_scaled

for family in ("Haar", "Daubechies2", "Daubechies4", "Daubechies6"):
    b = build_basis(family, depth=12)
    print(f"{family:12s} filter length {len(b.filter):2d}  support {b.support_father}  "
          f"|phi| {b.sup_father:.4f}  |psi| {b.sup_mother:.4f}  c_A {b.overlap_count_cA}")

# values at the integers for Daubechies2: 0, 1.366, -0.366, 0
db2 = build_basis("Daubechies2")
print("phi_D2 at 0..3:", np.round(eval_scaled(db2, "father", 0, 0, np.arange(4.0)), 6))

# partition of unity: shifts of phi add up to one everywhere
db4 = build_basis("Daubechies4")
x = np.linspace(-1, 1, 9)
total = sum(eval_scaled(db4, "father", 0, k, x) for k in range(-8, 2))
print("sum_k phi(x - k):", np.round(total, 10))

# a dilated, shifted mother wavelet: psi_jk(x) = 2^(j/2) psi(2^j x - k)
print("psi_{2,1}(0.4) =", eval_scaled(db4, "mother", 2, 1, 0.4))
