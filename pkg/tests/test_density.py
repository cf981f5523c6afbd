import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, simpson
from scipy.stats import kstest

from ldpwave.density import (
    CoefficientSet,
    Density,
    DensityError,
    SlotLayout,
    besov_norm,
    coefficients_from_json,
    density_from_json,
    density_to_json,
    expansion,
    make_hypothesis_density,
    make_reference_density,
    packing_shifts,
    sample,
    slot_matrix,
    slot_sums,
    uniform_density,
    validate_density,
    wavelet_coefficients,
)


def test_reference_density(f0):
    assert f0(0.0) == pytest.approx(0.5)
    assert f0(1.0) == 0 and f0(-1.0) == 0
    assert quad(f0.eval, -1, 1, points=[-0.5, 0.5], limit=200)[0] == pytest.approx(1, abs=1e-6)
    # each shoulder carries (1 - 0.5 * 1) / 2
    assert quad(f0.eval, -1, -0.5, limit=200)[0] == pytest.approx(0.25, abs=1e-6)
    validate_density(f0)


def test_reference_density_rejects_infeasible():
    with pytest.raises(DensityError):
        make_reference_density(c0=1.0, flat=(-0.5, 0.5))
    with pytest.raises(DensityError):
        make_reference_density(flat=(-2, 0.5))


def test_packing_disjoint(db4, haar):
    for b in (db4, haar):
        ks = packing_shifts(b, 5, -0.5, 0.5)
        lo, hi = b.support_mother
        assert all((k + lo) / 32 >= -0.5 and (k + hi) / 32 <= 0.5 for k in ks)
        assert all(k2 - k1 >= hi - lo for k1, k2 in zip(ks, ks[1:]))
    assert len(packing_shifts(haar, 5, -0.5, 0.5)) == 32


def test_hypothesis_density(f0, db4):
    ks = packing_shifts(db4, 4, -0.5, 0.5)
    zero = make_hypothesis_density(f0, db4, 4, [0] * len(ks), 0.02)
    x = np.linspace(-1, 1, 501)
    np.testing.assert_array_equal(zero(x), f0(x))
    theta = [1, 0] * (len(ks) // 2) + [1] * (len(ks) % 2)
    f = make_hypothesis_density(f0, db4, 4, theta, 0.02)
    validate_density(f)
    beta = wavelet_coefficients(f, db4, 4, 4).beta(4)
    beta0 = wavelet_coefficients(f0, db4, 4, 4).beta(4)
    for k, t in zip(ks, theta):
        assert beta[k] - beta0[k] == pytest.approx(0.02 * t, abs=1e-5)
        assert beta[k] == pytest.approx(0.02 * t, abs=1e-5)  # flat region: f0 has no detail there


def test_hypothesis_density_rejects(f0, haar):
    n = len(packing_shifts(haar, 3, -0.5, 0.5))
    with pytest.raises(DensityError):
        make_hypothesis_density(f0, haar, 3, [1] * n, 0.5)
    with pytest.raises(DensityError):
        make_hypothesis_density(f0, haar, 3, [2] * n, 0.01)
    with pytest.raises(DensityError):
        make_hypothesis_density(f0, haar, 3, [1], 0.01)


def test_sample_determinism_and_edge(unif, f0):
    np.testing.assert_array_equal(sample(unif, 5, 7), sample(unif, 5, 7))
    assert len(sample(f0, 0, 1)) == 0
    x = sample(f0, 10**5, 1)
    cdf = lambda t: np.interp(t, *f0.cdf_table)
    assert kstest(x, cdf).statistic <= 0.01


@pytest.mark.parametrize("n", [10**3, 10**4, 10**5])
def test_sample_ks_bound(f0, n):
    x = sample(f0, n, 2024 + n)
    cdf = lambda t: np.interp(t, *f0.cdf_table)
    assert kstest(x, cdf).statistic <= 1.63 / np.sqrt(n)


def test_uniform_coefficients_haar(unif, haar):
    c = wavelet_coefficients(unif, haar, 0, 4)
    assert c.alpha[0] == pytest.approx(1, abs=1e-10)
    for j in range(5):
        assert max(abs(v) for v in c.beta(j).values()) < 1e-10


def test_reconstruction_error_monotone(f0, db4):
    x = np.linspace(-1, 1, 4001)
    errs = []
    for j1 in range(2, 7):
        c = wavelet_coefficients(f0, db4, 0, j1)
        errs.append(np.sqrt(simpson((expansion(c, db4, x) - f0(x)) ** 2, x=x)))
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-4


def test_coefficients_linear(f0, db2, unif):
    total = Density(lambda t: 0.5 * f0.eval(t) + 0.5 * unif.eval(t), 1.0, "mix", sup=1.0)
    c_sum = wavelet_coefficients(total, db2, 0, 3)
    c_parts = wavelet_coefficients(f0, db2, 0, 3).values * 0.5 + wavelet_coefficients(unif, db2, 0, 3).values * 0.5
    np.testing.assert_allclose(c_sum.values, c_parts, atol=1e-8)


def test_besov_norm_examples(haar):
    layout = SlotLayout.build(haar, 0, 3, 1.0)
    zero = CoefficientSet(layout, np.zeros(layout.size))
    assert besov_norm(zero, 1, 2, 2) == 0
    vals = np.zeros(layout.size)
    sl = layout.level_slice(2)
    vals[sl.start] = 0.3
    one = CoefficientSet(layout, vals)
    s, p = 1.5, 2.0
    assert besov_norm(one, s, p, 2) == pytest.approx(2 ** (2 * (s + 0.5 - 1 / p)) * 0.3)
    assert besov_norm(one, 2, p, 2) >= besov_norm(one, 1, p, 2)
    assert besov_norm(one, s, p, np.inf) == pytest.approx(besov_norm(one, s, p, 1))


def test_besov_scaling_of_hypotheses(f0, haar):
    s, p, c = 1.0, 2.0, 0.05
    base = besov_norm(wavelet_coefficients(f0, haar, 0, 6), s, p, 2)
    excess = []
    for j in range(2, 6):
        n = len(packing_shifts(haar, j, -0.5, 0.5))
        g = c * 2 ** (-j * (s + 0.5 - 1 / p))
        f = make_hypothesis_density(f0, haar, j, [1] * n, g)
        excess.append(besov_norm(wavelet_coefficients(f, haar, 0, 6), s, p, 2) - base)
    assert max(excess) <= 2 * c


def test_slot_sums_match_matrix(db4):
    layout = SlotLayout.build(db4, 1, 3, 1.0)
    x = np.random.default_rng(3).uniform(-1.2, 1.2, 777)
    np.testing.assert_allclose(slot_sums(db4, layout, x, chunk=100), slot_matrix(db4, layout, x).sum(0), atol=1e-10)


def test_slot_matrix_bruteforce(haar):
    layout = SlotLayout.build(haar, 0, 2, 1.0)
    x = np.array([-0.7, 0.2, 0.95])
    m = slot_matrix(haar, layout, x)
    from ldpwave.wavelet import eval_scaled

    col = 0
    for lab, kind, j, ks, _ in layout.blocks():
        for k in ks:
            np.testing.assert_allclose(m[:, col], eval_scaled(haar, kind, j, k, x))
            col += 1


def test_json_roundtrips(f0, haar):
    c = wavelet_coefficients(f0, haar, 0, 3)
    c2 = coefficients_from_json(c.to_json())
    np.testing.assert_array_equal(c.values, c2.values)
    assert c2.layout == c.layout
    g = density_from_json(density_to_json(f0))
    x = np.linspace(-1, 1, 77)
    np.testing.assert_allclose(g(x), f0(x), atol=1e-5)


@given(st.floats(0.1, 0.8), st.floats(0.05, 0.45))
@settings(max_examples=15, deadline=None)
def test_reference_family_valid(c0, half):
    if c0 * 2 * half >= 1:
        return
    validate_density(make_reference_density(1.0, c0, (-half, half)))


def test_uniform_density_half_open():
    u = uniform_density(0, 1, 1)
    assert u(0.0) == 1 and u(1.0) == 0
