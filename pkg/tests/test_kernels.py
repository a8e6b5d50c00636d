import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from conftest import frac
from nonlocal_cl.errors import NonIntegrableKernelError
from nonlocal_cl.kernels import (
    ClosedFormKernel, PiecewiseLinearKernel, RadialKernel, SmoothedStepKernel, check_decay_condition,
    kernel_norms, l1_distance, make_smoothed_kernel, make_step_kernel, smoothed_offset,
)

alphas = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
ns = st.integers(min_value=18, max_value=400)


def quad_mass(k):
    pts = list(k.breaks)
    val, _ = integrate.quad(lambda z: float(k(np.array(z))), pts[0], pts[-1], points=pts[1:-1],
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


# --- frozen symbolic reference ---------------------------------------------


def test_smoothed_family_matches_symbolic_reference(oracle):
    for e in oracle["kernels"]:
        k = make_smoothed_kernel(frac(e["alpha"]), e["n"])
        assert k.r == pytest.approx(e["r"], abs=1e-14)
        assert k.mass() == pytest.approx(1.0, abs=1e-14)
        assert k.total_variation() == pytest.approx(e["tv"], abs=1e-13)
        assert l1_distance(k, make_step_kernel()) == pytest.approx(e["l1_to_step"], rel=1e-12)
        assert k.lp_norm(2.0) == pytest.approx(e["l2"], rel=1e-12)


def test_smoothed_shape_values():
    k = make_smoothed_kernel(0.25, 20)
    r = k.r
    assert k(-r - 1.0 / 20) == 0.0
    assert k(-r - 0.5 / 20) == pytest.approx(0.5)
    assert k(-0.5) == 1.0
    assert k(0.0) == 0.25
    assert k(1.5 / 20) == pytest.approx(0.125)
    assert k(2.0 / 20) == 0.0


def test_step_kernel_jump_convention():
    k = make_step_kernel()
    assert k(-1.0) == 1.0  # right limit at the left edge
    assert k(0.0) == 0.0
    assert k.evaluate(0.0, side="left") == 1.0
    assert k.evaluate(-1.0, side="left") == 0.0
    assert k.total_variation() == 2.0
    assert k.gradient_lp_norm(2.0) == math.inf
    assert k.regularity.kind == "bv"
    with pytest.raises(ValueError):
        k.derivative()


def test_smoothed_is_lipschitz_with_exact_gradient_norms():
    n = 36
    k = make_smoothed_kernel(0.5, n)
    assert k.max_jump() == 0.0
    assert k.regularity.kind == "sobolev"
    assert k.gradient_lp_norm(math.inf) == pytest.approx(n)
    # |eta'| = n on the three ramps of widths 1/n; the jump 1 -> alpha ramp has slope n/2
    assert k.gradient_lp_norm(1.0) == pytest.approx(2.0)
    dk = k.derivative()
    assert dk.mass() == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("alpha,n", [(-0.1, 18), (1.1, 18), (0.5, 2), (0.5, 18.5)])
def test_smoothed_rejects_bad_parameters(alpha, n):
    with pytest.raises(ValueError):
        SmoothedStepKernel(alpha, n)


def test_small_n_with_unordered_breakpoints_is_rejected():
    # r = 1 - 2/n: -r must stay left of -2/n
    with pytest.raises(ValueError, match="ordered"):
        make_smoothed_kernel(1.0, 4)
    make_smoothed_kernel(1.0, 5)


@settings(max_examples=60, deadline=None)
@given(alphas, ns)
def test_unit_mass_and_tv_two(alpha, n):
    k = make_smoothed_kernel(alpha, n)
    assert quad_mass(k) == pytest.approx(1.0, abs=1e-12)
    assert k.total_variation() == pytest.approx(2.0, abs=1e-12)
    assert k.r == pytest.approx(1.0 + (1.0 - 3.0 * alpha) / n, abs=1e-15)
    assert k.r >= 0.75


@settings(max_examples=40, deadline=None)
@given(alphas, st.integers(min_value=18, max_value=200))
def test_distance_to_step_scales_as_one_over_n(alpha, n):
    d1 = l1_distance(make_smoothed_kernel(alpha, n), make_step_kernel())
    d2 = l1_distance(make_smoothed_kernel(alpha, 2 * n), make_step_kernel())
    assert d1 / d2 == pytest.approx(2.0, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(alphas, ns, st.floats(min_value=-3.0, max_value=1.0))
def test_antiderivative_matches_quadrature(alpha, n, z):
    k = make_smoothed_kernel(alpha, n)
    lo = k.breaks[0]
    pts = [b for b in k.breaks if lo < b < z]
    ref = 0.0 if z <= lo else integrate.quad(lambda s: float(k(np.array(s))), lo, z, points=pts or None,
                                              epsabs=1e-14, limit=200)[0]
    assert float(k.antiderivative(z)) == pytest.approx(ref, abs=1e-11)


def test_lp_norm_exact_against_quadrature():
    k = PiecewiseLinearKernel([-1.0, -0.25, 0.5, 1.0], [0.0, 2.0, -1.0], [2.0, -1.0, 0.0])
    for p in (1.0, 1.5, 2.0, 3.0):
        ref = integrate.quad(lambda z: abs(float(k(np.array(z)))) ** p, -1.0, 1.0, points=[-0.25, 0.5, 1 / 6],
                             epsabs=1e-14)[0] ** (1 / p)
        assert k.lp_norm(p) == pytest.approx(ref, rel=1e-10)
    assert k.lp_norm(math.inf) == 2.0


def test_l1_distance_symmetric_and_zero_on_self():
    a, b = make_smoothed_kernel(0.2, 30), make_smoothed_kernel(0.7, 45)
    assert l1_distance(a, a) == 0.0
    assert l1_distance(a, b) == pytest.approx(l1_distance(b, a), rel=1e-14)


def test_closed_form_kernel_norms():
    k = ClosedFormKernel(lambda x: 0.5 * np.exp(-np.abs(x)), derivative_func=lambda x: -0.5 * np.sign(x) * np.exp(-np.abs(x)),
                         breakpoints=(0.0,), name="laplace")
    norms = kernel_norms(k, 2.0)
    assert norms.l1 == pytest.approx(1.0, rel=1e-9)
    assert norms.lp == pytest.approx(0.5, rel=1e-9)  # int e^{-2|x|}/4 = 1/4
    assert norms.tv == pytest.approx(1.0, rel=1e-9)
    assert norms.grad_lp == pytest.approx(0.5, rel=1e-9)
    assert k.tail_norm(2.0) == pytest.approx(math.exp(-2.0), rel=1e-9)


def test_closed_form_l1_distance_by_quadrature():
    step = make_step_kernel()
    k = ClosedFormKernel(lambda x: np.ones_like(x), support=(-1.0, 0.0))
    assert l1_distance(k, step) == pytest.approx(0.0, abs=1e-12)


def test_non_integrable_kernel_is_reported():
    k = ClosedFormKernel(lambda x: 1.0 / np.maximum(np.abs(x), 1e-300), support=(-math.inf, math.inf),
                         breakpoints=(0.0,))
    with pytest.raises(NonIntegrableKernelError):
        k.l1_norm()


def test_radial_kernel_mass_in_2d():
    # uniform disk of radius 1 scaled to unit mass
    k = RadialKernel(lambda r: np.full(np.shape(r), 1.0 / math.pi), dim=2, radius=1.0,
                     profile_derivative=lambda r: np.zeros(np.shape(r)))
    assert k.l1_norm() == pytest.approx(1.0, rel=1e-10)
    assert k.regularity.kind == "bv"
    # TV is the jump across the unit circle: (1/pi) * 2 pi
    assert k.total_variation() == pytest.approx(2.0, rel=1e-10)
    assert k(np.array([[0.3, 0.3], [1.0, 0.5]])).tolist() == [1.0 / math.pi, 0.0]


def test_decay_condition_verdicts():
    # compact support: tail vanishes -> PASS
    rep = check_decay_condition(make_smoothed_kernel(0.5, 36), 1.0, [0.5, 1.0, 2.0])
    assert rep.verdict == "PASS"
    # two-sided Laplace tail: R * 2 * (1/2) e^{-R} = R e^{-R}, decreasing for R > 1
    lap = ClosedFormKernel(lambda x: 0.5 * np.exp(-np.abs(x)), breakpoints=(0.0,))
    rep = check_decay_condition(lap, 1.0, [2.0, 4.0, 8.0])
    assert rep.verdict == "INCONCLUSIVE"
    assert rep.sequence[0] == pytest.approx(2.0 * math.exp(-2.0), rel=1e-8)
    raw = ClosedFormKernel(lambda x: np.exp(-np.abs(x)), breakpoints=(0.0,))
    rep = check_decay_condition(raw, 1.0, [5.0, 10.0, 20.0])
    assert rep.verdict == "INCONCLUSIVE" and rep.decaying
    # two-sided tail: 2 R e^{-R}
    assert rep.sequence == pytest.approx([2.0 * R * math.exp(-R) for R in (5.0, 10.0, 20.0)], rel=1e-8)
    # Cauchy: R * tail ~ 2/pi, no decay
    cauchy = ClosedFormKernel(lambda x: 1.0 / (math.pi * (1.0 + x * x)))
    rep = check_decay_condition(cauchy, 1.0, [10.0, 100.0, 1000.0])
    assert rep.verdict == "NON_DECAY"
    with pytest.raises(ValueError):
        check_decay_condition(cauchy, 1.0, [2.0, 1.0])


def test_fingerprint_distinguishes_parameters():
    assert make_smoothed_kernel(0.5, 36).fingerprint() != make_smoothed_kernel(0.5, 72).fingerprint()
    assert make_smoothed_kernel(0.5, 36).fingerprint() == make_smoothed_kernel(0.5, 36).fingerprint()


def test_offset_formula_at_one_third_is_one():
    for n in (18, 36, 1000):
        assert smoothed_offset(1.0 / 3.0, n) == pytest.approx(1.0, abs=1e-15)
