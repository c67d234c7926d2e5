import math
import zlib
from fractions import Fraction as Fr

import mpmath
import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from smpkit.dist import (
    CompositionKind,
    Convolution,
    Dirac,
    Exponential,
    Mixture,
    PointwiseMax,
    PointwiseMin,
    Uniform,
    c_clamped,
    compose_cdf,
    convolve,
    eps_faster,
    eps_faster_numeric,
    evaluate,
    least_acceleration,
    least_acceleration_numeric,
    parse_cdf,
)
from smpkit.errors import MalformedCdf, ParseError, RateCompositionOnNonExponential, UnsupportedShape

PROPS = settings(max_examples=500, deadline=None, derandomize=True,
                 suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much])


def hypoexp_oracle(a, b, t):
    """Two-phase hypoexponential CDF in high precision."""
    mpmath.mp.dps = 30
    a, b, t = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(t)
    return float(1 - (b * mpmath.e ** (-a * t) - a * mpmath.e ** (-b * t)) / (b - a))


# -- evaluation ---------------------------------------------------------------

def test_exponential_at_zero():
    assert evaluate(Exponential(2), 0) == 0


def test_dirac_zero_is_one_everywhere():
    assert all(evaluate(Dirac(0), t) == 1 for t in (0, 0.1, 7))


def test_hypoexponential_product_example():
    value = evaluate(Convolution((Exponential(20), Exponential(Fr(1, 20)))), 2)
    assert value == pytest.approx(hypoexp_oracle(20, 0.05, 2), abs=1e-12)
    assert value == pytest.approx(0.0929, abs=1e-3)


def test_hypoexponential_two_chain():
    value = evaluate(convolve(Exponential(2), Exponential(Fr(1, 2))), 2)
    assert value == pytest.approx(0.515599291400988, abs=1e-12)
    assert value == pytest.approx(0.5156, abs=1e-3)


def test_repeated_rates_match_erlang():
    erlang = 1 - math.exp(-3.0) * (1 + 3.0 + 4.5)
    assert evaluate(Convolution((Exponential(3),) * 3), 1.0) == pytest.approx(erlang, abs=1e-12)


def test_uniform_sum_is_triangular():
    tri = Convolution((Uniform(0, 1), Uniform(0, 1)))
    assert evaluate(tri, 0.5) == pytest.approx(0.125, abs=1e-12)
    assert evaluate(tri, 1.5) == pytest.approx(0.875, abs=1e-12)


def test_mixed_block_matches_quadrature():
    from scipy.integrate import quad

    F = Convolution((Exponential(2), Uniform(1, 3)))
    expect = quad(lambda x: 0.5 * (1 - math.exp(-2 * (2.5 - x))), 1, 2.5, epsabs=1e-13)[0]
    assert evaluate(F, 2.5) == pytest.approx(expect, abs=1e-10)


def test_quantile_fold_matches_quadrature():
    from scipy.integrate import quad

    def fx(x):
        return max(min(x / 2, 1), 1 - math.exp(-x)) if x > 0 else 0.0

    F = Convolution((PointwiseMax(Uniform(0, 2), Exponential(1)), Exponential(2)))
    for t in (0.5, 1.0, 2.0):
        expect = quad(lambda y: fx(t - y) * 2 * math.exp(-2 * y), 0, t, limit=200, epsabs=1e-13)[0]
        assert evaluate(F, t) == pytest.approx(expect, abs=1e-9)


def test_malformed_rejected_at_construction():
    with pytest.raises(MalformedCdf):
        Uniform(2, 2)
    with pytest.raises(MalformedCdf):
        Exponential(0)
    with pytest.raises(MalformedCdf):
        Mixture((Fr(1, 2), Fr(2, 3)), (Dirac(0), Dirac(1)))


# -- convolution --------------------------------------------------------------

def test_dirac_zero_is_convolution_identity():
    assert convolve(Dirac(0), Exponential(3)) == Exponential(3)


def test_dirac_shifts_add():
    assert convolve(Dirac(1), Dirac(2)) == Dirac(3)


def test_dirac_shifts_uniform():
    assert convolve(Dirac(1), Uniform(0, 2)) == Uniform(1, 3)


def test_convolution_commutes_on_grid():
    F, G = Uniform(0, 1), Exponential(3)
    t = np.linspace(0, 4, 50)
    assert np.allclose(convolve(F, G).cdf(t), convolve(G, F).cdf(t), atol=1e-12)


def test_mixture_inside_convolution():
    F = Convolution((Mixture((Fr(1, 2), Fr(1, 2)), (Dirac(0), Dirac(1))), Exponential(1)))
    expect = 0.5 * (1 - math.exp(-2)) + 0.5 * (1 - math.exp(-1))
    assert evaluate(F, 2) == pytest.approx(expect, abs=1e-12)


# -- eps-faster ---------------------------------------------------------------

def test_dirac_zero_is_fastest():
    assert eps_faster(Dirac(0), Exponential(7), 1)


def test_exponential_rate_ratio():
    assert eps_faster(Exponential(2), Exponential(4), 2)
    assert not eps_faster(Exponential(2), Exponential(4), Fr(19, 10))


@pytest.mark.parametrize("eps", [Fr(1, 10), 1, 5, 1000])
def test_exponential_never_beats_uniform(eps):
    assert not eps_faster(Exponential(3), Uniform(1, 2), eps)
    assert not eps_faster_numeric(Exponential(3), Uniform(1, 2), eps)


def test_numeric_route_agrees_on_exponentials():
    assert eps_faster_numeric(Exponential(2), Exponential(4), 2)
    assert not eps_faster_numeric(Exponential(2), Exponential(4), Fr(19, 10))


# -- acceleration constants ---------------------------------------------------

def test_least_acceleration_examples():
    assert least_acceleration(Exponential(2), Exponential(4)) == 2
    assert least_acceleration(Uniform(0, 3), Exponential(Fr(1, 2))) == Fr(3, 2)
    assert least_acceleration(Uniform(1, 4), Uniform(2, 3)) == Fr(4, 3)


def test_least_acceleration_infinite_cases():
    assert least_acceleration(Exponential(1), Uniform(1, 2)) == math.inf
    assert least_acceleration(Uniform(1, 2), Exponential(1)) == math.inf
    assert least_acceleration(Exponential(1), Dirac(0)) == math.inf


def test_least_acceleration_unsupported():
    with pytest.raises(UnsupportedShape):
        least_acceleration(Convolution((Exponential(1), Exponential(2))), Exponential(1))
    with pytest.raises(UnsupportedShape):
        least_acceleration(Exponential(1), PointwiseMin(Exponential(1), Exponential(2)))


def test_c_clamped_examples():
    assert c_clamped(Exponential(4), Exponential(2)) == 1
    assert c_clamped(Exponential(2), Exponential(4)) == 2
    assert c_clamped(Exponential(1), Uniform(0, 1)) == math.inf


def test_numeric_oracle_examples():
    assert least_acceleration_numeric(Exponential(2), Exponential(4)) == pytest.approx(2, abs=1e-6)
    assert least_acceleration_numeric(Uniform(1, 3), Uniform(1, 3)) == pytest.approx(1, abs=1e-6)
    F, G = PointwiseMax(Exponential(1), Uniform(0, 2)), Uniform(1, 3)
    assert least_acceleration(F, G) == Fr(2, 3)
    assert least_acceleration_numeric(F, G) == pytest.approx(2 / 3, abs=1e-6)


def test_max_composition_small_c_counterexample():
    # Unif(0,b) against max(Exp(t2), Unif(c,d)) with 1/(d-c) >= t2: the
    # exponential branch still binds near zero, so the answer is b*t2 here.
    F = Uniform(0, 1)
    G = PointwiseMax(Exponential(2), Uniform(Fr(9, 10), 1))
    assert least_acceleration(F, G) == 2
    assert least_acceleration_numeric(F, G) == pytest.approx(2, abs=1e-6)


def test_lambert_branch_against_oracle():
    F = PointwiseMax(Exponential(1), Dirac(1))
    G = Uniform(Fr(1, 2), 1)
    closed = least_acceleration(F, G)
    assert isinstance(closed, float)
    # The crossing solves -ln(2(1-t)) = 1 in closed form.
    assert closed == pytest.approx(1 / (1 - 0.5 / math.e), abs=1e-12)
    assert closed == pytest.approx(least_acceleration_numeric(F, G), abs=1e-6)


# -- composition --------------------------------------------------------------

def test_product_rate():
    assert compose_cdf(CompositionKind.PRODUCT_RATE, Exponential(2), Exponential(10)) == Exponential(20)


def test_max_cdf_of_exponentials():
    F = compose_cdf(CompositionKind.MAX_CDF, Exponential(Fr(1, 2)), Exponential(2))
    t = np.geomspace(1e-4, 20, 200)
    assert np.allclose(F.cdf(t), Exponential(2).cdf(t), atol=1e-15)


def test_min_rate():
    assert compose_cdf(CompositionKind.MIN_RATE, Exponential(2), Exponential(1)) == Exponential(1)


def test_rate_composition_needs_exponentials():
    with pytest.raises(RateCompositionOnNonExponential):
        compose_cdf(CompositionKind.MAX_RATE, Uniform(0, 1), Exponential(1))


# -- literals -----------------------------------------------------------------

def test_literal_round_trip():
    text = "conv(exp(2),mix(1/3:dirac(1),0.5:unif(0,2)),max(exp(1),min(unif(1,2),dirac(3))))"
    F = parse_cdf(text)
    assert parse_cdf(F.to_literal()) == F
    assert F.to_literal() == text


def test_literal_error_offset():
    with pytest.raises(ParseError) as info:
        parse_cdf("conv(exp(2), foo(1))")
    assert info.value.offset == 13


# -- properties ---------------------------------------------------------------

def _q(lo, hi):
    return st.integers(lo, hi).map(lambda k: Fr(k, 4))


base_cdf = st.one_of(
    _q(0, 12).map(Dirac),
    st.tuples(_q(0, 8), _q(1, 8)).map(lambda ab: Uniform(ab[0], ab[0] + ab[1])),
    _q(1, 16).map(Exponential),
)
cdf_pair_family = st.one_of(base_cdf, st.tuples(base_cdf, base_cdf).map(lambda p: PointwiseMax(*p)))
epsilons = st.integers(1, 40).map(lambda k: Fr(k, 8))


@PROPS
@given(base_cdf, base_cdf, epsilons, epsilons)
def test_prop_monotone_in_eps(F, G, e1, e2):
    lo, hi = min(e1, e2), max(e1, e2)
    if eps_faster(F, G, lo):
        assert eps_faster(F, G, hi)
    if eps_faster_numeric(F, G, lo):
        assert eps_faster_numeric(F, G, hi)


@PROPS
@given(base_cdf, base_cdf, base_cdf, base_cdf)
def test_prop_convolution_congruence(F1, F2, G1, G2):
    eps = max(least_acceleration(F1, F2), least_acceleration(G1, G2), Fr(1, 100))
    if eps == math.inf:
        return
    assert eps_faster_numeric(convolve(F1, G1), convolve(F2, G2), eps)


@PROPS
@given(cdf_pair_family, cdf_pair_family)
def test_prop_oracle_equivalence(F, G):
    closed = least_acceleration(F, G)
    numeric = least_acceleration_numeric(F, G)
    if closed == math.inf:
        assert numeric == math.inf
    else:
        assert numeric == pytest.approx(float(closed), abs=1e-6, rel=1e-6)


@settings(max_examples=25, deadline=None, derandomize=True)
@given(st.lists(_q(1, 16), min_size=1, max_size=4), _q(1, 16))
def test_prop_exponential_convolution_monte_carlo(rates, t):
    F = Convolution(tuple(Exponential(r) for r in rates))
    rng = np.random.default_rng(zlib.crc32(repr((rates, t)).encode()))
    n = 10**6
    x = sum(rng.exponential(1 / float(r), n) for r in rates)
    hit = float((x <= float(t)).mean())
    se = math.sqrt(max(hit * (1 - hit), 1e-12) / n)
    assert abs(evaluate(F, float(t)) - hit) <= 3 * se + 1e-6


rate_cdf = _q(1, 16).map(Exponential)
rate_kinds = [CompositionKind.PRODUCT_RATE, CompositionKind.MIN_RATE, CompositionKind.MAX_RATE]


@PROPS
@given(rate_cdf, rate_cdf, rate_cdf, st.sampled_from(rate_kinds))
def test_prop_monotonic_rate_composition(F, G, H, star):
    eps = c_clamped(F, G)
    assert eps_faster(compose_cdf(star, F, H), compose_cdf(star, G, H), eps)


@PROPS
@given(base_cdf, base_cdf, base_cdf)
def test_prop_monotonic_max_composition(F, G, H):
    # The clamp matters: below 1 the third CDF is slowed down on one side only.
    eps = c_clamped(F, G)
    if eps == math.inf:
        return
    star = CompositionKind.MAX_CDF
    assert eps_faster(compose_cdf(star, F, H), compose_cdf(star, G, H), eps)


@PROPS
@given(cdf_pair_family, _q(0, 40))
def test_prop_eval_is_a_cdf(F, t):
    v = evaluate(F, float(t))
    assert 0.0 <= v <= 1.0
    assert evaluate(F, float(t) + 0.25) >= v
