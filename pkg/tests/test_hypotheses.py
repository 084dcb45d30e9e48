import numpy as np
import pytest

from amn.field import Field, unit_quadrature
from amn.hypotheses import (
    HypothesisConstants,
    check_sum_condition,
    default_lambda_sweep,
    estimate_translation_defect,
    fit_asymptotic,
    fit_constants,
    fit_multiplicativity,
)
from amn.space import DistanceSpace, parse_spec, zoo_c_l1, zoo_jitter, zoo_lp, zoo_quasi_lp


def shifted_l1(dim=2):
    """|x - y|_1 + 1 off the diagonal: translation invariant, additive defect 1."""
    def kernel(x, y):
        t = np.abs(x - y).sum(axis=(-2, -1))
        return np.where(t > 0, t + 1.0, 0.0)
    return DistanceSpace(Field.REAL, dim, "test:shifted-l1", kernel)


def test_lambda_sweep_contents():
    sweep = default_lambda_sweep(unit_quadrature(Field.REAL, 2), max_exp=3)
    assert sorted(sweep[:, 0].tolist()) == [-8, -4, -2, -1, 1, 2, 4, 8]
    csweep = default_lambda_sweep(unit_quadrature(Field.COMPLEX, 4), max_exp=1)
    assert len(csweep) == 8


def test_c2prime_formula():
    k = HypothesisConstants(c0=0, c1=2, c2=3, c3=5, samples_used=1, max_residual=0)
    assert k.c2prime == 2 * 3 + 2 * 5 + 3
    assert k.as_dict()["c2prime"] == 19


@pytest.mark.parametrize("spec", ["zoo:lp?field=R&dim=3&p=2", "zoo:lp?field=C&dim=2&p=1",
                                  "zoo:lp?field=H&dim=2&p=inf"])
def test_lp_constants_are_exact(spec):
    space = parse_spec(spec)
    k = fit_constants(space, seed=3, trials=500)
    assert (k.c0, k.c1) == (0.0, 1.0)
    if space.field is Field.REAL:
        assert (k.c2, k.c3) == (0.0, 0.0)
    else:
        # rotation by non-axis units rounds at the 1e-16 * |λ| * d level
        assert k.c2 <= 1e-9 and k.c3 <= 1e-9
    assert not k.divergent and k.max_residual <= 0


def test_shifted_l1_multiplicativity_oracle():
    # residual |λ|(t+1) - (|λ|t + 1) = |λ| - 1, so c2 = max (1 - 1/|λ|) = 1 - 2^-10, c3 = 0
    f = fit_multiplicativity(shifted_l1(), 1.0, seed=0, trials=400)
    assert f.c3 == 0.0
    assert f.c2 == pytest.approx(1 - 2.0**-10, abs=1e-12)
    assert not f.divergent
    assert estimate_translation_defect(shifted_l1(), seed=0, trials=400) == 0.0


def test_warp_constants_bounded_by_c():
    k = fit_constants(parse_spec("zoo:warp?base=lp&p=2&dim=3&c=10"), seed=42, trials=1000)
    assert k.c0 == 0 and k.c1 == 1
    assert 9.0 < k.c2 <= 10.0
    assert k.c3 <= 10.0


def test_c_l1_needs_c1_above_sqrt2():
    k = fit_constants(zoo_c_l1(1), seed=0, trials=600)
    assert k.c1 == 1.5 and k.c2 == 0 and k.c3 == 0 and not k.divergent
    assert fit_multiplicativity(zoo_c_l1(1), 1.1, seed=0, trials=600).divergent


def test_quasi_lp_divergent():
    for dim in (1, 2):
        f = fit_multiplicativity(zoo_quasi_lp(dim, 0.5), 1.05, seed=0, trials=1000)
        assert f.divergent and f.growth > 0.1
    k = fit_constants(zoo_quasi_lp(2, 0.5), seed=0, trials=600)
    assert k.divergent


def test_multiplicativity_ceiling_triggers_divergence():
    f = fit_multiplicativity(parse_spec("zoo:warp?base=lp&p=2&dim=2&c=10"), 1.0, seed=0,
                             trials=200, ceiling=1.0)
    assert f.divergent


def test_asymptotic_grid_sorted_and_finite_for_warp():
    fit = fit_asymptotic(parse_spec("zoo:warp?base=lp&p=2&dim=3&c=10"), seed=1, trials=500)
    assert [row[0] for row in fit.grid] == [1.5, 1.25, 1.1, 1.01]
    assert not fit.divergent
    assert all(np.isfinite(row).all() for row in fit.grid)
    assert fit_asymptotic(zoo_quasi_lp(2, 0.5), seed=1, trials=500).divergent
    with pytest.raises(ValueError):
        fit_asymptotic(zoo_lp(Field.REAL, 2, 2), c1_grid=(1.0,))


def test_translation_defect_for_jitter_within_range():
    c0 = estimate_translation_defect(zoo_jitter(zoo_lp(Field.REAL, 2, 2), 0.25), seed=0,
                                     trials=1000)
    assert 0 < c0 <= 0.5


def test_sum_condition_values():
    assert check_sum_condition(zoo_lp(Field.REAL, 3, 2), 1.1, seed=0, trials=1000).c0 == 0.0
    warp = check_sum_condition(parse_spec("zoo:warp?base=lp&p=2&dim=3&c=10"), 1.1, seed=0,
                               trials=1000)
    assert 0 <= warp.c0 <= 10 and not warp.divergent
    # shifted l1: lhs - 1.1 rhs = 1 + t - 1.1 (t + n) < 0 for every tuple
    assert check_sum_condition(shifted_l1(), 1.1, seed=0, trials=300).c0 == 0.0


def test_argument_validation():
    s = zoo_lp(Field.REAL, 2, 2)
    with pytest.raises(ValueError):
        fit_multiplicativity(s, 0.5)
    with pytest.raises(ValueError):
        fit_multiplicativity(s, 1.0, lambda_sweep=np.ones((3, 2)))
    with pytest.raises(ValueError):
        check_sum_condition(s, 1.0)
    with pytest.raises(ValueError):
        check_sum_condition(s, 1.1, max_n=1)
    with pytest.raises(ValueError):
        estimate_translation_defect(s, trials=0)


def test_fits_are_seed_deterministic():
    s = parse_spec("zoo:warp?base=lp&p=2&dim=2&c=3")
    assert fit_constants(s, seed=9, trials=300) == fit_constants(s, seed=9, trials=300)
