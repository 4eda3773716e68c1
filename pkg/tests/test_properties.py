import dataclasses
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from thermoformal import decomposition as dec
from thermoformal import equilibrium as eq
from thermoformal import thermo as th
from thermoformal import BaseMap, BaseMapConfig
from thermoformal.config import parse_config, load_preset

FAST = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
SLOW = settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])

MILD = BaseMap(BaseMapConfig(m=1, kind="pitchfork", linear_factors=(2,), delta=0.5, lambda_u=0.9, rho=0.01))

bits_st = st.lists(st.integers(0, 1), min_size=1, max_size=24).map(lambda b: np.array(b, np.int8))
alpha_st = st.floats(0.05, 0.95)


@SLOW
@given(a=st.floats(-1, 1), c=st.floats(-3, 3))
def test_constant_shift_exact(a, c):
    phi = th.Potential.holder_test(1, a)
    base = eq.build_transfer_operator(MILD, phi, 256, gap=False).pressure
    shifted = eq.build_transfer_operator(MILD, phi.shifted(c), 256, gap=False).pressure
    assert shifted - base == pytest.approx(c, abs=1e-11)


@SLOW
@given(a=st.floats(0.05, 2.0))
def test_pressure_convex_in_t(a):
    ts = np.linspace(-1, 1, 7)
    P = [eq.build_transfer_operator(MILD, th.Potential.holder_test(1, a * t), 256, gap=False).pressure
         for t in ts]
    assert (np.diff(P, 2) >= -1e-9).all()


@SLOW
@given(a=st.floats(-2, 2))
def test_measure_is_probability(a):
    op = eq.build_transfer_operator(MILD, th.Potential.holder_test(1, a), 256, gap=False)
    w = eq.equilibrium_measure(op).weights
    assert (w >= 0).all() and w.sum() == pytest.approx(1, abs=1e-12)


@FAST
@given(u=bits_st, v=bits_st, alpha=alpha_st)
def test_good_words_concatenate(u, v, alpha):
    if dec.in_good(u, alpha) and dec.in_good(v, alpha):
        assert dec.in_good(np.concatenate([u, v]), alpha)


@FAST
@given(w=bits_st, alpha=alpha_st)
def test_decompose_maximal(w, alpha):
    s, pre, suf = dec.decompose(w, alpha)
    assert dec.in_good(pre, alpha)
    assert not any(dec.in_good(w[:k], alpha) for k in range(s + 1, w.size + 1))
    if suf.size:
        assert dec.classify_segment(suf, alpha)["in_S"]


@FAST
@given(w=bits_st)
def test_beta_times_n_is_integer(w):
    v = dec.birkhoff_fraction(w) * w.size
    assert abs(v - round(v)) < 1e-9


@FAST
@given(a=st.floats(0.0, 0.89), b=st.floats(0.0, 0.89), L=st.floats(1.0, 1.1), lu=st.floats(0.3, 0.95))
def test_theta_monotone(a, b, L, lu):
    lo, hi = min(a, b), max(a, b)
    bound = dec.eq1_bound(L, lu)
    if hi < bound:
        assert dec.theta_alpha(L, lu, lo) <= dec.theta_alpha(L, lu, hi) + 1e-15


@FAST
@given(y=st.tuples(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True)))
def test_inverse_branches_are_preimages(pf, y):
    Y = np.array([y])
    for sym in pf.g.symbol_tuples():
        X = pf.g.inverse_branch(Y, sym)
        d = np.abs(((pf.g.eval(X) - Y) + 0.5) % 1.0 - 0.5)
        assert d.max() < 1e-10


@FAST
@given(n=st.integers(1, 12), alpha=st.floats(0.0, 1.0), k=st.integers(2, 4))
def test_cylinder_formula_equals_enumeration(n, alpha, k):
    q = 1
    assert (th.cylinder_count((k, q), n, alpha).count_R_n
            == th.cylinder_count((k, q), n, alpha, mode="formula").count_R_n)


@FAST
@given(alpha=st.floats(0.01, 0.99), seed=st.integers(0, 2**31 - 1),
       eps=st.lists(st.floats(1e-4, 0.49), min_size=1, max_size=4),
       name=st.sampled_from(["linear", "pitchfork"]))
def test_config_round_trip(alpha, seed, eps, name):
    cfg = load_preset(name)
    cfg = dataclasses.replace(cfg, params=dataclasses.replace(cfg.params, alpha=alpha),
                              schedules=dataclasses.replace(cfg.schedules, eps=tuple(eps)))
    cfg = cfg.with_seed(seed)
    assert parse_config(cfg.to_ini()) == cfg
