import dataclasses
import math

import numpy as np
import pytest

from thermoformal import thermo as th
from thermoformal.decomposition import DecompositionParams
from thermoformal.equilibrium import build_transfer_operator
from thermoformal.solenoid import SolenoidPoint

LOG2 = math.log(2)


# -- Bowen metric and Birkhoff sums -------------------------------------------

def test_bowen_distance_examples(lin, doubling):
    p = SolenoidPoint(np.array([0.1]), np.array([0.2]))
    q = SolenoidPoint(np.array([0.13]), np.array([0.25j]))
    assert th.bowen_distance(lin, p, q, 1) == pytest.approx(lin.metric(p, q))
    assert th.bowen_distance(lin, p, p, 7) == 0.0
    x, y = np.array([0.1]), np.array([0.1 + 2.0**-10])
    assert th.bowen_distance(doubling, (x, None), (y, None), 8) == pytest.approx(2.0**-3, rel=1e-9)


def test_birkhoff_examples(lin):
    p = SolenoidPoint(np.array([0.3]), np.array([0.1]))
    assert th.birkhoff_sum(lin, th.Potential.constant_value(0.7), p, 5) == pytest.approx(3.5)
    assert th.birkhoff_sum(lin, th.Potential.geometric(lin), p, 0) == 0.0
    assert th.birkhoff_sum(lin, th.Potential.geometric(lin), p, 10) == pytest.approx(-10 * LOG2, abs=1e-6)


# -- separated sets -------------------------------------------------------------

def test_separated_singleton(lin):
    S = lin.attractor_sample(30, 500, seed=0)
    E = th.build_separated_set(lin, (S.base, S.fiber), 3, 3.0)
    assert len(E) == 1


def test_separated_doubling_grid(doubling):
    grid = (np.arange(10_000) / 10_000)[:, None]
    assert len(th.build_separated_set(doubling, (grid, None), 3, 0.25)) == 16
    assert len(th.build_separated_set(doubling, (grid, None), 1, 0.5)) == 2


def test_separation_is_enforced(pf):
    S = pf.attractor_sample(20, 4000, seed=1)
    E = th.build_separated_set(pf, (S.base, S.fiber), 4, 0.1)
    assert E.min_separation >= 0.1


# -- partition sums and pressure -------------------------------------------------

def test_partition_sum_zero_and_constant(lin):
    a = th.partition_sum(lin, th.Potential.zero(), "ALL", 4, 0.1, candidates=4096, seed=0)
    assert a.log_sum == pytest.approx(math.log(a.size))
    b = th.partition_sum(lin, th.Potential.constant_value(0.3), "ALL", 4, 0.1, candidates=4096, seed=0)
    assert b.size == a.size
    assert b.log_sum == pytest.approx(a.log_sum + 4 * 0.3, abs=1e-12)


def test_s_collection_empty_for_linear(lin):
    ps = th.partition_sum(lin, th.Potential.zero(), "S", 5, 0.1, candidates=1024, alpha=0.6)
    assert ps.log_sum == -math.inf
    est = th.estimate_entropy(lin, "S", alpha=0.6, eps_schedule=(0.1,), n_schedule=range(1, 5),
                              candidates=1024)
    assert est.extrapolated == -math.inf and "empty_collection" in est.flags


def test_pressure_shift_is_exact(lin):
    kw = dict(eps_schedule=(0.1, 0.05), n_schedule=range(1, 10), candidates=8192, seed=0)
    a = th.estimate_pressure(lin, th.Potential.zero(), **kw)
    b = th.estimate_pressure(lin, th.Potential.constant_value(0.25), **kw)
    assert b.extrapolated - a.extrapolated == pytest.approx(0.25, abs=1e-9)


def test_pressure_csv(tmp_path, lin):
    est = th.estimate_entropy(lin, eps_schedule=(0.1,), n_schedule=range(1, 6), candidates=2048)
    est.to_csv(tmp_path / "p.csv")
    head = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert head.split(",")[:3] == ["epsilon", "n", "log_partition_sum"]


# -- eps(alpha), Psi and the certificate ------------------------------------------

def test_epsilon_alpha_examples():
    assert th.epsilon_alpha(1.0, 2, 1) == 0.0
    assert th.epsilon_alpha(0.5, 2, 1) == pytest.approx(LOG2)
    assert th.epsilon_alpha(0.8, 2, 1) == pytest.approx(0.5004, abs=1e-4)


def test_psi_examples(lin, pf1):
    assert th.psi_bound(lin, th.Potential.zero(), 0.6) == -math.inf
    prof = pf1.profile
    psi = th.psi_bound(pf1, th.Potential.zero(), 0.8)
    assert psi == pytest.approx(th.epsilon_alpha(0.8, 2, 1) + math.log(prof.L_global), rel=1e-12)
    assert psi == pytest.approx(0.5517, abs=2e-4)


def test_certificate_examples(lin, pf1):
    P0 = build_transfer_operator(pf1.g, None, 1024).pressure
    assert P0 == pytest.approx(LOG2, abs=1e-12)
    assert th.uniqueness_certificate(lin, th.Potential.zero(), 0.6, LOG2).passed
    rep = th.uniqueness_certificate(pf1, th.Potential.zero(), 0.8, P0)
    assert rep.passed == (th.psi_bound(pf1, th.Potential.zero(), 0.8) < P0)
    assert rep.passed
    spike = dataclasses.replace(th.Potential.zero(), kind="constant", sup_on_omega=100.0)
    assert not th.uniqueness_certificate(pf1, spike, 0.8, P0).passed


def test_variation_gap_examples(lin, pf1):
    assert th.variation_gap(pf1, th.Potential.constant_value(0.4), 0.8).passed
    phi = th.estimate_extrema(pf1, th.Potential.holder_test(1, 0.1), samples=20_000)
    rep = th.variation_gap(pf1, phi, 0.8)
    c = rep["variation_gap"]
    assert c.value == pytest.approx(0.2, abs=1e-6)
    assert c.bound == pytest.approx(LOG2 - th.psi_bound(pf1, th.Potential.zero(), 0.8), rel=1e-12)
    assert c.passed == (0.2 < c.bound)
    assert th.variation_gap(lin, phi, 0.6).passed


# -- Bowen property ------------------------------------------------------------

def test_bowen_constant_potential(lin):
    prm = DecompositionParams.from_skew(lin, 0.6)
    rep = th.bowen_variation(lin, th.Potential.constant_value(1.0), prm, num_samples=200, n_values=(5, 10))
    assert max(rep.extras["per_n"].values()) == 0.0


def test_bowen_single_step(lin):
    prm = DecompositionParams.from_skew(lin, 0.6)
    phi = th.Potential.holder_test(1, 1.0)
    rep = th.bowen_variation(lin, phi, prm, eta=0.01, num_samples=300, n_values=(1,))
    worst = max(v for v in rep.extras["per_n"].values())
    assert worst <= phi.holder_K * 0.01


def test_bowen_doubling_cos(lin):
    prm = DecompositionParams.from_skew(lin, 0.6)
    rep = th.bowen_variation(lin, th.Potential.holder_test(1, 1.0), prm, eta=0.01, num_samples=500)
    assert rep.passed


# -- cylinder counts -------------------------------------------------------------

def test_cylinder_examples():
    assert th.cylinder_count((2, 1), 7, 0.0).count_R_n == 2**7
    c = th.cylinder_count((2, 1), 10, 1.0)
    assert c.count_R_n == 1 and c.bound == pytest.approx(1.0) and c.ok
    c = th.cylinder_count((2, 1), 12, 0.75)
    assert c.count_R_n == sum(math.comb(12, k) for k in range(9, 13)) == 299
    assert c.bound == pytest.approx(math.exp(12 * th.epsilon_alpha(0.75, 2, 1)))
    assert c.ok


def test_cylinder_formula_matches_enumeration():
    for n in range(1, 11):
        for a in (0.3, 0.6, 0.9):
            assert (th.cylinder_count((3, 1), n, a).count_R_n
                    == th.cylinder_count((3, 1), n, a, mode="formula").count_R_n)
    with pytest.raises(ValueError, match="formula"):
        th.cylinder_count((2, 1), 30, 0.5)
