import math

import numpy as np
import pytest

from thermoformal import thermo as th
from thermoformal import equilibrium as eq
from thermoformal import BaseMap, BaseMapConfig, SkewProduct
from thermoformal.solenoid import SolenoidPoint

LOG2 = math.log(2)


def test_geometric_potential_linear(lin):
    S = lin.attractor_sample(20, 200, seed=3)
    for b, z in zip(S.base, S.fiber):
        assert eq.geometric_potential(lin, SolenoidPoint(b, z)) == pytest.approx(-LOG2, abs=1e-6)


def test_geometric_potential_fixed_point(pf1):
    p = SolenoidPoint(np.array([0.0]), np.array([0j]))
    assert eq.geometric_potential(pf1, p) == pytest.approx(-math.log(2 - 1.05), abs=1e-9)


def test_geometric_birkhoff_average_linear(lin):
    p = lin.attractor_sample(1, 10, seed=0)
    p = SolenoidPoint(p.base[0], p.fiber[0])
    n = 20_000
    avg = th.birkhoff_sum(lin, th.Potential.geometric(lin), p, n) / n
    assert avg == pytest.approx(-LOG2, abs=1e-4)


def test_doubling_operator_exact(doubling):
    op = eq.build_transfer_operator(doubling, None, 1024)
    assert op.eigenvalue == 2.0 or op.eigenvalue == pytest.approx(2.0, abs=1e-14)
    assert np.allclose(op.right, 1 / 1024, atol=1e-15)
    for t in (0.25, 0.5, 1.0):
        opt = eq.build_transfer_operator(doubling, th.Potential.constant_value(-t * LOG2), 1024)
        assert opt.pressure == pytest.approx((1 - t) * LOG2, abs=1e-14)
    mu = eq.equilibrium_measure(op)
    assert np.allclose(mu.weights, 1 / 1024, atol=1e-15)
    assert mu.defect <= 1e-12


def test_constant_shift_scales_eigenvalue(pitch1):
    phi = th.Potential.holder_test(1, 0.3)
    a = eq.build_transfer_operator(pitch1, phi, 512)
    b = eq.build_transfer_operator(pitch1, phi.shifted(0.2), 512)
    assert b.pressure - a.pressure == pytest.approx(0.2, abs=1e-12)


def test_operator_json_omits_matrix(doubling):
    js = eq.build_transfer_operator(doubling, None, 256).to_json()
    assert {"N_cells", "eigenvalue", "gap", "defect"} <= set(js)
    assert "matrix" not in js


def test_misaligned_cells_rejected(doubling):
    with pytest.raises(ValueError):
        eq.build_transfer_operator(doubling, None, 1023)


@pytest.fixture(scope="module")
def mild():
    # expanding at the fixed point, so the SRB density is regular
    return SkewProduct(BaseMap(BaseMapConfig(m=1, kind="pitchfork", linear_factors=(2,), delta=0.5,
                                             lambda_u=0.9, rho=0.01)))


def test_measure_weights_and_defect_1d(mild):
    op = eq.build_transfer_operator(mild, eq.geometric_extrema(mild), 1024)
    mu = eq.equilibrium_measure(op)
    assert (mu.weights >= 0).all() and mu.weights.sum() == pytest.approx(1, abs=1e-12)
    assert mu.defect <= 1e-3


def test_defect_pitchfork_preset(pf, pf_cfg):
    op = eq.build_transfer_operator(pf, eq.geometric_extrema(pf), pf_cfg.cells())
    mu = eq.equilibrium_measure(op)
    assert (mu.weights >= 0).all() and mu.weights.sum() == pytest.approx(1, abs=1e-12)
    assert mu.defect <= 1e-3


def test_linear_pressure_curve(lin):
    pc = eq.pressure_curve(lin, 0.0, 1.25, 6, N_cells=1024, alpha=0.6)
    assert np.max(np.abs(pc.values - (1 - pc.t_grid) * LOG2)) <= 1e-8
    assert pc.root == pytest.approx(1.0, abs=1e-8)
    assert pc.values[0] == pytest.approx(LOG2, abs=1e-12)
    assert pc.convex and pc.decreasing and pc.l1_below


def test_pitchfork_pressure_curve(pf, pf_cfg):
    pc = eq.pressure_curve(pf, 0.0, 1.25, 6, N_cells=2304, alpha=pf_cfg.params.alpha)
    assert pc.values[0] == pytest.approx(math.log(pf.g.deg), abs=1e-10)
    assert pc.convex and pc.decreasing and pc.l1_below
    assert pc.root == pytest.approx(1.0, abs=5e-4)
    assert 0 < pc.t0 < 1


def test_pressure_curve_csv(tmp_path, lin):
    pc = eq.pressure_curve(lin, 0.0, 1.0, 3, N_cells=256, alpha=0.6)
    pc.to_csv(tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0].split(",")[:4] == ["t", "P", "l1", "l2"]


def test_lyapunov_linear(lin):
    ly = eq.lyapunov_exponents(lin, orbit_length=10_000, orbits=4)
    ex = sorted(ly["exponents"])
    assert ex[-1] == pytest.approx(LOG2, abs=1e-10)
    assert ex[0] == pytest.approx(math.log(lin.lambda_s), abs=1e-10)
    assert ly["lambda_plus"] == pytest.approx(LOG2, abs=1e-10)


def test_lyapunov_pitchfork(pf):
    ly = eq.lyapunov_exponents(pf, orbit_length=10_000, orbits=4)
    assert 0 < ly["lambda_plus"] <= math.log(pf.g.deg)
    for e in ly["fiber_exponents"]:
        assert e == pytest.approx(math.log(pf.lambda_s), abs=1e-10)


def test_attracting_fixed_point_has_no_expansion(pf1):
    # delta > 1 makes 0 attracting for the one-dimensional deformation
    assert eq.lyapunov_exponents(pf1, orbit_length=10_000, orbits=4)["lambda_plus"] == 0.0


def test_srb_linear_quick(lin):
    rep = eq.srb_check(lin, N_cells=1024, orbit_length=100_000, tol=0.02, trend_cells=(256, 512))
    assert rep.passed


def test_srb_hypothesis_examples(lin, pf1):
    assert eq.srb_hypothesis_check(lin, 0.6).passed
    rep = eq.srb_hypothesis_check(pf1, 0.8)
    c = rep["eq2_srb_relation"]
    assert c.value == pytest.approx(th.epsilon_alpha(0.8, 2, 1) + math.log(pf1.profile.L_global))
    assert c.value == pytest.approx(0.5517, abs=2e-4)
    assert rep.extras["sup_phi_geo"] == pytest.approx(-math.log(0.95), abs=1e-6)
    assert not rep.passed and c.margin < 0


def test_parameter_search_rows():
    base = BaseMapConfig(m=1, kind="pitchfork", linear_factors=(2,), delta=1.05, lambda_u=0.9, rho=0.01)
    rows = eq.srb_parameter_search(base, deltas=(0.3, 0.6, 1.05, 1.3), lambda_us=(0.55, 0.9),
                                   alphas=(0.5, 0.8))
    assert len(rows) == 16
    for r in rows:
        if r["note"]:
            assert not r["pass"] and not r["alpha_valid"]
            continue
        assert r["margin"] == pytest.approx(r["rhs"] - r["lhs"])
        assert r["pass"] == (r["lhs"] < r["rhs"] and r["alpha_valid"])
    # one base axis: L = 1 / min g' while the relation needs min g' > 1
    assert all(r["q"] == 0 for r in rows if r["pass"])
    assert any(r["q"] == 1 for r in rows)


def test_gap_linear_no_degeneration(lin):
    geo = th.Potential.geometric(lin)
    gaps = [eq.build_transfer_operator(lin, geo, c).spectral_gap for c in (256, 512, 1024)]
    assert min(gaps) > 0.9


def test_gap_pitchfork_no_collapse(pf):
    geo = eq.geometric_extrema(pf)
    gaps = [eq.build_transfer_operator(pf, geo, c).spectral_gap for c in (576, 2304, 9216)]
    assert min(gaps) > 0.25
    assert gaps[-1] / gaps[0] > 0.5
