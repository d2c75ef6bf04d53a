"""Tests for density reconstruction and real-space functionals."""

import math
import warnings

import numpy as np
import pytest

from maxcool import realspace as rs
from maxcool import spectral as sp

# high-precision oracle values (adaptive quadrature + 1e6-point Simpson
# cross-check on the closed forms; agreement 9e-16)
I_MIX_ORACLE = 3.143453653619584       # Fisher info of 0.5/0.6/1.4 mixture
L1_PAIR_ORACLE = 0.168312729121393     # L1(Maxwellian 1.0, Maxwellian 1.2)
L2_MAXW_ORACLE = 0.149827868788306     # ||M_1||_2 = (4 pi)^{-3/4}
H_MIX_ORACLE = 0.018876286765113       # H(mixture | M_1)
RATIO_MIX_ORACLE = 0.349590594471935   # sup x phi / sqrt(I) for the mixture
NASH_LHS_ORACLE = 2.890067818451       # ||M_1||_{H^1}, = sqrt(1.5) pi^{3/4}
NASH_RHS_ORACLE = 1.169427716860       # c_{1,1/2} ||M_1||_{H^{3/4}}^{10/9}
L1LEM_MAXW_ORACLE = 1.591743823583     # C(2) (int M^2)^{4/11} 15^{3/11}
L1LEM_MIX_ORACLE = 1.765100880831      # same for the mixture (m4 = 17.4)


@pytest.fixture(scope="module")
def grid():
    return sp.RadialGrid(2048, 40.0)


@pytest.fixture(scope="module")
def r10():
    return rs.default_r_nodes(10.0, 2001)


@pytest.fixture(scope="module")
def maxw(grid, r10):
    phi = sp.CharacteristicProfile.maxwellian(grid, 1.0)
    return phi, rs.reconstruct(phi, r10)


@pytest.fixture(scope="module")
def bimax(grid, r10):
    phi = sp.CharacteristicProfile.bimaxwellian(grid)
    return phi, rs.reconstruct(phi, r10)


# ---------------------------------------------------------------------------
# types and validation

def test_r_nodes_and_density_validation(r10):
    assert r10[0] == 0.0 and len(r10) == 2001
    with pytest.raises(ValueError):
        rs.default_r_nodes(-1.0)
    with pytest.raises(ValueError):
        rs.RadialDensity(r10 + 0.1, np.ones_like(r10))  # not starting at 0
    bad_r = r10.copy()
    bad_r[500] += 0.001
    with pytest.raises(ValueError):
        rs.RadialDensity(bad_r, np.ones_like(r10))  # non-uniform
    # truncating a Maxwellian at r_max = 4 loses ~1e-3 mass
    short = rs.default_r_nodes(4.0, 801)
    vals = (2 * math.pi) ** -1.5 * np.exp(-short ** 2 / 2)
    with pytest.raises(ValueError, match="mass"):
        rs.RadialDensity(short, vals)
    with pytest.raises(ValueError):
        rs.RadialDensity.mixture(r10, p=1.5)
    with pytest.raises(ValueError):
        rs.RadialDensity.maxwellian(r10, -1.0)


def test_density_moments(r10):
    M = rs.RadialDensity.maxwellian(r10, 1.0)
    assert M.mass == pytest.approx(1.0, abs=1e-9)
    assert M.m2 == pytest.approx(3.0, abs=1e-9)
    assert M.moment(0.0) == pytest.approx(1.0, abs=1e-9)
    assert M.moment(4.0) == pytest.approx(15.0, abs=1e-6)
    B = rs.RadialDensity.mixture(r10)
    assert B.m2 == pytest.approx(3.0, abs=1e-9)  # 0.5*1.8 + 0.5*4.2
    assert B.moment(4.0) == pytest.approx(17.4, abs=1e-6)
    with pytest.raises(ValueError):
        M.moment(-1.0)


def test_density_clips_tiny_negative_lobes(r10):
    vals = (2 * math.pi) ** -1.5 * np.exp(-r10 ** 2 / 2)
    vals[1500:1510] = -1e-12
    f = rs.RadialDensity(r10, vals)
    assert np.all(f.values >= 0.0)
    assert 0.0 < f.clipped_mass < 1e-6
    # a fat negative lobe blows the budget
    vals[1000:1100] -= 1e-3
    with pytest.raises(ValueError, match="clipped"):
        rs.RadialDensity(r10, vals)


# ---------------------------------------------------------------------------
# reconstruction

def test_reconstruct_gaussian(maxw, r10):
    phi, f = maxw
    exact = (2 * math.pi) ** -1.5 * np.exp(-r10 ** 2 / 2)
    assert np.max(np.abs(f.values - exact)) < 1e-10
    assert f.mass == pytest.approx(1.0, abs=1e-9)


def test_reconstruct_mixture(bimax, r10):
    phi, f = bimax
    exact = rs.RadialDensity.mixture(r10).values
    assert np.max(np.abs(f.values - exact)) < 1e-10
    assert f.meta["source"] == "reconstruct"


def test_reconstruct_moment_consistency(bimax):
    phi, f = bimax
    assert f.m2 / sp.moment(phi, 2) == pytest.approx(1.0, abs=1e-4)


def test_reconstruct_refuses_undecayed_tail(r10):
    phi = sp.CharacteristicProfile.bimaxwellian(sp.RadialGrid(256, 3.0))
    with pytest.raises(ValueError, match="required x_max"):
        rs.reconstruct(phi, r10)


def test_forward_round_trip(bimax, grid):
    phi, f = bimax
    back = rs.characteristic_from_density(f, grid)
    mask = grid.x <= grid.x_max / 2
    assert np.max(np.abs(back.values[mask] - phi.values[mask])) < 1e-10
    assert back.values[0] == 1.0


def test_forward_transform_warns_when_underresolved():
    coarse = rs.default_r_nodes(8.0, 81)  # dr = 0.1: sin(r*50) underresolved
    f = rs.RadialDensity.maxwellian(coarse, 1.0)
    with pytest.warns(UserWarning, match="underresolve"):
        rs.characteristic_from_density(f, sp.RadialGrid(512, 50.0))


# ---------------------------------------------------------------------------
# Fisher information

def test_fisher_maxwellian(r10):
    # I(Maxwellian theta) = 3/theta; centered differences are exact on
    # quadratic log-densities, so only quadrature error remains
    I1 = rs.fisher_information(rs.RadialDensity.maxwellian(r10, 1.0))
    assert I1 == pytest.approx(3.0, abs=1e-9)
    I2 = rs.fisher_information(rs.RadialDensity.maxwellian(rs.default_r_nodes(), 2.0))
    assert I2 == pytest.approx(1.5, abs=2e-5)  # r_max=8 truncates the integrand


def test_fisher_mixture_regression(r10):
    I = rs.fisher_information(rs.RadialDensity.mixture(r10))
    assert I == pytest.approx(I_MIX_ORACLE, abs=1e-5)


def test_fisher_dilation_covariance(r10):
    # sampling f^(lam)(v) = lam^3 f(lam v) on nodes r/lam makes the discrete
    # problem identical up to powers of lam: covariance is exact
    f = rs.RadialDensity.mixture(r10)
    I = rs.fisher_information(f)
    for lam in (0.5, 2.0):
        fl = rs.RadialDensity(f.r / lam, lam ** 3 * f.values)
        assert rs.fisher_information(fl) / (lam ** 2 * I) == pytest.approx(
            1.0, abs=1e-12)


def test_fisher_support_truncation_warns(r10):
    f = rs.RadialDensity.maxwellian(r10, 1.0)
    f.values[400] = 1e-20  # interior dip below the support floor
    with pytest.warns(UserWarning, match="truncation"):
        I = rs.fisher_information(f)
    assert 0.0 < I < 3.0  # integral over the prefix [0, r_400) only


def test_fisher_gain_bound(bimax):
    phi, _ = bimax
    for e in (0.8, 0.9, 0.99):
        rep = rs.fisher_gain_check(phi, e)
        assert rep["holds"], rep
        assert rep["ratio"] < rep["bound_factor"]
    # factor sanity: 1 + (1-e)(2+e+15e^2)/(8 e^3)
    rep = rs.fisher_gain_check(phi, 0.8)
    assert rep["bound_factor"] == pytest.approx(
        1.0 + 0.2 * (2 + 0.8 + 15 * 0.64) / (8 * 0.512), abs=1e-14)


def test_fisher_trajectory_elastic():
    g = sp.RadialGrid(1024, 30.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    cfg = sp.SolverConfig(dt=0.01, t_max=2.0, frame="rescaled-g")
    rep = rs.fisher_trajectory_check(M, 1.0, cfg, n_checks=5)
    assert rep["exponent"] == 0.0
    assert rep["holds"]
    assert max(rep["fisher"]) - min(rep["fisher"]) < 1e-9


def test_fisher_trajectory_inelastic():
    g = sp.RadialGrid(1024, 30.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    cfg = sp.SolverConfig(dt=0.01, t_max=3.0, frame="rescaled-g")
    rep = rs.fisher_trajectory_check(B, 0.9, cfg, n_checks=4)
    assert rep["holds"]
    assert rep["nonincreasing_after_transient"]
    assert rep["exponent"] > 0
    with pytest.raises(ValueError):
        rs.fisher_trajectory_check(B, 0.9, sp.SolverConfig(frame="unscaled-f"))


# ---------------------------------------------------------------------------
# distances and entropy

def test_l1_l2_distances(maxw, r10):
    phi, fM = maxw
    assert rs.l1_distance(fM, fM) == 0.0
    f1 = rs.RadialDensity.maxwellian(r10, 1.0)
    f12 = rs.RadialDensity.maxwellian(r10, 1.2)
    assert rs.l1_distance(f1, f12) == pytest.approx(L1_PAIR_ORACLE, abs=2e-6)
    assert rs.l2_norm(f1) == pytest.approx(L2_MAXW_ORACLE, abs=1e-12)
    # Parseval tie to the Fourier-side norm
    assert rs.l2_norm(fM) == pytest.approx(
        (2 * math.pi) ** -1.5 * sp.sobolev_norm(phi, 0.0), rel=1e-5)
    other = rs.RadialDensity.maxwellian(rs.default_r_nodes(8.0, 1601), 1.0)
    with pytest.raises(ValueError):
        rs.l1_distance(f1, other)


def test_entropy_chain(r10):
    f = rs.RadialDensity.mixture(r10)
    rep = rs.entropy_route_check(f, 1.0)
    assert rep["chain_holds"]
    assert rep["entropy"] == pytest.approx(H_MIX_ORACLE, abs=1e-9)
    assert rep["csiszar_lhs"] <= rep["entropy"] <= rep["fisher_gap"]
    assert rep["ck_ratio"] == pytest.approx(1.8035, abs=1e-3)
    # identical densities: all three quantities vanish
    M = rs.RadialDensity.maxwellian(r10, 1.0)
    rep0 = rs.entropy_route_check(M, 1.0)
    assert rep0["chain_holds"]
    assert abs(rep0["entropy"]) < 1e-12 and rep0["l1"] < 1e-9


def test_entropy_validation(bimax, maxw):
    _, fB = bimax
    _, fM = maxw
    with pytest.raises(ValueError, match="theta"):
        rs.entropy_route_check(fB, 2.5)
    with pytest.raises(ValueError, match="match"):
        rs.entropy_route_check(fM, 1.5)
    assert rs.relative_entropy(fM, fM) == 0.0


def test_fourier_sup_vs_fisher(maxw, bimax, grid, r10):
    phi, fM = maxw
    ratio = rs.fourier_sup_vs_fisher(phi, fM)
    assert ratio == pytest.approx(math.exp(-0.5) / math.sqrt(3.0), abs=1e-4)
    # scale invariance: any Maxwellian temperature gives the same ratio
    phi2 = sp.CharacteristicProfile.maxwellian(grid, 2.0)
    f2 = rs.RadialDensity.maxwellian(r10, 2.0)
    assert rs.fourier_sup_vs_fisher(phi2, f2) == pytest.approx(ratio, abs=1e-5)
    phiB, fB = bimax
    ratioB = rs.fourier_sup_vs_fisher(phiB, fB)
    assert ratioB == pytest.approx(RATIO_MIX_ORACLE, abs=1e-4)
    assert ratioB <= 0.5  # empirical suite bound
    with pytest.warns(UserWarning, match="temperatures"):
        rs.fourier_sup_vs_fisher(phi2, fM)


# ---------------------------------------------------------------------------
# inequality suite

def test_inequality_suite_defaults(maxw):
    phi, fM = maxw
    rep = rs.inequality_suite(phi, fM)
    assert rep["all_hold"] and rep["n_checks"] == 27
    assert min(c["slack"] for c in rep["checks"]) > 0.0
    by = {(c["family"], tuple(sorted(c["params"].items()))): c for c in rep["checks"]}
    nash = by[("nash", (("delta", 0.5), ("r", 1.0)))]
    assert nash["lhs"] == pytest.approx(NASH_LHS_ORACLE, abs=1e-8)
    assert nash["rhs"] == pytest.approx(NASH_RHS_ORACLE, abs=1e-8)
    interp = by[("interpolation", (("beta1", 1.0), ("beta2", 0.5), ("s", 0.0)))]
    assert interp["r1"] == 2.0 and interp["r2"] == 4.0
    assert interp["constant"] == pytest.approx((16 * math.pi / 3) ** 0.5, abs=1e-12)
    assert interp["lhs"] == pytest.approx(0.388872060, abs=1e-6)
    l1c = by[("l1", (("p", 2.0),))]
    assert l1c["rhs"] == pytest.approx(L1LEM_MAXW_ORACLE, abs=1e-6)


def test_inequality_suite_mixture(bimax):
    phi, fB = bimax
    rep = rs.inequality_suite(phi, fB)
    assert rep["all_hold"]
    l1c = [c for c in rep["checks"] if c["family"] == "l1" and c["params"]["p"] == 2.0][0]
    assert l1c["rhs"] == pytest.approx(L1LEM_MIX_ORACLE, abs=1e-6)


def test_inequality_suite_custom_params(maxw, grid, r10):
    phi, fM = maxw
    ref = (sp.CharacteristicProfile.maxwellian(grid, 1.2),)
    rep = rs.inequality_suite(phi, fM, params={
        "nash": [(1.0, 0.5)],
        "interpolation": [(0.0, 1.0, 0.5)],
        "l1": [2.0],
        "reference": (ref[0], rs.RadialDensity.maxwellian(r10, 1.2)),
    })
    assert rep["n_checks"] == 3 and rep["all_hold"]
    with pytest.raises(ValueError):
        rs.inequality_suite(phi, fM, params={"nash": [(0.1, 0.5)]})  # r < delta/2
    with pytest.raises(ValueError):
        rs.inequality_suite(phi, fM, params={"interpolation": [(0.0, 1.0, 1.5)]})
    with pytest.raises(ValueError):
        rs.inequality_suite(phi, fM, params={"l1": [-1.0]})
    bad_ref = sp.CharacteristicProfile.maxwellian(sp.RadialGrid(512, 40.0), 1.2)
    with pytest.raises(ValueError, match="grid"):
        rs.inequality_suite(phi, fM, params={
            "reference": (bad_ref, rs.RadialDensity.maxwellian(r10, 1.2))})


def test_inequality_suite_failure_dumps_terms(maxw, monkeypatch):
    phi, fM = maxw
    monkeypatch.setattr(rs, "nash_constant", lambda r, d: 1e6)
    with pytest.raises(AssertionError, match="nash"):
        rs.inequality_suite(phi, fM, params={"nash": [(1.0, 0.5)],
                                             "interpolation": [], "l1": []})


def test_rate_bookkeeping():
    rep = rs.l1_decay_rate(1.0, 1.0, beta2=0.5)
    assert rep["gamma"] == pytest.approx(2.0 / 15.0, abs=1e-14)
    assert rep["gamma_tilde"] == pytest.approx(1.0 / 15.0, abs=1e-14)
    assert rep["l1_rate"] == pytest.approx(8.0 / 165.0, abs=1e-14)
    with pytest.raises(ValueError):
        rs.l1_decay_rate(1.0, 1.0, beta2=1.0)
    with pytest.raises(ValueError):
        rs.nash_constant(0.1, 0.5)
    with pytest.raises(ValueError):
        rs.interpolation_constants(-1.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        rs.l1_lemma_constant(0.0)


# ---------------------------------------------------------------------------
# persistence

def test_density_csv_roundtrip(bimax, tmp_path):
    _, fB = bimax
    path = tmp_path / "density.csv"
    rs.save_density(path, fB)
    assert path.read_text().startswith("# maxcool-density v1\n")
    loaded = rs.load_density(path)
    assert np.array_equal(loaded.values, fB.values)
    assert np.array_equal(loaded.r, fB.r)
    bad = tmp_path / "bad.csv"
    bad.write_text("r,f\n0.0,1.0\n")
    with pytest.raises(ValueError, match="header"):
        rs.load_density(bad)


def test_density_csv_revalidates(tmp_path, r10):
    # a file whose mass is off must be rejected on load
    path = tmp_path / "halved.csv"
    M = rs.RadialDensity.maxwellian(r10, 1.0)
    with open(path, "w") as fh:
        fh.write("# maxcool-density v1\n")
        for ri, vi in zip(M.r, 0.5 * M.values):
            fh.write(f"{ri},{vi}\n")
    with pytest.raises(ValueError, match="mass"):
        rs.load_density(path)
