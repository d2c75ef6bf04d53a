"""Tests for the Fourier-space spectral solver and profile functionals."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxcool import spectral as sp
from maxcool.kinematics import Restitution


# ---------------------------------------------------------------------------
# grid / profile / config validation

def test_grid_validation():
    g = sp.RadialGrid(512, 30.0)
    assert g.dx == pytest.approx(30.0 / 511)
    assert g.x[0] == 0.0 and g.x[-1] == 30.0
    with pytest.raises(ValueError):
        sp.RadialGrid(255, 30.0)
    with pytest.raises(ValueError):
        sp.RadialGrid(512, 0.0)
    with pytest.raises(ValueError):
        sp.RadialGrid(512, math.inf)


def test_profile_validation():
    g = sp.RadialGrid(256, 10.0)
    vals = np.exp(-0.5 * g.x ** 2)
    p = sp.CharacteristicProfile(g, vals)
    assert p.time == 0.0
    bad = vals.copy()
    bad[0] = 0.5
    with pytest.raises(ValueError):
        sp.CharacteristicProfile(g, bad)
    bad = vals.copy()
    bad[10] = 1.5
    with pytest.raises(ValueError):
        sp.CharacteristicProfile(g, bad)
    bad = vals.copy()
    bad[10] = np.nan
    with pytest.raises(ValueError):
        sp.CharacteristicProfile(g, bad)
    with pytest.raises(ValueError):
        sp.CharacteristicProfile(g, vals[:-1])
    with pytest.raises(ValueError):
        sp.CharacteristicProfile.maxwellian(g, -1.0)
    with pytest.raises(ValueError):
        sp.CharacteristicProfile.bimaxwellian(g, p=1.5)


def test_config_validation():
    sp.SolverConfig(dt=0.01, t_max=1.0)
    with pytest.raises(ValueError):
        sp.SolverConfig(dt=0.0)
    with pytest.raises(ValueError):
        sp.SolverConfig(t_max=-1.0)
    with pytest.raises(ValueError):
        sp.SolverConfig(quad_order=16)
    with pytest.raises(ValueError):
        sp.SolverConfig(interp="quadratic")
    with pytest.raises(ValueError):
        sp.SolverConfig(frame="lab")


# ---------------------------------------------------------------------------
# gain operator

def test_gain_scale_identities():
    # endpoint values and the exact mean square (3 + e^2)/4
    for e in (0.3, 0.5, 0.9, 1.0):
        s, w, am, ap = sp.gain_scales(e, 64)
        assert np.all(am >= 0) and np.all(am <= (1 + e) / 2 + 1e-12)
        assert np.all(ap <= 1 + 1e-12)
        mean_sq = 0.5 * float(w @ (am ** 2 + ap ** 2))
        assert mean_sq == pytest.approx((3 + e * e) / 4, abs=1e-13)
        # endpoints of the s-interval
        assert 0.25 * (1 + e) * math.sqrt(4.0) == pytest.approx((1 + e) / 2)
        a_plus_at = lambda sv: math.sqrt(((3 - e) / 4) ** 2 + ((1 + e) / 4) ** 2
                                         + sv * (3 - e) * (1 + e) / 8)
        assert a_plus_at(1.0) == pytest.approx(1.0, abs=1e-15)
        assert a_plus_at(-1.0) == pytest.approx((1 - e) / 2, abs=1e-12)


def test_gain_scales_match_3d_kinematics():
    # a-(s) and a+(s) must agree with |eta -|, |eta +| from the vector forms
    rng = np.random.default_rng(7)
    m = 10 ** 6
    e = 0.85
    eta = rng.normal(size=(m, 3)) * rng.uniform(0.1, 3.0, size=(m, 1))
    sig = rng.normal(size=(m, 3))
    sig /= np.linalg.norm(sig, axis=1, keepdims=True)
    norm = np.linalg.norm(eta, axis=1)
    s = np.einsum("ij,ij->i", eta, sig) / norm
    eta_minus = 0.25 * (1 + e) * (eta - norm[:, None] * sig)
    eta_plus = eta - eta_minus
    am = 0.25 * (1 + e) * np.sqrt(2.0 * (1.0 - s))
    ap = np.sqrt(((3 - e) / 4) ** 2 + ((1 + e) / 4) ** 2 + s * (3 - e) * (1 + e) / 8)
    assert np.max(np.abs(np.linalg.norm(eta_minus, axis=1) / norm - am)) < 1e-12
    assert np.max(np.abs(np.linalg.norm(eta_plus, axis=1) / norm - ap)) < 1e-12


def test_gain_fixed_point_constant():
    g = sp.RadialGrid(512, 20.0)
    one = sp.CharacteristicProfile(g, np.ones(g.n))
    for e in (0.3, 0.9):
        out = sp.gain_fourier(one, e)
        assert np.array_equal(out.values, np.ones(g.n))


def test_gain_fixed_point_gaussian_elastic():
    # at e = 1, a-^2 + a+^2 = 1, so every Maxwellian is a fixed point
    g = sp.RadialGrid(1024, 30.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    out = sp.gain_fourier(M, 1.0)
    assert np.max(np.abs(out.values - M.values)) < 1e-10


def test_gain_moment_contraction():
    # m2(Q+ phi) = ((3 + e^2)/4) m2(phi) for any profile
    g = sp.RadialGrid(2048, 40.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    for e in (0.5, 0.9):
        out = sp.gain_fourier(B, e)
        assert sp.moment(out, 2) / sp.moment(B, 2) == pytest.approx(
            (3 + e * e) / 4, abs=1e-6)


def test_gain_never_clamps():
    # both scale families lie in [0, 1]: queries stay on the grid
    g = sp.RadialGrid(512, 20.0)
    plan = sp._gain_plan(g, 0.4, 64, "quintic")
    assert plan.plan.clamped == 0


def test_gain_interp_schemes():
    g = sp.RadialGrid(1024, 30.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    gq = sp.gain_fourier(M, 0.9, interp="quintic")
    gc = sp.gain_fourier(M, 0.9, interp="cubic-monotone")
    gl = sp.gain_fourier(M, 0.9, interp="linear")
    assert np.max(np.abs(gc.values - gq.values)) < 1e-6
    assert 1e-6 < np.max(np.abs(gl.values - gq.values)) < 1e-2
    with pytest.raises(ValueError):
        sp.gain_fourier(M, 0.9, interp="quadratic")


@settings(max_examples=15, deadline=None)
@given(p=st.floats(0.2, 0.8), th1=st.floats(0.4, 1.0), th2=st.floats(1.0, 2.5),
       e=st.floats(0.3, 1.0))
def test_gain_preserves_bounds(p, th1, th2, e):
    g = sp.RadialGrid(512, 25.0)
    phi = sp.CharacteristicProfile.bimaxwellian(g, p, th1, th2)
    out = sp.gain_fourier(phi, e)
    assert out.values[0] == 1.0
    assert np.max(np.abs(out.values)) <= 1.0 + 1e-9


# ---------------------------------------------------------------------------
# moments and functionals

def test_moments_maxwellian():
    g = sp.RadialGrid(4096, 50.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    assert sp.moment(M, 2) == pytest.approx(3.0, abs=1e-7)
    assert sp.moment(M, 4) == pytest.approx(15.0, abs=1e-4)
    M2 = sp.CharacteristicProfile.maxwellian(g, 2.0)
    assert sp.moment(M2, 2) == pytest.approx(6.0, abs=1e-7)
    assert sp.moment(M2, 4) == pytest.approx(60.0, abs=1e-3)
    with pytest.raises(ValueError):
        sp.moment(M, 3)


def test_moments_bimaxwellian():
    # mixture 0.5/0.6/1.4: m2 = 3, m4 = 15 (0.5*0.36 + 0.5*1.96) = 17.4
    g = sp.RadialGrid(4096, 50.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    assert sp.moment(B, 2) == pytest.approx(3.0, abs=1e-7)
    assert sp.moment(B, 4) == pytest.approx(17.4, abs=1e-4)


def test_moment_widens_on_roundoff():
    g = sp.RadialGrid(256, 3e-5)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    with pytest.warns(UserWarning, match="widened"):
        val = sp.moment(M, 2)
    assert val == pytest.approx(3.0, rel=0.05)


def test_d2_distance_example():
    # Maxwellians theta = 1 vs 1.2: sup |e^{-x^2/2} - e^{-0.6 x^2}| / x^2 = 0.1
    g = sp.RadialGrid(4096, 50.0)
    a = sp.CharacteristicProfile.maxwellian(g, 1.0)
    b = sp.CharacteristicProfile.maxwellian(g, 1.2)
    with pytest.warns(UserWarning, match="temperature"):
        d = sp.d2_distance(a, b)
    assert d == pytest.approx(0.1, abs=1e-3)
    assert sp.d2_distance(a, a, warn_temperature=False) == 0.0
    other = sp.CharacteristicProfile.maxwellian(sp.RadialGrid(2048, 50.0), 1.0)
    with pytest.raises(ValueError):
        sp.d2_distance(a, other)


def test_sobolev_norm_example():
    # r = 0, Maxwellian theta = 1: (4 pi int x^2 e^{-x^2} dx)^{1/2} = pi^{3/4}
    g = sp.RadialGrid(4096, 50.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    assert sp.sobolev_norm(M, 0.0) == pytest.approx(math.pi ** 0.75, abs=1e-6)
    with pytest.raises(ValueError):
        sp.sobolev_norm(M, -1.0)


def test_sobolev_truncation_warning():
    g = sp.RadialGrid(256, 5.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    with pytest.warns(UserWarning, match="truncated"):
        sp.sobolev_norm(M, 2.0)


def test_sup_weighted_example():
    # delta = 1: max x e^{-x^2/2} = e^{-1/2} at x = 1
    g = sp.RadialGrid(4096, 50.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    assert sp.sup_weighted(M, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-4)
    assert sp.sup_weighted(M, 0.0) == 1.0
    with pytest.raises(ValueError):
        sp.sup_weighted(M, -0.5)


def test_gamma_constants_examples():
    A1, A2, gamma, gamma_star = sp.gamma_constants(1.0, 1.0)
    assert A1 == pytest.approx(0.8, abs=1e-14)
    assert A2 == pytest.approx(0.2, abs=1e-14)
    assert gamma == pytest.approx(2.0 / 15.0, abs=1e-14)
    assert gamma_star == pytest.approx(2.0 / 15.0, abs=1e-14)
    # e = 0.95, alpha = 0.9
    A1, A2, gamma, gamma_star = sp.gamma_constants(0.9, 0.95)
    assert gamma == pytest.approx(0.12205, abs=5e-6)
    # books balance: A1 + A2 + E (2 + alpha) = 1
    E = Restitution(0.95).E
    assert A1 + A2 + E * 2.9 == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        sp.gamma_constants(0.0, 0.9)
    with pytest.raises(ValueError):
        sp.gamma_constants(1.5, 0.9)


# ---------------------------------------------------------------------------
# time stepping

def test_unscaled_temperature_decay_rate():
    # d m2/dt = -2E m2 exactly for the constant kernel
    g = sp.RadialGrid(1024, 30.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    e = 0.5
    cfg = sp.SolverConfig(dt=0.01, t_max=10.0, frame="unscaled-f")
    tr = sp.evolve(B, e, cfg, diagnostics_schedule=np.linspace(0.0, 10.0, 41))
    rate = -np.polyfit(tr.times, np.log(tr.diagnostics["m2"]), 1)[0]
    expected = 2.0 * sp.dissipation_rate(e)
    assert expected == pytest.approx(0.1875, abs=1e-15)
    assert abs(rate - expected) / expected < 5e-3


def test_rescaled_m2_conservation():
    g = sp.RadialGrid(1024, 30.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    cfg = sp.SolverConfig(dt=0.01, t_max=10.0, frame="rescaled-g")
    tr = sp.evolve(M, 0.9, cfg, diagnostics_schedule=np.linspace(0.0, 10.0, 21))
    drift = np.abs(tr.diagnostics["m2"] - 3.0)
    assert np.max(drift) < 1e-5  # 1e-6 per unit time over t = 10


def test_mass_exact_along_run():
    g = sp.RadialGrid(512, 25.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    cfg = sp.SolverConfig(dt=0.02, t_max=1.0, frame="rescaled-g")
    phi = B
    for _ in range(50):
        phi = sp.step(phi, 0.8, cfg)
        assert phi.values[0] == 1.0


def test_time_convergence_orders():
    g = sp.RadialGrid(512, 25.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    e = 0.7
    T = 0.5

    def run(frame, dt):
        cfg = sp.SolverConfig(dt=dt, t_max=T, frame=frame)
        phi = B
        for _ in range(int(round(T / dt))):
            phi = sp.step(phi, e, cfg)
        return phi.values

    for frame, lo, hi in [("unscaled-f", 12.0, 22.0), ("rescaled-g", 3.4, 25.0)]:
        ref = run(frame, 0.00625)
        e1 = np.max(np.abs(run(frame, 0.1) - ref))
        e2 = np.max(np.abs(run(frame, 0.05) - ref))
        ratio = e1 / e2
        # RK4 is clean fourth order; Strang is at least second order (its
        # splitting constant is tiny here, so the RK4 order can show through)
        assert lo < ratio < hi, f"{frame}: ratio {ratio}"


def test_step_abort_on_bound_violation():
    g = sp.RadialGrid(512, 25.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    cfg = sp.SolverConfig(dt=10.0, t_max=10.0, frame="unscaled-f")
    with pytest.warns(UserWarning, match="halved"):
        with pytest.raises(RuntimeError):
            sp.step(B, 0.5, cfg)


def test_frame_consistency():
    # phi_rescaled(x, t) = phi_unscaled(x e^{Et}, t)
    g = sp.RadialGrid(1024, 30.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    e = 0.95
    E = sp.dissipation_rate(e)
    T = 5.0
    cfg_u = sp.SolverConfig(dt=0.01, t_max=T, frame="unscaled-f")
    cfg_r = sp.SolverConfig(dt=0.01, t_max=T, frame="rescaled-g")
    pu, pr = B, B
    for _ in range(int(round(T / 0.01))):
        pu = sp.step(pu, e, cfg_u)
        pr = sp.step(pr, e, cfg_r)
    lam = math.exp(E * T)
    mask = g.x <= g.x_max / lam
    err = np.max(np.abs(sp.evaluate(pu, g.x[mask] * lam) - pr.values[mask]))
    assert err < 1e-6


def test_evolve_trace_contents():
    g = sp.RadialGrid(512, 25.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    cfg = sp.SolverConfig(dt=0.01, t_max=0.1, frame="rescaled-g")
    tr = sp.evolve(B, 0.9, cfg, reference=M, keep_profiles=True,
                   extra_diagnostics=lambda p: {"const": 1.0})
    assert len(tr.times) == 11
    assert np.all(np.diff(tr.times) > 0)
    for key in ("m2", "temperature", "m4", "hr_0.5", "hr_1", "hr_2",
                "sup_0.5", "d2_ref", "const"):
        assert key in tr.diagnostics, key
        assert len(tr.diagnostics[key]) == 11
    assert len(tr.profiles) == 11
    assert tr.final.time == pytest.approx(0.1)


def test_evolve_snaps_inexact_t_max():
    g = sp.RadialGrid(512, 25.0)
    B = sp.CharacteristicProfile.bimaxwellian(g)
    cfg = sp.SolverConfig(dt=0.01, t_max=0.095, frame="unscaled-f")
    with pytest.warns(UserWarning, match="snapping"):
        tr = sp.evolve(B, 0.9, cfg)
    assert tr.final.time == pytest.approx(0.1)


# ---------------------------------------------------------------------------
# steady state

def test_steady_profile_e09(steady_e09):
    meta = steady_e09.meta
    assert meta["converged"]
    assert meta["cauchy_d2"] < 1e-7
    # fixed-point residual of (gain - id + drift generator): 10x the tolerance
    assert meta["fixed_point_residual"] < 1e-6
    # unit temperature is preserved from the Maxwellian start
    assert sp.moment(steady_e09, 2) / 3.0 == pytest.approx(1.0, abs=1e-4)
    # stationary profile lies inside the two-sided envelope at theta = 1
    assert meta["envelope"]["lower_ok_fraction"] == 1.0
    assert meta["envelope"]["upper_ok_fraction"] == 1.0


def test_steady_profile_validation():
    with pytest.raises(ValueError):
        sp.steady_profile(0.9, config=sp.SolverConfig(frame="unscaled-f"))
    with pytest.raises(ValueError):
        sp.steady_profile(0.9, tol=0.0)


def test_steady_residual_discriminates(steady_e09):
    # a Maxwellian is far from stationary at e = 0.9
    M = sp.CharacteristicProfile.maxwellian(steady_e09.grid, 1.0)
    assert sp.steady_residual(M, 0.9, quad_order=32) > 1e-4
    assert sp.steady_residual(steady_e09, 0.9, quad_order=32) < 1e-6


# ---------------------------------------------------------------------------
# evaluation and persistence

def test_evaluate_accuracy_and_clamp():
    g = sp.RadialGrid(1024, 30.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    xq = np.linspace(0.0, 29.9, 777) + 0.0013
    assert np.max(np.abs(sp.evaluate(M, xq) - np.exp(-0.5 * xq ** 2))) < 1e-10
    assert sp.evaluate(M, 35.0) == pytest.approx(M.values[-1], abs=1e-12)
    assert sp.evaluate(M, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)


def test_profile_csv_roundtrip(tmp_path):
    g = sp.RadialGrid(512, 25.0)
    B = sp.CharacteristicProfile.bimaxwellian(g, time=2.5)
    path = tmp_path / "profile.csv"
    sp.save_profile(path, B, e=0.9, frame="rescaled-g")
    first = path.read_text().splitlines()[0]
    assert first.startswith("# maxcool-profile v1 e=0.9")
    assert "t=2.5 " in first and first.endswith("frame=rescaled-g")
    loaded, meta = sp.load_profile(path)
    assert np.array_equal(loaded.values, B.values)
    assert loaded.grid.n == g.n and loaded.grid.x_max == pytest.approx(g.x_max)
    assert loaded.time == 2.5
    assert meta == {"e": 0.9, "frame": "rescaled-g"}


def test_profile_csv_rejects_bad_files(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x,phi\n0.0,1.0\n")
    with pytest.raises(ValueError, match="header"):
        sp.load_profile(path)
    # non-uniform abscissae
    g = sp.RadialGrid(256, 10.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    good = tmp_path / "good.csv"
    sp.save_profile(good, M, e=1.0, frame="unscaled-f")
    lines = good.read_text().splitlines()
    parts = lines[5].split(",")
    lines[5] = f"{float(parts[0]) + 0.01},{parts[1]}"
    bad2 = tmp_path / "bad2.csv"
    bad2.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="uniform"):
        sp.load_profile(bad2)


def test_save_profile_validates_frame(tmp_path):
    g = sp.RadialGrid(256, 10.0)
    M = sp.CharacteristicProfile.maxwellian(g, 1.0)
    with pytest.raises(ValueError):
        sp.save_profile(tmp_path / "x.csv", M, e=0.9, frame="comoving")
