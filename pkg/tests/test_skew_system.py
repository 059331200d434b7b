import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewgraphs.base_dynamics import Baker, Circle, ForwardStream, Solenoid
from skewgraphs.fiber_maps import Perturbed
from skewgraphs.skew_system import (FiberEscapeError, PerturbationRejected, c2_distance,
                                    default_system, evolve, forward_orbit, perturb,
                                    validate_system)


def test_default_system_validates(ref_system):
    rep = validate_system(ref_system)
    assert rep.passed, rep.failures()
    names = {c[0] for c in rep.checks}
    assert {"trapping", "monotone", "continuous_in_t"} <= names


def test_perturbed_system_is_admissible_but_not_weak(bony_system):
    rep = validate_system(bony_system)
    assert rep.admissible
    assert not rep.passed
    assert not rep.get("weak_pair.s_weak_f0", 0)
    assert rep.get("weak_pair_before_perturbation", 0)
    assert all(c[1] == 0 for c in rep.failures())


def test_fiber_map_on_plateau_is_f0(ref_system):
    xs = np.linspace(0.08, 0.42, 11)
    assert np.array_equal(ref_system.fiber(0, 0.1, xs), ref_system.bands[0].f0(xs))
    assert np.array_equal(ref_system.fiber(1, 0.6, xs + 0.5), ref_system.bands[1].f1(xs + 0.5))


def test_orbit_example_on_zero_fixed_point(ref_system):
    rec = forward_orbit(ref_system, (Baker(0.0, 0.0), 0.30), 1)
    assert rec.xs[1] == pytest.approx(0.30 - 2 * 0.12**3, abs=1e-12)
    assert rec.points[1][0] == Baker(0.0, 0.0)


def test_orbit_cocycle(ref_system):
    rec = forward_orbit(ref_system, (Baker(0.3, 0.7), 0.25), 50)
    xs, logs = rec.xs, rec.log_derivs
    # log derivative ledger agrees with a finite-difference derivative of the composed map
    h = 1e-7
    up = forward_orbit(ref_system, (Baker(0.3, 0.7), 0.25 + h), 50).xs[-1]
    dn = forward_orbit(ref_system, (Baker(0.3, 0.7), 0.25 - h), 50).xs[-1]
    assert np.log((up - dn) / (2 * h)) == pytest.approx(logs.sum(), abs=1e-5)
    assert len(xs) == 51


def test_orbit_stays_in_band(ref_system):
    for p in (Circle(0.1), Baker(0.5, 0.2), Solenoid((1, 2, 3), 0.9)):
        rec = forward_orbit(ref_system, (p, 0.7), 200, rng=np.random.default_rng(0))
        assert np.all((rec.xs >= 0.58) & (rec.xs <= 0.92))


def test_orbit_outside_bands_raises(ref_system):
    with pytest.raises(FiberEscapeError):
        forward_orbit(ref_system, (Baker(0.1, 0.1), 0.5), 3)


def test_solenoid_orbit_keeps_depth(ref_system):
    rec = forward_orbit(ref_system, (Solenoid((1, 2, 3), 0.6), 0.2), 2)
    q = rec.points[2][0]
    assert len(q.digits) == 3 and q.digits[:2] == (1, 2)


def test_evolve_matches_forward_orbit(ref_system):
    rng = np.random.default_rng(5)
    t0 = rng.random(4)
    x, logs = evolve(ref_system, 0, ForwardStream(t0), np.full(4, 0.2), 30, with_logs=True)
    for k in range(4):
        rec = forward_orbit(ref_system, (Circle(float(t0[k])), 0.2), 30)
        assert x[k] == pytest.approx(rec.xs[-1], abs=1e-12)
        assert logs[k] == pytest.approx(rec.log_derivs.sum(), abs=1e-10)


def test_perturb_rejects_large_eta(ref_system):
    with pytest.raises(PerturbationRejected):
        perturb(ref_system, 12.0)
    with pytest.raises(ValueError):
        perturb(ref_system, -0.1)


def test_perturb_zero_restores(bony_system, ref_system):
    back = perturb(bony_system, 0.0)
    assert back.eta == 0.0
    assert c2_distance(back, ref_system, n_t=32, n_x=64) == 0.0
    assert isinstance(bony_system.bands[0].f0, Perturbed)


def test_c2_distance_scales_linearly(ref_system):
    d1 = c2_distance(ref_system, perturb(ref_system, 0.01), n_t=64, n_x=256)
    d2 = c2_distance(ref_system, perturb(ref_system, 0.02), n_t=64, n_x=256)
    assert d1 > 0
    assert d2 / d1 == pytest.approx(2.0, rel=0.05)


def test_c2_distance_band_mismatch(ref_system):
    other = default_system(bands=((0.08, 0.42),), pinches=((0.18, 0.32),))
    with pytest.raises(ValueError):
        c2_distance(ref_system, other)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(0, 1, exclude_max=True), x=st.floats(0.08, 0.42), y=st.floats(0.08, 0.42))
def test_fiber_monotone_and_trapping(ref_system, t, x, y):
    fx, fy = ref_system.fiber(0, t, x), ref_system.fiber(0, t, y)
    assert 0.08 < fx < 0.42
    if x < y:
        assert fx < fy


# -- documented examples ---------------------------------------------------------------

def test_trapping_failure_is_reported(ref_system):
    from skewgraphs.skew_system import Band, SkewSystem
    # eta large enough that g0 pushes the left endpoint out of the band
    b = ref_system.bands[0]
    g = Perturbed(b.f0, 12.0)
    assert g._f(0.08) < 0.08
    broken = SkewSystem(ref_system.base, (Band(b.interval, g, b.f1), ref_system.bands[1]),
                        ref_system.profile, (12.0, 0.04, 0))
    rep = validate_system(broken)
    assert not rep.get("trapping", 0) and not rep.admissible


def test_fixed_point_orbit_is_constant(ref_system):
    rec = forward_orbit(ref_system, (Baker(0.0, 0.0), 0.18), 100)
    assert np.all(rec.xs == 0.18)
    assert all(p == Baker(0.0, 0.0) for p, _ in rec.points)


def test_orbit_converges_monotonically_to_pinch(ref_system):
    f0 = ref_system.bands[0].f0
    for x0 in (0.1, 0.3):
        xs = forward_orbit(ref_system, (Baker(0.0, 0.0), x0), 2000).xs
        oracle = [x0]
        for _ in range(2000):
            oracle.append(float(f0._f(oracle[-1])))
        assert np.allclose(xs, oracle, atol=1e-15)
        gaps = np.abs(xs - 0.18)
        assert np.all(np.diff(gaps) < 0)


def test_orbit_composition(ref_system):
    short = forward_orbit(ref_system, (Baker(0.3, 0.7), 0.2), 20)
    a = forward_orbit(ref_system, (Baker(0.3, 0.7), 0.2), 8)
    b = forward_orbit(ref_system, a.points[-1], 12)
    assert b.xs[-1] == pytest.approx(short.xs[-1], abs=1e-12)
    assert np.allclose(np.concatenate([a.log_derivs, b.log_derivs]), short.log_derivs, atol=1e-12)


def test_c2_distance_symmetric_and_linear(ref_system):
    a = perturb(ref_system, 1e-3)
    b = perturb(ref_system, 1e-4)
    d_a = c2_distance(ref_system, a, n_t=32, n_x=128)
    assert d_a == c2_distance(a, ref_system, n_t=32, n_x=128)
    assert d_a < 10 * c2_distance(ref_system, b, n_t=32, n_x=128) * 1.01
    assert d_a > 0


def test_perturb_examples(bony_system):
    from skewgraphs.fiber_maps import find_fixed_points
    g0 = bony_system.bands[0].f0
    assert g0.deriv(0.18) == pytest.approx(1.3, abs=1e-12)
    assert len(find_fixed_points(g0)) == 3
