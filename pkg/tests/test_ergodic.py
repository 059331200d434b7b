import numpy as np
import pytest

from skewgraphs.base_dynamics import Baker, BaseMeasureSampler, Circle
from skewgraphs.ergodic import (EmpiricalMeasure, advance_measure, base_times, batch_stderr,
                                birkhoff_average, birkhoff_series, default_observables,
                                fiber_concentration, graph_lyapunov, graph_lyapunov_point,
                                graph_lyapunov_space, graph_measure, invariance_defect,
                                kingman_ensemble, kingman_rate, measure_discrepancy,
                                observable_table, sup_log_derivative, support_distance,
                                srb_estimate)
from skewgraphs.invariant_graph import sample_multigraph


def brute_sup(sys, i, ts, n_x=200001):
    """log sup_x D(f_{t_{L-1}} o ... o f_{t_0})(x) on a dense grid."""
    b = sys.bands[i]
    x = np.linspace(b.lo, b.hi, n_x)
    acc = np.zeros_like(x)
    for t in ts:
        fx, dx = sys.fiber_and_deriv(i, t, x)
        acc += np.log(dx)
        x = fx
    return float(acc.max())


# -- measures --------------------------------------------------------------------------

def test_empirical_measure_normalizes():
    mu = EmpiricalMeasure(np.array([0.1, 0.2]), np.array([0.3, 0.4]), [[1.0, 3.0]])
    assert mu.total == pytest.approx(1.0)
    assert mu.integrate(lambda t, x: x) == pytest.approx(0.25 * 0.3 + 0.75 * 0.4)
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([0.1]), np.array([0.3]), [[-1.0]])
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([0.1]), np.array([0.3]), [[0.0]])


def test_discrepancy_requires_same_band():
    a = EmpiricalMeasure(np.array([0.1]), np.array([0.3]), [[1.0]], band=0)
    b = EmpiricalMeasure(np.array([0.1]), np.array([0.7]), [[1.0]], band=1)
    with pytest.raises(ValueError):
        measure_discrepancy(a, b)
    assert measure_discrepancy(a, a) == 0.0


def test_observable_bins_partition_unity():
    x = np.linspace(0.0, 1.0, 1001)[1:-1]
    bins = [phi for name, phi in default_observables() if name.startswith("bin")]
    # interior points: the smoothed bins still sum to one
    inner = x[(x > 1 / 128) & (x < 1 - 1 / 128)]
    total = sum(phi(0.0, inner) for phi in bins)
    assert np.allclose(total, 1.0)


def test_graph_measure_is_invariant(ref_system):
    mu = graph_measure(ref_system, 0, BaseMeasureSampler(11), 4000, depth=400)
    for name, phi in default_observables()[:6]:
        d, se = invariance_defect(ref_system, mu, phi)
        assert abs(d) <= 3 * se + 1e-9, name
    nu = advance_measure(ref_system, mu)
    assert nu.total == pytest.approx(1.0)


def test_advance_rejects_histograms():
    mu = EmpiricalMeasure(np.zeros(4), np.zeros(4), [np.ones(4)], shape=(2, 2))
    with pytest.raises(ValueError):
        advance_measure(None, mu)


# -- Birkhoff averages -----------------------------------------------------------------

def test_birkhoff_on_fixed_base_point_is_f0_orbit(ref_system):
    f0 = ref_system.bands[0].f0
    series = birkhoff_series(ref_system, lambda t, x: x, (Baker(0.0, 0.0), 0.4), 30)
    x, oracle = 0.4, []
    for _ in range(30):
        oracle.append(x)
        x = float(f0._f(x))
    assert np.allclose(series, oracle, atol=1e-15)


def test_birkhoff_two_starts_agree(ref_system):
    phi = lambda t, x: x  # noqa: E731
    rng = np.random.default_rng(3)
    sa = birkhoff_series(ref_system, phi, (Circle(0.3141), 0.1), 40000, 500, rng)
    sb = birkhoff_series(ref_system, phi, (Circle(0.2718), 0.4), 40000, 500, rng)
    se = np.hypot(batch_stderr(sa), batch_stderr(sb))
    assert abs(sa.mean() - sb.mean()) < 4 * se
    assert birkhoff_average(ref_system, phi, (Circle(0.3), 0.2), 10) > 0.08


def test_batch_stderr_iid():
    x = np.random.default_rng(0).normal(size=100000)
    assert batch_stderr(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.5)


# -- Kingman sup-rates -----------------------------------------------------------------

def test_sup_on_plateau_is_one(ref_system):
    # on the f0 plateau the sup of Df0 is attained at the pinch, where it equals 1
    assert sup_log_derivative(ref_system, 0, np.array([0.1])) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("L", [1, 3, 8, 20])
def test_sup_matches_dense_grid(ref_system, L):
    ts = base_times([0.2345], L, np.random.default_rng(L))[0]
    got = sup_log_derivative(ref_system, 0, ts)
    ref = brute_sup(ref_system, 0, ts)
    assert got >= ref - 1e-12
    assert got == pytest.approx(ref, abs=1e-7)


def test_kingman_submultiplicative(ref_system):
    est = kingman_rate(ref_system, 0, Circle(0.377), (1, 2, 4, 8, 16, 32),
                       rng=np.random.default_rng(4))
    assert est.submultiplicative(1e-9)
    assert est.worst_gap <= 1e-9
    assert np.all(np.diff(est.running_inf) <= 0)
    assert len(est.triples) > 10


def test_kingman_ladder_validation(ref_system):
    with pytest.raises(ValueError):
        kingman_rate(ref_system, 0, Circle(0.1), (0, 2))


def test_kingman_ensemble_negative(ref_system):
    est = kingman_ensemble(ref_system, 0, BaseMeasureSampler(5), 40, (1, 4, 16, 64, 128))
    assert est.mean < 0
    assert est.excludes_zero()


# -- graph exponents -------------------------------------------------------------------

def test_graph_exponent_time_and_space_agree(ref_system):
    tm = graph_lyapunov(ref_system, 1, BaseMeasureSampler(6), 200, 2000, depth=400)
    sp = graph_lyapunov_space(ref_system, 1, BaseMeasureSampler(7), 20000, depth=400)
    assert tm.mean < 0 and sp.mean < 0
    assert abs(tm.mean - sp.mean) < 3 * np.hypot(tm.stderr, sp.stderr) + 2e-3


def test_graph_lyapunov_point_at_origin_oracle(ref_system):
    f0 = ref_system.bands[0].f0
    y = 0.08
    for _ in range(200):
        y = float(f0._f(y))
    acc = 0.0
    for _ in range(300):
        acc += np.log(f0._df(y))
        y = float(f0._f(y))
    got = graph_lyapunov_point(ref_system, 0, Baker(0.0, 0.0), 300, depth=200)
    assert got == pytest.approx(acc / 300, abs=1e-12)


def test_graph_lyapunov_point_at_origin_tends_to_zero(ref_system):
    vals = [graph_lyapunov_point(ref_system, 0, Baker(0.0, 0.0), n, depth=400)
            for n in (100, 1000, 5000)]
    assert vals[0] < vals[1] < vals[2] <= 0


# -- SRB histogram ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_srb(ref_system):
    return srb_estimate(ref_system, 0, BaseMeasureSampler(8), 100, 3000, 300, bins=(32, 64))


def test_srb_small_budget_matches_graph(ref_system, small_srb):
    assert small_srb.measure.total == pytest.approx(1.0)
    # contraction about -0.03 per step: after 300 burn-in steps 0.34 * exp(-9) ~ 4e-5
    assert small_srb.support_distance < 0.34 * np.exp(-0.025 * 300)
    assert small_srb.t_ks < 0.02
    g = graph_measure(ref_system, 0, BaseMeasureSampler(9), 5000)
    rows = observable_table(small_srb.measure, g)
    assert all(d < 0.02 for _, d, _ in rows)


def test_srb_support_near_attractor(ref_system, small_srb):
    smp = sample_multigraph(ref_system, BaseMeasureSampler(10), 1500, 400)
    assert support_distance(small_srb.measure, smp) < 0.05


def test_fiber_concentration_refines(small_srb):
    vals = [fiber_concentration(small_srb.measure, k) for k in (1, 2, 4, 8, 16, 32)]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        fiber_concentration(small_srb.measure, 5)


def test_srb_budget_validation(ref_system):
    with pytest.raises(ValueError):
        srb_estimate(ref_system, 0, BaseMeasureSampler(1), 0, 10, 0)


def test_support_distance_of_graph_to_itself(ref_system):
    smp = sample_multigraph(ref_system, BaseMeasureSampler(12), 50, 400)
    mu = EmpiricalMeasure(smp.t0, smp.lo[:, 0], [np.ones(50)])
    assert support_distance(mu, smp) == 0.0


# -- documented examples ---------------------------------------------------------------

def test_birkhoff_constant_observable(ref_system):
    one = lambda t, x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
    assert birkhoff_average(ref_system, one, (Circle(0.37), 0.7), 500, 10) == 1.0


def test_birkhoff_at_fixed_point(ref_system):
    assert birkhoff_average(ref_system, lambda t, x: x, (Baker(0.0, 0.0), 0.18), 1000) == 0.18


def test_kingman_random_point_m40(ref_system):
    smp = BaseMeasureSampler(21)
    ts = base_times(smp.circle(20), 40, smp.rng)
    vals = np.array([sup_log_derivative(ref_system, 0, row) / 40 for row in ts])
    assert np.mean(vals) < -0.01


def test_graph_exponents_negative(ref_system, bony_system):
    for sysm in (ref_system, bony_system):
        est = graph_lyapunov(sysm, 0, BaseMeasureSampler(22), 100, 2000)
        assert est.mean < -0.01 and est.excludes_zero(3.0)


def test_graph_exponent_equals_birkhoff_of_log_derivative(ref_system):
    from skewgraphs.base_dynamics import Solenoid
    digits = tuple(int(d) for d in np.random.default_rng(23).integers(0, 4, 400))
    p = Solenoid(digits, 0.321)
    lam = graph_lyapunov_point(ref_system, 1, p, 3000, rng=np.random.default_rng(24))
    from skewgraphs.invariant_graph import graph_value
    y0 = graph_value(ref_system, 1, p, 400)
    logd = lambda t, x: np.log(ref_system.fiber(1, t, x, order=1))  # noqa: E731
    b = birkhoff_average(ref_system, logd, (Circle(0.321), y0), 3000, rng=np.random.default_rng(24))
    assert lam == pytest.approx(b, abs=1e-12)


def test_srb_support_within_one_hundredth(ref_system, small_srb):
    smp = sample_multigraph(ref_system, BaseMeasureSampler(10), 3000, 400)
    assert support_distance(small_srb.measure, smp) < 1e-2


def test_graph_measure_mean_matches_srb(ref_system, small_srb):
    g = graph_measure(ref_system, 0, BaseMeasureSampler(25), 5000)
    x = lambda t, x: x  # noqa: E731
    d = abs(g.integrate(x) - small_srb.measure.integrate(x))
    assert d <= 3 * np.hypot(g.stderr(x), small_srb.measure.stderr(x))
    assert g.total == pytest.approx(1.0, abs=1e-12)


def test_discrepancy_examples(ref_system):
    from skewgraphs.ergodic import measure_discrepancy_any
    a = graph_measure(ref_system, 0, BaseMeasureSampler(26), 4000)
    b = graph_measure(ref_system, 0, BaseMeasureSampler(27), 4000)
    other = graph_measure(ref_system, 1, BaseMeasureSampler(28), 4000)
    assert measure_discrepancy(a, a) == 0.0
    for _, d, se in observable_table(a, b):
        assert d <= 3 * se + 1e-12
    x_only = [("x", lambda t, x: x)]
    assert measure_discrepancy_any(a, other, x_only) > 0.2
