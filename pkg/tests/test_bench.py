import json
import math

import mpmath
import numpy as np
import pytest

from smoothspline import Dataset, fit_problem_c, make_setup
from smoothspline import bench
from smoothspline.bench import (
    OptionConfig,
    bs_gamma,
    bs_price,
    default_config,
    design_points,
    eimse,
    load_config,
    config_to_json,
    mm1_true,
    mm1_true_d2,
    replication_rng,
    run_experiment,
    run_replication,
    simulate_euro_call,
    simulate_mm1,
    simulate_mm1_batch,
)
from smoothspline.model import SplineModel

# mean wait of the first 1000 customers at service rate 2, from 10^6 runs of an
# independent Lindley loop (standard error 8.5e-5); below the steady-state 0.5
# because the queue starts empty
MM1_HORIZON_MEAN_X2 = 0.497898


def test_mm1_truth_examples():
    assert mm1_true(2.0) == 0.5
    assert mm1_true(1.5) == pytest.approx(4 / 3)
    h = 1e-4
    fd = (mm1_true(2 + h) - 2 * mm1_true(2.0) + mm1_true(2 - h)) / h**2
    assert mm1_true_d2(2.0) == pytest.approx(1.75, abs=1e-12)
    assert mm1_true_d2(2.0) == pytest.approx(fd, abs=1e-6)
    x = np.linspace(1.5, 2.0, 7)
    fd = (mm1_true(x + h) - 2 * mm1_true(x) + mm1_true(x - h)) / h**2
    assert np.allclose(mm1_true_d2(x), fd, rtol=1e-6)
    with pytest.raises(ValueError):
        mm1_true(1.0)


def test_single_customer_waits_zero():
    assert simulate_mm1(1.7, 1, np.random.default_rng(0)) == 0.0


def test_lindley_matches_explicit_loop():
    x, customers = 1.6, 200
    batch = simulate_mm1_batch([x], customers, 1, np.random.default_rng(3))[0, 0]
    rng = np.random.default_rng(3)
    w, total = 0.0, 0.0
    for _ in range(customers - 1):
        s = -math.log1p(-rng.random((1, 1))[0, 0]) / x
        a = -math.log1p(-rng.random((1, 1))[0, 0])
        w = max(0.0, w + s - a)
        total += w
    assert batch == pytest.approx(total / customers, rel=1e-13)


def test_mm1_reproducible():
    a = simulate_mm1_batch([1.6, 1.9], 100, 5, replication_rng(1, 15, 3))
    b = simulate_mm1_batch([1.6, 1.9], 100, 5, replication_rng(1, 15, 3))
    assert np.array_equal(a, b)


def test_mm1_horizon_mean():
    sims = simulate_mm1_batch([2.0], 1000, 10000, np.random.default_rng(5))[0]
    assert abs(sims.mean() - MM1_HORIZON_MEAN_X2) <= 0.05 * MM1_HORIZON_MEAN_X2


def test_mm1_stable_and_decreasing_in_rate():
    rates = np.linspace(1.5, 2.0, 6)
    sims = simulate_mm1_batch(rates, 1000, 2000, np.random.default_rng(6)).mean(axis=1)
    assert np.all(np.isfinite(sims)) and np.all(np.diff(sims) < 0)
    with pytest.raises(ValueError):
        simulate_mm1_batch([0.9], 10, 1, np.random.default_rng(0))


def test_bs_limits():
    cfg = OptionConfig()
    assert bs_price(0.0) == 0.0 and bs_gamma(0.0) == 0.0
    assert bs_price(1e-6) < 1e-12
    x = 100 * cfg.strike
    assert bs_price(x) == pytest.approx(x - cfg.strike * math.exp(-cfg.rate * cfg.maturity), rel=1e-12)


def test_bs_price_matches_quadrature():
    cfg = OptionConfig()
    mpmath.mp.dps = 30
    x, K, s, sig, T = 1.3, cfg.strike, cfg.rate, cfg.sigma, cfg.maturity

    def integrand(z):
        st = x * mpmath.exp((s - sig**2 / 2) * T + sig * mpmath.sqrt(T) * z)
        return mpmath.exp(-z * z / 2) / mpmath.sqrt(2 * mpmath.pi) * max(st - K, 0)

    z0 = (mpmath.log(K / x) - (s - sig**2 / 2) * T) / (sig * mpmath.sqrt(T))
    oracle = mpmath.exp(-s * T) * mpmath.quad(integrand, [z0, mpmath.inf])
    assert bs_price(x, cfg) == pytest.approx(float(oracle), abs=1e-8)


def test_bs_gamma_matches_finite_differences():
    x = np.linspace(0.2, 2.0, 10)
    h = 1e-4
    fd = (bs_price(x + h) - 2 * bs_price(x) + bs_price(x - h)) / h**2
    assert np.allclose(bs_gamma(x), fd, rtol=1e-5, atol=1e-7)


def test_euro_call_draws():
    cfg = OptionConfig()
    assert np.all(simulate_euro_call(0.0, cfg, np.random.default_rng(0), size=100) == 0.0)
    a = simulate_euro_call(1.3, cfg, np.random.default_rng(9), size=10)
    b = simulate_euro_call(1.3, cfg, np.random.default_rng(9), size=10)
    assert np.array_equal(a, b)
    draws = simulate_euro_call(1.3, cfg, np.random.default_rng(10), size=1_000_000)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - bs_price(1.3, cfg)) <= 3 * se


def test_euro_call_convergence_rate():
    cfg = OptionConfig()
    target = bs_price(1.3, cfg)
    sizes = np.array([100, 1000, 10000, 100000])
    rms = []
    for N in sizes:
        errs = [simulate_euro_call(1.3, cfg, np.random.default_rng(1000 * i + 7), size=int(N)).mean() - target for i in range(60)]
        rms.append(np.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    assert abs(slope + 0.5) <= 0.15


def test_eimse_examples():
    setup = make_setup(3, 1)
    X = np.array([0.0, 0.5, 1.0])
    model = SplineModel(setup, X[:, None], np.array([1.0, 1.0, 0.0]), np.zeros(3), 0.0, 0.0, 0.0)
    truth = lambda x: x**2
    val, der = eimse(model, truth, lambda x: np.full(np.shape(x), 2.0), X)
    # model 1 + x against x^2: residuals 1, 1.25, 1
    assert val == pytest.approx((1 + 1.5625 + 1) / 3)
    assert der == pytest.approx(4.0)
    shifted = SplineModel(setup, X[:, None], np.array([3.5, 0.0, 1.0]), np.zeros(3), 0.0, 0.0, 0.0)
    val, der = eimse(shifted, truth, lambda x: np.full(np.shape(x), 2.0), X)
    assert val == pytest.approx(3.5**2) and der == pytest.approx(0.0, abs=1e-24)


def test_eimse_exact_fit():
    X = np.linspace(0, 1, 12)
    truth = lambda x: 1 - x + 2 * x**3
    model = fit_problem_c(Dataset(X, truth(X)), 1e-6, make_setup(4, 1)).model
    val, der = eimse(model, truth, lambda x: 12 * x, X)
    assert val <= 1e-10 and der <= 1e-10


def test_design_points():
    assert np.allclose(design_points("mm1", 2), [1.625, 1.875])
    assert np.allclose(design_points("option", 2), [0.5, 1.5])
    assert np.allclose(design_points("partition", 5), [0.1, 0.3, 0.5, 0.7, 0.9])


def test_config_roundtrip_and_validation():
    cfg = default_config("option", reps=7, replicates=200)
    back = load_config(config_to_json(cfg))
    assert back == cfg
    with pytest.raises(ValueError):
        load_config(json.dumps({"experiment": "mm1", "bogus": 1}))
    with pytest.raises(ValueError):
        default_config("mm1", methods=("lam9",))
    with pytest.raises(ValueError):
        default_config("partition", methods=("A",))
    with pytest.raises(ValueError):
        default_config("queue")


def test_replications_independent_of_order():
    cfg = default_config("partition", reps=3)
    forward = [run_replication(cfg, 30, r) for r in range(3)]
    backward = [run_replication(cfg, 30, r) for r in reversed(range(3))][::-1]
    assert forward == backward


def test_run_experiment_deterministic():
    cfg = default_config("partition", reps=4)
    a, b = run_experiment(cfg).to_csv(), run_experiment(cfg).to_csv()
    assert a == b
    assert "reduced replication count" in a
    assert run_experiment(bench.with_overrides(cfg, seed=2)).to_csv() != a


def test_report_rows():
    cfg = default_config("option", n_values=(15,), methods=("B",), reps=3, replicates=200)
    report = run_experiment(cfg)
    assert {(r.method, r.n, r.metric) for r in report.rows} == {("B", 15, "value"), ("B", 15, "deriv2")}
    row = report.get("B", 15, "value")
    assert row.scale == 1e-5 and row.replications == 3 and row.mean >= 0


def test_transient_metric_reported():
    cfg = default_config("mm1", n_values=(15,), methods=("B",), reps=2, replicates=20, customers=100, transient_oracle_runs=200)
    report = run_experiment(cfg)
    assert report.get("B", 15, "value_transient").replications == 2


def test_failed_replications_counted(monkeypatch):
    from smoothspline.errors import RootFindingError

    def boom(*args, **kwargs):
        raise RootFindingError("no root", (1e-14, 1e6))

    monkeypatch.setattr(bench, "fit_problem_b", boom)
    cfg = default_config("partition", reps=2)
    text = run_experiment(cfg).to_csv()
    assert "# failed replications: B@n=30:2" in text


@pytest.fixture(scope="module")
def option_report():
    cfg = default_config("option", reps=20, replicates=500)
    return run_experiment(cfg)


@pytest.mark.parametrize("metric", ["value", "deriv2"])
def test_eimse_trend_nonincreasing(option_report, metric):
    bad = []
    for method in option_report_methods():
        means = [option_report.get(method, n, metric).mean for n in (15, 25, 35)]
        if any(later > 1.2 * earlier for earlier, later in zip(means, means[1:])):
            bad.append((method, means))
    assert not bad, bad


def option_report_methods():
    return default_config("option").methods
