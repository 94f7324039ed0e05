import numpy as np
import pytest

from backend.app.errors import BudgetInfeasible, InvalidConfig, OutOfRange
from backend.app.solvers.thinning import MixingModel, min_thinning, thin_samples, tv_bound


def test_tv_bound_examples():
    """Geometric and tabulated bounds at hand-checked points."""
    geometric = MixingModel.geometric(C=1.0, rho=0.5)
    assert tv_bound(geometric, 1, 3) == 0.0
    assert tv_bound(geometric, 101, 10) == pytest.approx(100 * 2.0 ** -10)
    assert tv_bound(MixingModel.tabulated([0.5, 0.25, 0.1]), 3, 2) == pytest.approx(0.5)


def test_tv_bound_out_of_tabulated_range():
    """Spacings beyond the table or below 1 are out of range."""
    with pytest.raises(OutOfRange):
        tv_bound(MixingModel.tabulated([0.5, 0.25, 0.1]), 3, 4)
    with pytest.raises(OutOfRange):
        tv_bound(MixingModel.geometric(1.0, 0.5), 3, 0)


def test_min_thinning_examples():
    """Smallest spacing meeting a budget at hand-checked points."""
    geometric = MixingModel.geometric(C=1.0, rho=0.5)
    assert min_thinning(geometric, 2, 0.25) == 2
    assert min_thinning(geometric, 11, 10 * 0.5) == 1
    assert min_thinning(geometric, 1, 1e-9) == 1


def test_tv_bound_monotone():
    """The bound falls with the spacing and grows with N."""
    model = MixingModel.geometric(C=2.0, rho=0.8)
    by_m = [tv_bound(model, 50, m) for m in range(1, 40)]
    by_n = [tv_bound(model, n, 5) for n in range(1, 40)]
    assert all(a >= b for a, b in zip(by_m, by_m[1:]))
    assert all(a <= b for a, b in zip(by_n, by_n[1:]))


def test_min_thinning_round_trip():
    """min_thinning inverts tv_bound on random geometric models."""
    rng = np.random.default_rng(7)
    for _ in range(1000):
        model = MixingModel.geometric(C=float(rng.uniform(0.1, 10)), rho=float(rng.uniform(0.05, 0.99)))
        N = int(rng.integers(2, 10_000))
        M = int(rng.integers(1, 200))
        budget = tv_bound(model, N, M)
        if budget <= 0:  # underflow at extreme rho**M
            continue
        found = min_thinning(model, N, budget)
        assert found <= M
        assert tv_bound(model, N, found) <= budget
        if found > 1:
            assert tv_bound(model, N, found - 1) > budget


def test_tabulated_matches_linear_scan():
    """Tabulated search agrees with a plain scan of the table."""
    rng = np.random.default_rng(8)
    for _ in range(200):
        eps = np.sort(rng.uniform(1e-4, 1.0, size=int(rng.integers(1, 30))))[::-1]
        eps = np.unique(eps)[::-1]
        model = MixingModel.tabulated(eps)
        N = int(rng.integers(2, 50))
        budget = float(rng.uniform(1e-3, 10))
        expected = next((m for m in range(1, len(eps) + 1) if (N - 1) * eps[m - 1] <= budget), None)
        if expected is None:
            with pytest.raises(BudgetInfeasible):
                min_thinning(model, N, budget)
        else:
            assert min_thinning(model, N, budget) == expected


def test_mixing_model_validation():
    """Bad mixing models and budgets are rejected."""
    with pytest.raises(InvalidConfig):
        MixingModel.geometric(C=1.0, rho=1.0)
    with pytest.raises(InvalidConfig):
        MixingModel.geometric(C=0.0, rho=0.5)
    with pytest.raises(InvalidConfig):
        MixingModel.tabulated([0.5, 0.5])
    with pytest.raises(InvalidConfig):
        MixingModel.tabulated([])
    with pytest.raises(InvalidConfig):
        MixingModel("polynomial")
    with pytest.raises(InvalidConfig):
        min_thinning(MixingModel.geometric(1.0, 0.5), 10, 0.0)


def test_thin_samples():
    """Burn-in then every M-th draw."""
    draws = list(range(20))
    assert thin_samples(draws, 1) == draws
    assert thin_samples(draws, 5, burn_in=2) == [2, 7, 12, 17]
    assert thin_samples(draws, 3, burn_in=25) == []
    with pytest.raises(InvalidConfig):
        thin_samples(draws, 0)
    with pytest.raises(InvalidConfig):
        thin_samples(draws, 2, burn_in=-1)
