import numpy as np
import pytest

from backend.app.solvers.demo_1d import DEMO_SEED, GaussianMixture1D, build_demo, run_demo


@pytest.fixture(scope="module")
def demo_run():
    return run_demo(threads=4)


def test_kde_set_is_shorter_than_both_balls(demo_run):
    """The KDE set is shorter than both balls, all measured on one grid."""
    record, _ = demo_run
    assert record["kde"]["length"] < record["mean_ball"]["length"]
    assert record["kde"]["length"] < record["mode_ball"]["length"]
    for name in ("mean_ball", "mode_ball"):
        # grid measure of [c - r, c + r] is within one step of 2r
        assert abs(record[name]["length"] - 2 * record[name]["radius"]) <= 0.01 + 1e-9


def test_only_the_balls_cover_the_valley(demo_run):
    """Only the balls reach the low-density midpoint."""
    record, _ = demo_run
    assert record["valley_midpoint"] == 0.0
    assert not record["kde"]["includes_valley"]
    assert record["mean_ball"]["includes_valley"]
    assert record["mode_ball"]["includes_valley"]


def test_kde_set_splits_around_the_modes(demo_run):
    """The KDE set has one interval around each mode and none across 0."""
    record, _ = demo_run
    intervals = record["kde"]["intervals"]
    assert len(intervals) >= 2
    assert any(lo <= -3.0 <= hi for lo, hi in intervals)
    assert any(lo <= 3.0 <= hi for lo, hi in intervals)
    assert all(not (lo <= 0.0 <= hi) for lo, hi in intervals)


def test_grid_rows_agree_with_record(demo_run):
    """Grid rows add up to the lengths in the record."""
    record, rows = demo_run
    assert record["n_train"] == record["n_calibration"] == 1000
    xs = np.array([r["x"] for r in rows])
    assert np.all(np.diff(xs) > 0)
    inside = sum(r["in_kde"] for r in rows)
    assert inside * 0.01 == pytest.approx(record["kde"]["length"])
    for name in ("mean_ball", "mode_ball"):
        assert sum(r[f"in_{name}"] for r in rows) * 0.01 == pytest.approx(record[name]["length"])
    assert all(r["score"] > 0 for r in rows)


def test_seeded_demo_is_deterministic():
    """Same seed gives the same record on any thread count."""
    first, _ = run_demo(seed=DEMO_SEED, size=400, grid_step=0.05, threads=1)
    second, _ = run_demo(seed=DEMO_SEED, size=400, grid_step=0.05, threads=3)
    assert first == second


def test_coverage_on_fresh_draws():
    """Fresh mixture draws land in each set about 90% of the time."""
    mixture = GaussianMixture1D()
    seeds, fresh = 5, 2000
    covered = {"kde": [], "mean_ball": [], "mode_ball": []}
    for seed in range(seeds):
        demo = build_demo(seed=100 + seed, threads=4)
        xs = mixture.sample(fresh, np.random.default_rng(1000 + seed))
        covered["kde"].append(demo.contains_kde(xs, threads=4).mean())
        for name in ("mean_ball", "mode_ball"):
            covered[name].append(demo.contains_ball(xs, name).mean())
    # calibration-to-calibration spread plus fresh-draw noise
    se = np.sqrt(0.09 / 1000 / seeds + 0.09 / (fresh * seeds))
    for name, values in covered.items():
        assert np.mean(values) >= 0.9 - 3 * se, name
