"""
One-dimensional comparison of the KDE conformal credible set with credible balls.

Draws a seeded bimodal Gaussian mixture, builds the 90% KDE region and two
90% Euclidean balls (around the training mean and around the training KDE
maximiser), and measures each set on a grid. Balls around any centre cover
the low-density valley between the modes; the KDE region does not.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from backend.app.config import DEFAULT_ALPHA
from backend.app.solvers.conformal import ConformalConfig, ball_test, region_summary
from backend.app.solvers.metric import MetricSpec, stack
from backend.app.solvers.scoring import (
    CANDIDATE_STREAM,
    SampleSet,
    ScoreTable,
    score_calibration,
    score_candidates,
    training_center,
)

logger = logging.getLogger(__name__)

DEMO_GAMMA = 3.0
DEMO_SEED = 2024


@dataclass(frozen=True)
class GaussianMixture1D:
    weights: Tuple[float, ...] = (0.6, 0.4)
    means: Tuple[float, ...] = (-3.0, 3.0)
    sds: Tuple[float, ...] = (0.7, 0.7)

    @property
    def valley_midpoint(self) -> float:
        return 0.5 * (min(self.means) + max(self.means))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        component = rng.choice(len(self.weights), size=size, p=np.asarray(self.weights))
        return rng.normal(np.asarray(self.means)[component], np.asarray(self.sds)[component])


@dataclass
class OneDimensionalDemo:
    samples: SampleSet
    table: ScoreTable
    config: ConformalConfig
    mixture: GaussianMixture1D
    centers: Dict[str, float] = field(default_factory=dict)
    radii: Dict[str, float] = field(default_factory=dict)

    @property
    def spec(self) -> MetricSpec:
        return MetricSpec.euclidean()

    def kde_scores(self, xs: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
        points = [np.array([x]) for x in np.asarray(xs, dtype=np.float64)]
        return score_candidates(points, stack(self.spec, self.samples.train), self.spec,
                                self.table.gamma, family=CANDIDATE_STREAM, threads=threads)

    def contains_kde(self, xs: np.ndarray, threads: Optional[int] = None) -> np.ndarray:
        ordered = self.table.sorted_scores
        counts = np.searchsorted(ordered, self.kde_scores(xs, threads), side="right")
        return (counts + 1) / (ordered.size + 1) >= self.config.alpha

    def contains_ball(self, xs: np.ndarray, which: str) -> np.ndarray:
        return np.abs(np.asarray(xs, dtype=np.float64) - self.centers[which]) <= self.radii[which]


def _intervals(grid: np.ndarray, inside: np.ndarray, step: float) -> List[List[float]]:
    runs, start = [], None
    for x, flag in zip(grid, inside):
        if flag and start is None:
            start = x
        elif not flag and start is not None:
            runs.append([float(start), float(x - step)])
            start = None
    if start is not None:
        runs.append([float(start), float(grid[-1])])
    return runs


def build_demo(
    seed: int = DEMO_SEED,
    gamma: float = DEMO_GAMMA,
    alpha: float = DEFAULT_ALPHA,
    size: int = 2000,
    mixture: GaussianMixture1D = GaussianMixture1D(),
    threads: Optional[int] = None,
) -> OneDimensionalDemo:
    rng = np.random.default_rng(seed)
    draws = mixture.sample(size, rng)
    samples = SampleSet(tuple(np.array([x]) for x in draws), size // 2, {"first_s": size // 2})
    spec = MetricSpec.euclidean()
    config = ConformalConfig(alpha)
    table = score_calibration(samples, spec, gamma, threads=threads)

    train = np.array([x[0] for x in samples.train])
    _, mode_center = training_center(samples.train, spec, gamma, threads=threads)
    centers = {"mean_ball": float(train.mean()), "mode_ball": float(mode_center[0])}
    radii = {}
    for name, c in centers.items():
        report = ball_test([np.array([c])], np.array([c]), samples, config, spec)[0]
        radii[name] = report.radius
    return OneDimensionalDemo(samples, table, config, mixture, centers, radii)


def run_demo(
    seed: int = DEMO_SEED,
    gamma: float = DEMO_GAMMA,
    alpha: float = DEFAULT_ALPHA,
    size: int = 2000,
    grid_step: float = 0.01,
    threads: Optional[int] = None,
) -> Tuple[Dict[str, Any], List[Dict[str, Any]]]:
    """Comparison record plus plot-ready grid rows (x, score, membership per set)."""
    demo = build_demo(seed, gamma, alpha, size, threads=threads)
    all_x = np.array([x[0] for x in demo.samples.parameters])
    lo = np.floor(min(all_x.min(), *(demo.centers[k] - demo.radii[k] for k in demo.centers)))
    hi = np.ceil(max(all_x.max(), *(demo.centers[k] + demo.radii[k] for k in demo.centers)))
    grid = np.round(np.arange(lo, hi + grid_step / 2, grid_step), 10)

    scores = demo.kde_scores(grid, threads)
    ordered = demo.table.sorted_scores
    kde_inside = (np.searchsorted(ordered, scores, side="right") + 1) / (ordered.size + 1) >= alpha
    valley = demo.mixture.valley_midpoint

    summary = region_summary(demo.table, demo.config)
    record: Dict[str, Any] = {
        "seed": seed,
        "gamma": gamma,
        "alpha": alpha,
        "n_train": demo.samples.S,
        "n_calibration": demo.samples.N,
        "valley_midpoint": valley,
        "kde": {
            "length": float(np.count_nonzero(kde_inside) * grid_step),
            "includes_valley": bool(demo.contains_kde(np.array([valley]))[0]),
            "intervals": _intervals(grid, kde_inside, grid_step),
            "threshold_score": summary["threshold_score"],
        },
    }
    ball_inside = {name: demo.contains_ball(grid, name) for name in ("mean_ball", "mode_ball")}
    for name, inside in ball_inside.items():
        c, r = demo.centers[name], demo.radii[name]
        record[name] = {
            "center": c,
            "radius": r,
            # measured on the same grid as the KDE set
            "length": float(np.count_nonzero(inside) * grid_step),
            "includes_valley": bool(demo.contains_ball(np.array([valley]), name)[0]),
        }
    logger.info("demo-1d: KDE length %.3f, mean ball %.3f, mode ball %.3f",
                record["kde"]["length"], record["mean_ball"]["length"], record["mode_ball"]["length"])

    rows = [
        {
            "x": float(x),
            "score": float(s),
            "in_kde": bool(k),
            "in_mean_ball": bool(m),
            "in_mode_ball": bool(d),
        }
        for x, s, k, m, d in zip(grid, scores, kde_inside,
                                 ball_inside["mean_ball"], ball_inside["mode_ball"])
    ]
    return record, rows
