"""Synthetic two-group sparse functional data (Models A/B/C, Scenarios 1-9)."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .data import FunctionalDataset, SparseCurve
from .errors import DataError, DomainError

SQRT5 = np.sqrt(5.0)
OUTLIER_SHIFT = 5.0
MEASUREMENT_SD = 0.5


def eigenfunction(k: int, t):
    """Fourier basis on [0, 10]: cosines for odd ``k``, sines for even ``k``."""
    if k not in (1, 2, 3):
        raise DomainError(f"eigenfunction index must be 1, 2 or 3, got {k}")
    t = np.asarray(t, float)
    if k % 2:
        return np.cos(np.pi * k * t / 5.0) / SQRT5
    return np.sin(np.pi * k * t / 5.0) / SQRT5


MEAN_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "t+sin(t)": lambda t: t + np.sin(t),
    "t+cos(t)": lambda t: t + np.cos(t),
}


@dataclass(frozen=True)
class GroupSpec:
    mean_fn: str
    eigenvalues: tuple[float, float, float]

    def __post_init__(self):
        if self.mean_fn not in MEAN_FUNCTIONS:
            raise DataError(f"unknown mean function {self.mean_fn!r}")
        lam = self.eigenvalues
        if len(lam) != 3 or any(v <= 0 for v in lam) or any(a < b for a, b in zip(lam, lam[1:])):
            raise DataError(f"eigenvalues must be three positive nonincreasing numbers, got {lam}")

    def mean(self, t):
        return MEAN_FUNCTIONS[self.mean_fn](np.asarray(t, float))


SMALL = (4.0, 2.0, 1.0)
LARGE = (16.0, 8.0, 4.0)

MODELS: dict[str, tuple[GroupSpec, GroupSpec]] = {
    "A": (GroupSpec("t+sin(t)", SMALL), GroupSpec("t+cos(t)", LARGE)),
    "B": (GroupSpec("t+sin(t)", SMALL), GroupSpec("t+cos(t)", SMALL)),
    "C": (GroupSpec("t+sin(t)", SMALL), GroupSpec("t+sin(t)", LARGE)),
}

ScoreDist = Literal["normal", "t3"]


def draw_scores(group: GroupSpec, dist: ScoreDist, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Component scores with variances ``group.eigenvalues``.

    ``t3`` scores are Student-t(3) draws scaled by ``sqrt(lambda / 3)`` so
    the variance still equals lambda.
    """
    lam = np.asarray(group.eigenvalues, float)
    shape = (3,) if size is None else (size, 3)
    if dist == "normal":
        return rng.standard_normal(shape) * np.sqrt(lam)
    if dist == "t3":
        return rng.standard_t(3, shape) * np.sqrt(lam / 3.0)
    raise DataError(f"unknown score distribution {dist!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    model: Literal["A", "B", "C"]
    score_dist: ScoreDist
    rho_out: float
    noise_var: float
    n: int = 200
    n_obs_range: tuple[int, int] = (5, 10)
    domain: tuple[float, float] = (0.0, 10.0)
    seed: int | Sequence[int] = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise DataError(f"unknown model {self.model!r}")
        if self.score_dist not in ("normal", "t3"):
            raise DataError(f"unknown score distribution {self.score_dist!r}")
        if not 0.0 <= self.rho_out <= 1.0:
            raise DataError("rho_out must lie in [0, 1]")
        if self.noise_var < 0:
            raise DataError("noise_var must be nonnegative")
        if self.n < 2 or self.n % 2:
            raise DataError("n must be a positive even number")
        lo, hi = self.n_obs_range
        if lo < 1 or hi < lo:
            raise DataError(f"invalid observation range {self.n_obs_range}")

    def with_seed(self, seed) -> ScenarioConfig:
        return replace(self, seed=seed)


# (model, score distribution, outlier proportion, added noise variance)
SCENARIOS: dict[int, tuple[str, str, float, float]] = {
    1: ("A", "normal", 0.10, 0.0),
    2: ("A", "t3", 0.10, 0.0),
    3: ("A", "t3", 0.15, 0.1),
    4: ("B", "t3", 0.0, 0.0),
    5: ("B", "normal", 0.0, 0.0),
    6: ("B", "normal", 0.10, 1.0),
    7: ("C", "t3", 0.10, 0.1),
    8: ("C", "normal", 0.10, 0.1),
    9: ("C", "t3", 0.0, 1.0),
}


def scenario(scenario_id: int, **overrides) -> ScenarioConfig:
    if scenario_id not in SCENARIOS:
        raise DomainError(f"scenario id must be in 1..9, got {scenario_id}")
    model, dist, rho, noise = SCENARIOS[scenario_id]
    return ScenarioConfig(model, dist, rho, noise, **overrides)


def generate(config: ScenarioConfig) -> FunctionalDataset:
    """Draw one dataset: ``n/2`` curves per group, labels equal to the group."""
    rng = np.random.default_rng(config.seed)
    lo_t, hi_t = config.domain
    lo, hi = config.n_obs_range
    half = config.n // 2
    times, values, labels = [], [], []
    for g, group in enumerate(MODELS[config.model]):
        scores = draw_scores(group, config.score_dist, rng, size=half)
        for i in range(half):
            m = int(rng.integers(lo, hi + 1))
            t = np.sort(rng.uniform(lo_t, hi_t, m))
            x = group.mean(t) + sum(scores[i, k - 1] * eigenfunction(k, t) for k in (1, 2, 3))
            times.append(t)
            values.append(x + rng.normal(0.0, MEASUREMENT_SD, m))
            labels.append(g)

    n_out = int(np.floor(config.rho_out * config.n + 0.5))
    for i in rng.choice(config.n, size=n_out, replace=False):
        values[i] = values[i] + OUTLIER_SHIFT
    if config.noise_var > 0:
        sd = np.sqrt(config.noise_var)
        values = [z + rng.normal(0.0, sd, z.size) for z in values]

    curves = tuple(
        SparseCurve(f"c{i:04d}", t, z, lab) for i, (t, z, lab) in enumerate(zip(times, values, labels))
    )
    return FunctionalDataset(curves, config.domain)
