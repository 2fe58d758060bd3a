"""Budget-constrained configuration search.

A Gaussian-process surrogate over the discrete (m, d, k, backbone) grid drives
an upper-confidence-bound acquisition; the incumbent is the feasible
configuration whose throughput comes closest to the budget from below.
:func:`exhaustive_search` enumerates the same grid and serves as the oracle.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .architecture import (
    CLASSIFIER_DEPTHS,
    CLASSIFIER_KERNELS,
    WIDTH_MULTIPLIERS,
    ModelConfig,
)
from .scenario import ScenarioSpec

log = logging.getLogger(__name__)

LENGTH_SCALE = 0.5
UCB_BETA = 2.0
JITTER_START = 1e-8
JITTER_MAX = 1e-4
SIGNAL_VARIANCE_FLOOR = 1e-12
DEFAULT_SEED = 42


class NumericalError(RuntimeError):
    """Kernel matrix could not be factorised even at the largest jitter."""


class SearchExhausted(LookupError):
    """Every candidate has already been evaluated."""


def gigaops_per_second(megaops: float, n_cameras: int, fps: int) -> float:
    images_per_second = n_cameras * fps
    return images_per_second * megaops / 1000.0


@dataclass(frozen=True)
class SearchPoint:
    encoded: tuple[float, ...]
    raw: ModelConfig


@dataclass(frozen=True)
class SearchGrid:
    num_classes: int
    block_specs_ids: tuple[str, ...]
    width_multipliers: tuple[float, ...] = WIDTH_MULTIPLIERS
    classifier_depths: tuple[int, ...] = CLASSIFIER_DEPTHS
    classifier_kernels: tuple[int, ...] = CLASSIFIER_KERNELS

    def configs(self) -> list[ModelConfig]:
        """All grid configurations in lexicographic (m, d, k, block index) order."""
        return [
            ModelConfig(width_multiplier=m, classifier_depth=d, classifier_kernel=k,
                        num_classes=self.num_classes, block_specs_id=b)
            for m, d, k, b in itertools.product(
                self.width_multipliers, self.classifier_depths, self.classifier_kernels, self.block_specs_ids)
        ]

    def __len__(self) -> int:
        return (len(self.width_multipliers) * len(self.classifier_depths)
                * len(self.classifier_kernels) * len(self.block_specs_ids))

    def encode(self, cfg: ModelConfig) -> SearchPoint:
        def norm(v, axis):
            lo, hi = min(axis), max(axis)
            return 0.0 if hi == lo else (v - lo) / (hi - lo)

        one_hot = [1.0 if b == cfg.block_specs_id else 0.0 for b in self.block_specs_ids]
        if sum(one_hot) != 1.0:
            raise ValueError(f"block specs {cfg.block_specs_id!r} is not part of the grid")
        enc = (
            norm(cfg.width_multiplier, self.width_multipliers),
            norm(cfg.classifier_depth, self.classifier_depths),
            norm(cfg.classifier_kernel, self.classifier_kernels),
            *one_hot,
        )
        return SearchPoint(enc, cfg)

    def decode(self, encoded: Sequence[float]) -> ModelConfig:
        def denorm(u, axis):
            lo, hi = min(axis), max(axis)
            target = lo + u * (hi - lo)
            return min(axis, key=lambda v: abs(v - target))

        block = self.block_specs_ids[int(np.argmax(encoded[3:]))]
        return ModelConfig(
            width_multiplier=denorm(encoded[0], self.width_multipliers),
            classifier_depth=denorm(encoded[1], self.classifier_depths),
            classifier_kernel=denorm(encoded[2], self.classifier_kernels),
            num_classes=self.num_classes,
            block_specs_id=block,
        )

    def points(self) -> list[SearchPoint]:
        return [self.encode(c) for c in self.configs()]


# --- Gaussian process -------------------------------------------------------

def se_kernel(a: np.ndarray, b: np.ndarray, length_scale: float, signal_variance: float) -> np.ndarray:
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * a @ b.T
    return signal_variance * np.exp(-np.maximum(sq, 0.0) / (2.0 * length_scale**2))


@dataclass
class GpState:
    """Fitted surrogate.

    The prior mean is the mean of the observed objectives and the signal
    variance their variance, so predictions far from all data revert to the
    sample mean with variance ``signal_variance``.
    """

    observations: list[tuple[SearchPoint, float]]
    length_scale: float
    signal_variance: float
    noise_jitter: float
    prior_mean: float
    x_train: np.ndarray
    factorization: np.ndarray  # lower Cholesky factor of the jittered Gram matrix
    alpha: np.ndarray


def gp_fit(observations: Sequence[tuple[SearchPoint, float]], length_scale: float = LENGTH_SCALE) -> GpState:
    if not observations:
        raise ValueError("gp_fit needs at least one observation")
    unique: dict[tuple[float, ...], float] = {}
    for point, value in observations:
        key = tuple(point.encoded)
        if key in unique and unique[key] != value:
            raise ValueError(f"conflicting values for duplicate point {point.raw}")
        unique[key] = float(value)
    x = np.array(list(unique.keys()), dtype=np.float64)
    y = np.array(list(unique.values()), dtype=np.float64)

    prior_mean = float(np.mean(y))
    signal_variance = max(float(np.var(y)), SIGNAL_VARIANCE_FLOOR)
    gram = se_kernel(x, x, length_scale, signal_variance)

    jitter = JITTER_START
    while True:
        try:
            chol = np.linalg.cholesky(gram + jitter * np.eye(len(y)))
            break
        except np.linalg.LinAlgError:
            if jitter * 10 > JITTER_MAX * (1 + 1e-9):
                raise NumericalError(f"Gram matrix not positive definite with jitter {jitter:g}") from None
            jitter *= 10
            log.debug("cholesky failed, raising jitter to %g", jitter)

    resid = y - prior_mean
    alpha = _cho_solve(chol, resid)
    return GpState(list(observations), length_scale, signal_variance, jitter, prior_mean, x, chol, alpha)


def _cho_solve(chol: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = solve_triangular(chol, b, lower=True)
    return solve_triangular(chol.T, z, lower=False)


def gp_predict_many(state: GpState, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k_star = se_kernel(x, state.x_train, state.length_scale, state.signal_variance)
    mean = state.prior_mean + k_star @ state.alpha
    v = solve_triangular(state.factorization, k_star.T, lower=True)
    var = state.signal_variance - np.sum(v**2, axis=0)
    return mean, np.maximum(var, 0.0)


def gp_predict(state: GpState, point: SearchPoint) -> tuple[float, float]:
    mean, var = gp_predict_many(state, np.array([point.encoded]))
    return float(mean[0]), float(var[0])


# --- acquisition and search ---------------------------------------------------

def penalized_objective(gigaops: float, budget: float) -> float:
    """Throughput below the budget; overshoot is reflected below the budget line."""
    return gigaops if gigaops <= budget else budget - (gigaops - budget)


def ucb(state: GpState, x: np.ndarray, beta: float = UCB_BETA) -> np.ndarray:
    mean, var = gp_predict_many(state, x)
    return mean + beta * np.sqrt(var)


def acquire(state: GpState | None, candidates: Sequence[SearchPoint], visited: set[int],
            rng: np.random.Generator | None = None, beta: float = UCB_BETA) -> int:
    """Index of the next candidate to evaluate.

    Without a surrogate the pick is uniform over unvisited candidates. With one,
    it is the UCB argmax; ties go to the lowest grid index.
    """
    open_idx = [i for i in range(len(candidates)) if i not in visited]
    if not open_idx:
        raise SearchExhausted("all candidates visited")
    if state is None:
        rng = rng or np.random.default_rng(DEFAULT_SEED)
        return open_idx[int(rng.integers(len(open_idx)))]
    x = np.array([candidates[i].encoded for i in open_idx])
    scores = ucb(state, x, beta)
    return open_idx[int(np.argmax(scores))]


@dataclass
class TraceEntry:
    iteration: int
    config: ModelConfig
    gigaops: float
    feasible: bool

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "config": self.config.model_dump(),
                "gigaops": self.gigaops, "feasible": self.feasible}


@dataclass
class SearchResult:
    best: ModelConfig | None
    gigaops: float | None
    budget: float
    min_difference: float | None
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def utilization(self) -> float | None:
        return None if self.gigaops is None else self.gigaops / self.budget

    def to_dict(self) -> dict:
        return {
            "best": None if self.best is None else self.best.model_dump(),
            "gigaops": self.gigaops,
            "budget": self.budget,
            "min_difference": self.min_difference,
            "trace": [t.to_dict() for t in self.trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        return cls(
            best=None if d["best"] is None else ModelConfig.model_validate(d["best"]),
            gigaops=d["gigaops"],
            budget=d["budget"],
            min_difference=d["min_difference"],
            trace=[TraceEntry(t["iteration"], ModelConfig.model_validate(t["config"]), t["gigaops"], t["feasible"])
                   for t in d["trace"]],
        )


class _Incumbent:
    def __init__(self, budget: float):
        self.budget = budget
        self.index: int | None = None
        self.gigaops: float | None = None
        self.min_difference = math.inf

    def offer(self, index: int, gigaops: float) -> None:
        if gigaops > self.budget:
            return
        diff = self.budget - gigaops
        # with an unbounded budget every difference is inf; the larger load wins
        if self.index is None or diff < self.min_difference or (
                diff == self.min_difference and (gigaops, -index) > (self.gigaops, -self.index)):
            self.index, self.gigaops, self.min_difference = index, gigaops, diff

    def result(self, configs: Sequence[ModelConfig], trace: list[TraceEntry]) -> SearchResult:
        if self.index is None:
            return SearchResult(None, None, self.budget, None, trace)
        return SearchResult(configs[self.index], self.gigaops, self.budget, self.min_difference, trace)


CostFn = Callable[[ModelConfig], float]


def exhaustive_search(scenario: ScenarioSpec, grid: SearchGrid, cost_fn: CostFn) -> SearchResult:
    """Evaluate every grid point; ``cost_fn`` returns per-image megaops."""
    budget_gops, images_per_second = scenario.budget_gops, scenario.images_per_second
    configs = grid.configs()
    inc = _Incumbent(budget_gops)
    trace = []
    for i, cfg in enumerate(configs):
        g = images_per_second * cost_fn(cfg) / 1000.0
        trace.append(TraceEntry(i + 1, cfg, g, g <= budget_gops))
        inc.offer(i, g)
    return inc.result(configs, trace)


def bayesian_search(scenario: ScenarioSpec, grid: SearchGrid, cost_fn: CostFn, seed: int = DEFAULT_SEED,
                    max_iterations: int | None = None, beta: float = UCB_BETA) -> SearchResult:
    budget_gops, images_per_second = scenario.budget_gops, scenario.images_per_second
    if max_iterations is None:
        max_iterations = scenario.max_iterations
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    configs = grid.configs()
    if not configs:
        raise ValueError("empty search grid")
    points = [grid.encode(c) for c in configs]
    rng = np.random.default_rng(seed)
    inc = _Incumbent(budget_gops)
    visited: set[int] = set()
    observations: list[tuple[SearchPoint, float]] = []
    trace: list[TraceEntry] = []
    state = None

    for iteration in range(1, max_iterations + 1):
        try:
            idx = acquire(state, points, visited, rng, beta)
        except SearchExhausted:
            break
        visited.add(idx)
        g = images_per_second * cost_fn(configs[idx]) / 1000.0
        trace.append(TraceEntry(iteration, configs[idx], g, g <= budget_gops))
        inc.offer(idx, g)
        observations.append((points[idx], penalized_objective(g, budget_gops)))
        state = gp_fit(observations)
    return inc.result(configs, trace)
