"""Ripley K / L / D estimation for tag point patterns with Monte Carlo nulls.

All estimators follow the plain (edge-uncorrected) form

    K_ij(h) = 1 / (lambda_i * lambda_j * A) * sum_k sum_l I(d(i_k, j_l) <= h)

with lambda = n / A.  The self case sums over ordered pairs k != l.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels

VAR_FLOOR = 1e-12


class DegeneratePattern(ValueError):
    """Too few points for the requested estimator."""


@dataclass(frozen=True)
class TagPointPattern:
    """Points (km) inside a rectangular window ``[0, width] x [0, height]``."""

    label: str
    points: np.ndarray
    width: float
    height: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def intensity(self) -> float:
        return self.n / self.area

    @property
    def x(self):
        return self.points[:, 0]

    @property
    def y(self):
        return self.points[:, 1]


def scale_grid(step: float = 0.1, count: int = 10) -> np.ndarray:
    """Equidistant scales ``step, 2*step, ..., count*step`` in km."""
    if step <= 0 or count < 1:
        raise ValueError("scale grid needs step > 0 and count >= 1")
    return step * np.arange(1, count + 1, dtype=np.float64)


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or len(grid) == 0 or grid[0] <= 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("scale grid must be positive and strictly increasing")
    return grid


def k_from_counts(counts, n_i: int, n_j: int, area: float) -> np.ndarray:
    lam_i = n_i / area
    lam_j = n_j / area
    return np.asarray(counts, dtype=np.float64) / (lam_i * lam_j * area)


def self_pair_counts(pattern: TagPointPattern, grid) -> np.ndarray:
    """Ordered-pair counts (k != l) within each scale."""
    grid = _check_grid(grid)
    return 2 * kernels.pair_hist_self(pattern.x, pattern.y, grid * grid)


def estimate_k(pattern: TagPointPattern, grid) -> np.ndarray:
    if pattern.n < 2:
        raise DegeneratePattern(f"{pattern.label}: K needs >= 2 points, got {pattern.n}")
    return k_from_counts(self_pair_counts(pattern, grid), pattern.n, pattern.n, pattern.area)


def estimate_k_cross(pattern_i: TagPointPattern, pattern_j: TagPointPattern, grid) -> np.ndarray:
    if pattern_i.n < 1 or pattern_j.n < 1:
        raise DegeneratePattern("cross K needs both patterns non-empty")
    grid = _check_grid(grid)
    counts = kernels.pair_hist_cross(pattern_i.x, pattern_i.y, pattern_j.x, pattern_j.y, grid * grid)
    return k_from_counts(counts, pattern_i.n, pattern_j.n, pattern_i.area)


def k_to_d(k_values, grid) -> tuple[np.ndarray, np.ndarray]:
    """L = sqrt(K / pi) and D = L - h."""
    k_values = np.asarray(k_values, dtype=np.float64)
    if np.any(k_values < 0):
        raise ValueError("K values must be non-negative")
    l_values = np.sqrt(k_values / math.pi)
    return l_values, l_values - np.asarray(grid, dtype=np.float64)


@dataclass(frozen=True)
class DProfile:
    grid: np.ndarray
    k_hat: np.ndarray
    l_hat: np.ndarray
    d_hat: np.ndarray
    var_d: np.ndarray
    envelope_lo: np.ndarray
    envelope_hi: np.ndarray
    kind: str  # "self" | "cross"
    n_sims: int

    def rows(self):
        for k in range(len(self.grid)):
            yield (self.grid[k], self.k_hat[k], self.l_hat[k], self.d_hat[k],
                   self.var_d[k], self.envelope_lo[k], self.envelope_hi[k])


CSV_HEADER = ("h", "khat", "lhat", "dhat", "var", "lo", "hi")


def _workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("GEOSTAT_THREADS")
    return max(1, int(env)) if env else 1


def _run_sims(fn, seed, n_sims, workers):
    seeds = np.random.SeedSequence(seed).spawn(n_sims)
    if workers == 1:
        rows = [fn(np.random.default_rng(s)) for s in seeds]
    else:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda s: fn(np.random.default_rng(s)), seeds))
    return np.vstack(rows)


def _csr_d(n, width, height, grid, r2):
    area = width * height

    def one(rng):
        x = rng.uniform(0.0, width, n)
        y = rng.uniform(0.0, height, n)
        counts = 2 * kernels.pair_hist_self(x, y, r2)
        return np.sqrt(k_from_counts(counts, n, n, area) / math.pi) - grid

    return one


CROSS_NULLS = ("labelling", "toroidal")


def simulate_null(pattern: TagPointPattern, grid, n_sims: int = 99, seed=0,
                  other: Optional[TagPointPattern] = None, workers: Optional[int] = None,
                  cross_null: str = "labelling"):
    """Pointwise 95% envelope and variance of D under the null model.

    Self case (``other`` is None): complete spatial randomness, resampling
    ``n`` uniform points in the window.  Cross case: ``"labelling"`` permutes
    type labels over the pooled points with group sizes held fixed;
    ``"toroidal"`` keeps ``pattern`` fixed and shifts ``other`` by a uniform
    random vector with wrap-around, which tests independence of the two
    processes rather than exchangeability of labels.

    Returns ``(lo, hi, var, sims)`` where ``sims`` has shape (n_sims, K).
    """
    if n_sims < 2:
        raise ValueError("n_sims must be >= 2")
    grid = _check_grid(grid)
    r2 = grid * grid
    if other is None:
        if pattern.n < 2:
            raise DegeneratePattern(f"{pattern.label}: K needs >= 2 points")
        fn = _csr_d(pattern.n, pattern.width, pattern.height, grid, r2)
    elif cross_null == "labelling":
        fn = _labelling_d(pattern, other, grid, r2)
    elif cross_null == "toroidal":
        fn = _toroidal_d(pattern, other, grid, r2)
    else:
        raise ValueError(f"unknown cross null {cross_null!r}; expected one of {CROSS_NULLS}")
    sims = _run_sims(fn, seed, n_sims, _workers(workers))
    lo, hi = np.percentile(sims, [2.5, 97.5], axis=0)
    var = sims.var(axis=0, ddof=1)
    return lo, hi, var, sims


def _labelling_d(pi: TagPointPattern, pj: TagPointPattern, grid, r2):
    if pi.n < 1 or pj.n < 1:
        raise DegeneratePattern("cross D needs both patterns non-empty")
    pooled = np.vstack([pi.points, pj.points])
    a, b, d2 = kernels.close_pairs(pooled[:, 0], pooled[:, 1], r2[-1])
    bins = np.searchsorted(r2, d2, side="left").astype(np.int64)
    n_i, n_tot = pi.n, len(pooled)
    m = len(grid)
    area = pi.area

    def one(rng):
        is_i = np.zeros(n_tot, dtype=np.uint8)
        is_i[rng.permutation(n_tot)[:n_i]] = 1
        counts = kernels.label_hist(a, b, bins, is_i, m)
        return np.sqrt(k_from_counts(counts, n_i, n_tot - n_i, area) / math.pi) - grid

    return one


def _toroidal_d(pi: TagPointPattern, pj: TagPointPattern, grid, r2):
    if pi.n < 1 or pj.n < 1:
        raise DegeneratePattern("cross D needs both patterns non-empty")
    w, h = pi.width, pi.height
    area = pi.area

    def one(rng):
        x = np.mod(pj.x + rng.uniform(0.0, w), w)
        y = np.mod(pj.y + rng.uniform(0.0, h), h)
        counts = kernels.pair_hist_cross(pi.x, pi.y, x, y, r2)
        return np.sqrt(k_from_counts(counts, pi.n, pj.n, area) / math.pi) - grid

    return one


def d_profile(pattern: TagPointPattern, grid, n_sims: int = 99, seed=0,
              workers: Optional[int] = None) -> DProfile:
    grid = _check_grid(grid)
    k_hat = estimate_k(pattern, grid)
    l_hat, d_hat = k_to_d(k_hat, grid)
    lo, hi, var, _ = simulate_null(pattern, grid, n_sims, seed, workers=workers)
    return DProfile(grid, k_hat, l_hat, d_hat, var, lo, hi, "self", n_sims)


def cross_d_profile(pattern_i: TagPointPattern, pattern_j: TagPointPattern, grid,
                    n_sims: int = 99, seed=0, workers: Optional[int] = None,
                    cross_null: str = "labelling") -> DProfile:
    grid = _check_grid(grid)
    k_hat = estimate_k_cross(pattern_i, pattern_j, grid)
    l_hat, d_hat = k_to_d(k_hat, grid)
    lo, hi, var, _ = simulate_null(pattern_i, grid, n_sims, seed, other=pattern_j,
                                   workers=workers, cross_null=cross_null)
    return DProfile(grid, k_hat, l_hat, d_hat, var, lo, hi, "cross", n_sims)


ATTRACTION, INDEPENDENCE, REPULSION = "attraction", "independence", "repulsion"


def classify_interaction(profile: DProfile) -> tuple[list[str], str]:
    """Per-scale reading of D against its envelope, plus an overall verdict.

    Overall: attraction if any scale is above the envelope and none below;
    repulsion if any is below and none above; otherwise independence.
    """
    per_h = []
    for d, lo, hi in zip(profile.d_hat, profile.envelope_lo, profile.envelope_hi):
        if d > hi:
            per_h.append(ATTRACTION)
        elif d < lo:
            per_h.append(REPULSION)
        else:
            per_h.append(INDEPENDENCE)
    if ATTRACTION in per_h and REPULSION not in per_h:
        verdict = ATTRACTION
    elif REPULSION in per_h and ATTRACTION not in per_h:
        verdict = REPULSION
    else:
        verdict = INDEPENDENCE
    return per_h, verdict


def write_profile_csv(profile: DProfile, fh) -> None:
    fh.write(",".join(CSV_HEADER) + "\n")
    for row in profile.rows():
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


def uniform_pattern(rng, n: int, width: float = 1.0, height: float = 1.0, label="csr") -> TagPointPattern:
    pts = np.column_stack([rng.uniform(0, width, n), rng.uniform(0, height, n)])
    return TagPointPattern(label, pts, width, height)


def thomas_pattern(rng, parents: Sequence, n: int, sigma: float, width: float = 1.0,
                   height: float = 1.0, label="thomas") -> TagPointPattern:
    """``n`` Gaussian children scattered around randomly chosen parents,
    clipped to the window."""
    parents = np.asarray(parents, dtype=np.float64).reshape(-1, 2)
    idx = rng.integers(0, len(parents), n)
    pts = parents[idx] + rng.normal(0.0, sigma, (n, 2))
    pts[:, 0] = np.clip(pts[:, 0], 0, width)
    pts[:, 1] = np.clip(pts[:, 1], 0, height)
    return TagPointPattern(label, pts, width, height)
