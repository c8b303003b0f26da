"""Exact and Monte Carlo laws of partial sums, and Kolmogorov distances.

Lattice laws are exact mixtures of noise convolutions conditioned on the
occupancy count; continuous interval probabilities use a grid convolution
whose error is tracked through the Kolmogorov-distance subadditivity of
independent convolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, VariantMismatch, WindowTooLarge
from .towers import occupancy_distribution, sample_trajectory_batch

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class LatticeDistribution:
    """Finitely supported law on the integers."""

    offset: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if np.min(p) < -1e-15:
            raise ValueError("negative probability entry")
        if abs(float(p.sum()) - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}")

    @property
    def support(self) -> np.ndarray:
        return self.offset + np.arange(len(self.probs))

    def prob_at(self, v: int) -> float:
        i = v - self.offset
        if 0 <= i < len(self.probs):
            return float(self.probs[i])
        return 0.0

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot((self.support - m) ** 2, self.probs))

    def convolve(self, other: "LatticeDistribution") -> "LatticeDistribution":
        return LatticeDistribution(
            offset=self.offset + other.offset,
            probs=np.convolve(self.probs, other.probs),
        )


@dataclass(frozen=True)
class PiecewiseDensity:
    """Piecewise-constant density: values[i] on [breakpoints[i], breakpoints[i+1])."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", v)
        if len(bp) != len(v) + 1:
            raise ValueError("need one more breakpoint than values")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase")
        if np.min(v) < 0:
            raise ValueError("negative density")

    def integral(self) -> float:
        return float(np.dot(np.diff(self.breakpoints), self.values))

    def max_value(self) -> float:
        return float(np.max(self.values))

    def evaluate(self, x: float) -> float:
        i = int(np.searchsorted(self.breakpoints, x, side="right")) - 1
        if 0 <= i < len(self.values):
            return float(self.values[i])
        return 0.0


@dataclass(frozen=True)
class GridDensity:
    """Cell masses on a uniform grid; cell i covers [left + i*step, left + (i+1)*step)."""

    left: float
    step: float
    masses: np.ndarray

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if abs(float(np.sum(self.masses)) - 1.0) > 1e-9:
            raise ValueError("cell masses must sum to 1")


@dataclass(frozen=True)
class IntervalProbability:
    """Probability with its certified error bound and computation method."""

    value: float
    error: float
    method: str

    @property
    def lower(self) -> float:
        return max(0.0, self.value - self.error)

    @property
    def upper(self) -> float:
        return min(1.0, self.value + self.error)


def normal_cdf(x: float) -> float:
    """Standard normal distribution function, absolute error < 1e-15."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


TWO_INTERVAL_VARIANCE = 7.0 / 12.0  # Var of the +-[1/2,1] uniform noise


def symmetric_step_sum(a: float, m: int) -> LatticeDistribution:
    """Exact m-fold convolution of the {-1,0,1} noise with P(+-1)=a/2."""
    if not (0.0 < a <= 1.0):
        raise ValueError("a must lie in (0, 1]")
    if m < 0:
        raise ValueError("m must be >= 0")
    probs = np.array([1.0])
    kernel = np.array([a / 2.0, 1.0 - a, a / 2.0])
    for _ in range(m):
        probs = np.convolve(probs, kernel)
    return LatticeDistribution(offset=-m, probs=probs)


def step_sum_table(a: float, m_max: int) -> list[np.ndarray]:
    """probs arrays of symmetric_step_sum(a, m) for all m in [0, m_max]."""
    out = [np.array([1.0])]
    kernel = np.array([a / 2.0, 1.0 - a, a / 2.0])
    for _ in range(m_max):
        out.append(np.convolve(out[-1], kernel))
    return out


def lattice_sum_distribution(model, n: int, op_budget: int = 10**9) -> LatticeDistribution:
    """Exact law of the n-step partial sum of a lattice model."""
    if model.noise.kind != "lattice":
        raise VariantMismatch("lattice_sum_distribution needs a lattice model")
    if n < 1:
        raise ValueError("n must be >= 1")
    active = model.weight > 0.5
    occ = occupancy_distribution(model.system, active, n, op_budget=op_budget)
    table = step_sum_table(model.noise.a, n)
    probs = np.zeros(2 * n + 1)
    for m in range(n + 1):
        w = occ.probs[m]
        if w == 0.0:
            continue
        probs[n - m : n + m + 1] += w * table[m]
    return LatticeDistribution(offset=-n, probs=probs)


def lattice_sum_by_path_enumeration(model, n: int) -> LatticeDistribution:
    """Brute-force oracle: enumerate trajectories and noise outcomes."""
    sys = model.system
    a = model.noise.a
    noise_vals = [-1, 0, 1]
    noise_probs = [a / 2.0, 1.0 - a, a / 2.0]
    probs = np.zeros(2 * n + 1)
    pi = sys.stationary_array()

    def walk(tower, level, step, total, prob):
        w = model.weight[sys.offsets[tower] + level]
        for gv, gp in zip(noise_vals, noise_probs):
            if gp == 0.0:
                continue
            t2 = total + w * gv
            p2 = prob * gp
            if step + 1 == n:
                probs[int(round(t2)) + n] += p2
            elif level < sys.heights[tower] - 1:
                walk(tower, level + 1, step + 1, t2, p2)
            else:
                for d in range(len(sys.towers)):
                    pd = sys.top_transition[tower, d]
                    if pd > 0.0:
                        walk(d, 0, step + 1, t2, p2 * pd)

    for l in range(len(sys.towers)):
        for j in range(int(sys.heights[l])):
            walk(l, j, 0, 0.0, pi[sys.offsets[l] + j])
    return LatticeDistribution(offset=-n, probs=probs)


def _cell_masses_scaled_noise(c: float, left: float, step: float, ncells: int) -> np.ndarray:
    """Exact cell integrals of the density of c*g, g the two-interval noise."""
    edges = left + step * np.arange(ncells + 1)
    # CDF of c*g at x
    def cdf(x):
        y = np.clip(x / c, -1.5, 1.5)
        lo = np.clip(y + 1.0, 0.0, 0.5)       # mass on [-1, -1/2]
        hi = np.clip(y - 0.5, 0.0, 0.5)       # mass on [1/2, 1]
        return lo + hi
    f = cdf(edges)
    return np.diff(f)


def interval_probability(
    coefficients: Sequence[float],
    u: float,
    target_error: float = 1e-6,
    cell_budget: int = 1 << 26,
    mc_reps: Optional[int] = 10**6,
    seed: int = 0,
) -> IntervalProbability:
    """P(sum_j c_j g_j in [-u, u]) for i.i.d. two-interval-uniform noise.

    The grid path quantizes each factor to exact cell masses; Kolmogorov
    distance is subadditive under independent convolution, so the certified
    error is sum_j step/(2 c_j) per CDF endpoint, i.e. twice that in total.
    Falls back to Monte Carlo (with a 4-sigma confidence radius) when the
    grid would exceed the cell budget.
    """
    cs = [float(c) for c in coefficients if c > 0.0]
    if u < 0:
        raise ValueError("u must be >= 0")
    if not cs:
        return IntervalProbability(1.0, 0.0, "exact")
    if len(cs) == 1:
        c = cs[0]
        v = min(np.clip(2 * u / c - 1.0, 0.0, 1.0), 1.0)  # P(|g| <= u/c)
        return IntervalProbability(float(v), 0.0, "exact")

    inv_sum = sum(1.0 / c for c in cs)
    step = target_error / inv_sum  # total error = 2 * sum step/(2 c_j)
    width = 2.0 * sum(cs) + 4.0 * step
    ncells = int(math.ceil(width / step))
    if ncells <= cell_budget:
        return _interval_probability_grid(cs, u, step)
    if mc_reps is not None:
        return _interval_probability_mc(cs, u, mc_reps, seed)
    raise BudgetExceeded(
        f"grid needs {ncells} cells (budget {cell_budget}) and Monte Carlo disabled"
    )


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) * len(b) < 1 << 22:
        return np.convolve(a, b)
    return _fft_convolve(a, b)


def _interval_probability_grid(cs: Sequence[float], u: float, step: float) -> IntervalProbability:
    # Group equal coefficients and use convolution-by-squaring.  Each factor
    # is an atom vector: masses[i] sits at start + i*step (cell midpoints),
    # and convolving two vectors adds their start positions.
    groups: dict[float, int] = {}
    for c in cs:
        groups[c] = groups.get(c, 0) + 1
    total = None  # (masses, start)
    for c, count in sorted(groups.items()):
        ncells = int(math.ceil(2.0 * c / step)) + 2
        left = -0.5 * ncells * step
        base = _cell_masses_scaled_noise(c, left, step, ncells)
        bstart = left + 0.5 * step
        power, pstart = None, 0.0
        cur, cstart = base, bstart
        k = count
        while k:
            if k & 1:
                if power is None:
                    power, pstart = cur, cstart
                else:
                    power, pstart = _conv(power, cur), pstart + cstart
            k >>= 1
            if k:
                cur, cstart = _conv(cur, cur), 2.0 * cstart
        if total is None:
            total = (power, pstart)
        else:
            total = (_conv(total[0], power), total[1] + pstart)
    masses, start = total
    masses = np.maximum(masses, 0.0)
    pos = start + step * np.arange(len(masses))
    inside = (pos >= -u) & (pos <= u)
    value = float(masses[inside].sum() / masses.sum())
    err = sum(step / c for c in cs)  # two endpoints, step/(2c) each
    return IntervalProbability(value, err, "grid")


def _fft_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a) + len(b) - 1
    size = 1 << (n - 1).bit_length()
    fa = np.fft.rfft(a, size)
    fa *= np.fft.rfft(b, size)
    out = np.fft.irfft(fa, size)[:n]
    return out


def sample_two_interval(rng: np.random.Generator, size) -> np.ndarray:
    mag = rng.uniform(0.5, 1.0, size=size)
    sign = rng.integers(0, 2, size=size) * 2 - 1
    return mag * sign


def _interval_probability_mc(cs, u, reps, seed) -> IntervalProbability:
    hits = 0
    block = 1 << 16
    for b0 in range(0, reps, block):
        m = min(block, reps - b0)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b0 // block]))
        g = sample_two_interval(rng, (m, len(cs)))
        x = g @ np.asarray(cs)
        hits += int(np.sum(np.abs(x) <= u))
    p = hits / reps
    se = math.sqrt(max(p * (1 - p), 1.0 / reps) / reps)
    return IntervalProbability(p, 4.0 * se, "monte-carlo")


def kolmogorov_distance(dist: LatticeDistribution, sigma: float, n: int) -> float:
    """sup_x |P(S_n <= x sigma sqrt(n)) - Phi(x)|, exact at the lattice jumps."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    scale = sigma * math.sqrt(n)
    cdf = np.cumsum(dist.probs)
    best = 0.0
    for i, v in enumerate(dist.support):
        phi = normal_cdf(v / scale)
        lo = cdf[i - 1] if i > 0 else 0.0
        best = max(best, abs(cdf[i] - phi), abs(lo - phi))
    return float(best)


def sample_partial_sums(model, n: int, reps: int, seed: int) -> np.ndarray:
    """reps independent stationary Monte Carlo samples of the n-step sum."""
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be >= 1")
    towers, levels = sample_trajectory_batch(model.system, seed, n, reps)
    idx = model.system.offsets[towers] + levels
    w = model.weight[idx]
    g = model.noise.sample(np.random.default_rng(np.random.SeedSequence([int(seed), 0x6e6f6973])), (reps, n))
    return (w * g).sum(axis=1)
