"""Finite Rokhlin-tower systems.

A system is a finite family of towers; inside a tower the dynamics climbs
levels deterministically, and from a top level it jumps to the base of a
destination tower chosen by that tower's transition row.  The default row
sends the trajectory to tower ``l`` with probability proportional to the
base-level measure ``mass_l / height_l``, which makes the level-uniform
measure stationary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import InvalidState, MassSumError, PeriodicityError, WindowTooLarge

MASS_TOL = 1e-9
CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class TowerSpec:
    """One tower: number of levels and its total measure."""

    height: int
    mass: float

    def __post_init__(self):
        if self.height < 1:
            raise ValueError(f"tower height must be >= 1, got {self.height}")
        if not (0.0 < self.mass <= 1.0):
            raise ValueError(f"tower mass must lie in (0, 1], got {self.mass}")


@dataclass(frozen=True)
class TowerState:
    tower: int
    level: int


@dataclass(frozen=True)
class OccupancyDistribution:
    """Exact law of the number of active steps in a length-n window."""

    window: int
    probs: np.ndarray  # index m in [0, window]

    def __post_init__(self):
        assert len(self.probs) == self.window + 1
        assert abs(float(np.sum(self.probs)) - 1.0) < CONSISTENCY_TOL


class TowerSystem:
    """Immutable tower family with a top-to-base transition law."""

    def __init__(self, towers: Sequence[TowerSpec], top_transition: np.ndarray):
        self.towers = tuple(towers)
        self.top_transition = np.asarray(top_transition, dtype=float)
        k = len(self.towers)
        if self.top_transition.shape != (k, k):
            raise ValueError("top_transition must be a KxK matrix")
        total = sum(t.mass for t in self.towers)
        if abs(total - 1.0) > MASS_TOL:
            raise MassSumError(f"tower masses sum to {total!r}, not 1")
        rowsums = self.top_transition.sum(axis=1)
        if np.max(np.abs(rowsums - 1.0)) > MASS_TOL:
            raise MassSumError("top transition rows must sum to 1")
        # Renormalize to the internal 1e-12 consistency level.
        self.top_transition = self.top_transition / rowsums[:, None]
        self._masses = np.array([t.mass for t in self.towers]) / total
        self.heights = np.array([t.height for t in self.towers], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(self.heights)])
        self.n_states = int(self.offsets[-1])

    # -- state indexing -------------------------------------------------

    def state_index(self, s: TowerState) -> int:
        self._check_state(s)
        return int(self.offsets[s.tower]) + s.level

    def state_of_index(self, i: int) -> TowerState:
        tower = int(np.searchsorted(self.offsets, i, side="right")) - 1
        return TowerState(tower, int(i - self.offsets[tower]))

    def states(self) -> Iterable[TowerState]:
        for l, t in enumerate(self.towers):
            for j in range(t.height):
                yield TowerState(l, j)

    def _check_state(self, s: TowerState):
        if not (0 <= s.tower < len(self.towers)):
            raise InvalidState(f"tower index {s.tower} out of range")
        if not (0 <= s.level < self.towers[s.tower].height):
            raise InvalidState(
                f"level {s.level} out of range for tower {s.tower} "
                f"(height {self.towers[s.tower].height})"
            )

    # -- measure and dynamics -------------------------------------------

    def stationary_array(self) -> np.ndarray:
        """Stationary probability of every state, flat-indexed."""
        out = np.empty(self.n_states)
        for l, t in enumerate(self.towers):
            out[self.offsets[l] : self.offsets[l + 1]] = self._masses[l] / t.height
        return out

    def level_mass(self, tower: int) -> float:
        return self._masses[tower] / self.towers[tower].height

    def gcd_heights(self) -> int:
        return math.gcd(*[t.height for t in self.towers])

    def is_aperiodic(self) -> bool:
        return self.gcd_heights() == 1

    def push_forward(self, dist: np.ndarray) -> np.ndarray:
        """One step of the dynamics applied to a flat state distribution."""
        out = np.zeros_like(dist)
        top_mass = np.empty(len(self.towers))
        for l in range(len(self.towers)):
            a, b = self.offsets[l], self.offsets[l + 1]
            out[a + 1 : b] = dist[a : b - 1]
            top_mass[l] = dist[b - 1]
        landing = top_mass @ self.top_transition
        out[self.offsets[:-1]] += landing
        return out


def default_top_transition(specs: Sequence[TowerSpec]) -> np.ndarray:
    """Destination chosen with probability proportional to base-level mass."""
    base = np.array([s.mass / s.height for s in specs])
    row = base / base.sum()
    return np.tile(row, (len(specs), 1))


def build_tower_system(
    specs: Sequence[TowerSpec], require_aperiodic: bool = False
) -> TowerSystem:
    total = sum(s.mass for s in specs)
    if abs(total - 1.0) > MASS_TOL:
        raise MassSumError(f"tower masses sum to {total!r}, not 1")
    if require_aperiodic:
        g = math.gcd(*[s.height for s in specs])
        if g > 1:
            raise PeriodicityError(f"gcd of tower heights is {g}, need 1")
    return TowerSystem(specs, default_top_transition(specs))


def stationary_measure(sys: TowerSystem) -> dict[TowerState, float]:
    pi = sys.stationary_array()
    return {s: float(pi[sys.state_index(s)]) for s in sys.states()}


def step_distribution(sys: TowerSystem, s: TowerState) -> dict[TowerState, float]:
    sys._check_state(s)
    h = sys.towers[s.tower].height
    if s.level < h - 1:
        return {TowerState(s.tower, s.level + 1): 1.0}
    row = sys.top_transition[s.tower]
    return {TowerState(d, 0): float(p) for d, p in enumerate(row) if p > 0.0}


def sample_trajectory(
    sys: TowerSystem,
    seed: int,
    n: int,
    start: Optional[TowerState] = None,
) -> list[TowerState]:
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x70776572]))
    if start is None:
        pi = sys.stationary_array()
        idx = int(rng.choice(sys.n_states, p=pi))
        state = sys.state_of_index(idx)
    else:
        sys._check_state(start)
        state = start
    out = []
    for _ in range(n):
        out.append(state)
        h = sys.towers[state.tower].height
        if state.level < h - 1:
            state = TowerState(state.tower, state.level + 1)
        else:
            d = int(rng.choice(len(sys.towers), p=sys.top_transition[state.tower]))
            state = TowerState(d, 0)
    return out


def sample_trajectory_batch(
    sys: TowerSystem, seed: int, n: int, reps: int, block: int = 1 << 14
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized stationary trajectories: (reps, n) arrays of tower and level.

    Deterministic per seed; reps are split into fixed-size blocks with
    independent substreams, so results do not depend on worker count.
    """
    towers = np.empty((reps, n), dtype=np.int32)
    levels = np.empty((reps, n), dtype=np.int32)
    pi = sys.stationary_array()
    heights = sys.heights
    for b0 in range(0, reps, block):
        b1 = min(b0 + block, reps)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b0 // block]))
        m = b1 - b0
        idx = rng.choice(sys.n_states, p=pi, size=m)
        tw = (np.searchsorted(sys.offsets, idx, side="right") - 1).astype(np.int32)
        lv = (idx - sys.offsets[tw]).astype(np.int32)
        for t in range(n):
            towers[b0:b1, t] = tw
            levels[b0:b1, t] = lv
            if t == n - 1:
                break
            at_top = lv == heights[tw] - 1
            lv = lv + 1
            if np.any(at_top):
                rows = sys.top_transition[tw[at_top]]
                u = rng.random(int(at_top.sum()))
                dest = (rows.cumsum(axis=1) < u[:, None]).sum(axis=1)
                tw = tw.copy()
                tw[at_top] = dest
                lv[at_top] = 0
        # rep loop done
    return towers, levels


def _active_array(sys: TowerSystem, active) -> np.ndarray:
    if isinstance(active, np.ndarray):
        if active.shape != (sys.n_states,):
            raise ValueError("active array must have one entry per state")
        return active.astype(bool)
    return np.array([bool(active(s)) for s in sys.states()])


def occupancy_distribution(
    sys: TowerSystem,
    active: Callable[[TowerState], bool] | np.ndarray,
    n: int,
    op_budget: int = 10**9,
) -> OccupancyDistribution:
    """Exact law of m = #{0 <= i < n : state_i active}, stationary start."""
    if n < 1:
        raise ValueError("n must be >= 1")
    act = _active_array(sys, active)
    if np.all(sys.heights >= n):
        probs = _occupancy_tall(sys, act, n)
    else:
        probs = _occupancy_dp(sys, act, n, op_budget)
    probs = np.maximum(probs, 0.0)
    probs /= probs.sum()
    return OccupancyDistribution(window=n, probs=probs)


def _occupancy_tall(sys: TowerSystem, act: np.ndarray, n: int) -> np.ndarray:
    # All heights >= n: a window crosses at most one tower top, so the count
    # is determined by (start state, at most one destination choice).
    occ = np.zeros(n + 1)
    k = len(sys.towers)
    prefixes = []
    for l in range(k):
        a, b = sys.offsets[l], sys.offsets[l + 1]
        prefixes.append(np.concatenate([[0], np.cumsum(act[a:b].astype(np.int64))]))
    for l in range(k):
        h = int(sys.heights[l])
        w = sys.level_mass(l)
        pref = prefixes[l]
        # starts with no crossing: j + n <= h
        j_max = h - n
        if j_max >= 0:
            counts = pref[n : h + 1] - pref[: j_max + 1]
            np.add.at(occ, counts, np.full(j_max + 1, w))
        # starts that cross: j in (h - n, h)
        for j in range(max(0, h - n + 1), h):
            c1 = int(pref[h] - pref[j])
            r = n - (h - j)  # steps spent in the destination tower
            for d in range(k):
                p = sys.top_transition[l, d]
                if p <= 0.0:
                    continue
                c2 = int(prefixes[d][r])
                occ[c1 + c2] += w * p
    return occ


def _occupancy_dp(sys: TowerSystem, act: np.ndarray, n: int, op_budget: int) -> np.ndarray:
    cost = (n - 1) * sys.n_states * (n + 1)
    if cost > op_budget:
        raise WindowTooLarge(
            f"occupancy DP needs ~{cost:.2e} ops, budget is {op_budget:.2e}"
        )
    # dp[s, c] = P(state_i = s, count over steps 0..i equals c)
    dp = np.zeros((sys.n_states, n + 1))
    pi = sys.stationary_array()
    dp[np.arange(sys.n_states), act.astype(int)] = pi
    for _ in range(n - 1):
        new = np.zeros_like(dp)
        top_rows = np.empty((len(sys.towers), n + 1))
        for l in range(len(sys.towers)):
            a, b = sys.offsets[l], sys.offsets[l + 1]
            new[a + 1 : b] = dp[a : b - 1]
            top_rows[l] = dp[b - 1]
        landing = sys.top_transition.T @ top_rows
        new[sys.offsets[:-1]] += landing
        # entering a state adds its own activity to the count
        shifted = np.zeros_like(new)
        shifted[act, 1:] = new[act, :-1]
        shifted[~act] = new[~act]
        dp = shifted
    return dp.sum(axis=0)


def occupancy_by_path_enumeration(
    sys: TowerSystem, active, n: int
) -> np.ndarray:
    """Brute-force oracle: enumerate every (start, branch-sequence) path."""
    act = _active_array(sys, active)
    occ = np.zeros(n + 1)
    pi = sys.stationary_array()

    def walk(tower: int, level: int, step: int, count: int, prob: float):
        count += int(act[sys.offsets[tower] + level])
        step += 1
        if step == n:
            occ[count] += prob
            return
        if level < sys.heights[tower] - 1:
            walk(tower, level + 1, step, count, prob)
        else:
            for d in range(len(sys.towers)):
                p = sys.top_transition[tower, d]
                if p > 0.0:
                    walk(d, 0, step, count, prob * p)

    for l in range(len(sys.towers)):
        for j in range(int(sys.heights[l])):
            walk(l, j, 0, 0, pi[sys.offsets[l] + j])
    return occ
