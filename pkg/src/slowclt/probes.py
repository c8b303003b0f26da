"""Named probes: one per inequality the constructions are required to satisfy.

Each probe returns a ProbeResult carrying the computed value, the required
bound, the comparison direction, the computation method, and an error bar;
pass means the margin beats the error bar in the required direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .construction import ProcessModel, Schedule, intersection_lower_bound
from .distributions import (
    IntervalProbability,
    LatticeDistribution,
    interval_probability,
    kolmogorov_distance,
    lattice_sum_distribution,
    normal_cdf,
    sample_partial_sums,
)
from .errors import EvenIndex, LatticeMismatch, VariantMismatch
from .towers import TowerSystem, sample_trajectory_batch

PHI0 = 1.0 / math.sqrt(2.0 * math.pi)  # standard normal density at 0


@dataclass(frozen=True)
class ProbeResult:
    name: str
    index: int  # k or n, -1 when not applicable
    value: float
    bound: float
    direction: str  # ">=" or "<="
    method: str  # "exact" | "exact-lower-bound" | "monte-carlo"
    error: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.direction == ">=":
            return self.value - self.bound > self.error
        return self.bound - self.value > self.error


@dataclass(frozen=True)
class MixingProfile:
    lags: tuple[int, ...]
    beta: tuple[float, ...]
    alpha_upper: tuple[float, ...]
    aperiodic: bool


def _rate_at(sched: Schedule, k: int) -> float:
    from .construction import RateSequence

    a = RateSequence.from_descriptor(sched.rate_descriptor)
    return a(sched.n[k])


def llt_probe_lattice(model: ProcessModel, sched: Schedule, k: int) -> ProbeResult:
    """mu(S_{n_k} = 0) >= a_{n_k}, with the closed-form intermediate bound."""
    if model.noise.kind != "lattice":
        raise VariantMismatch("lattice probe on a non-lattice model")
    n = sched.n[k]
    dist = lattice_sum_distribution(model, n)
    value = dist.prob_at(0)
    bound = _rate_at(sched, k)
    inter = intersection_lower_bound(sched, k)
    details = {"intersection_mass": inter}
    if sched.variant == "thm1":
        details["closed_form_bound"] = sched.d[k] * (1.0 - sched.rho[k])
    else:
        details["quarter_mass_bound"] = sched.p[k] / 4.0
    return ProbeResult(
        name="llt", index=k, value=value, bound=bound, direction=">=",
        method="exact", details=details,
    )


def clt_probe(model: ProcessModel, sched: Schedule, k: int,
              ratio: Optional[ProbeResult] = None) -> ProbeResult:
    """Kolmogorov distance at n_k against a_{n_k}/2 (lattice) or a_{n_k} (density)."""
    n = sched.n[k]
    a_k = _rate_at(sched, k)
    if sched.variant in ("thm1", "thm3"):
        dist = lattice_sum_distribution(model, n)
        value = kolmogorov_distance(dist, math.sqrt(model.sigma2), n)
        return ProbeResult(
            name="clt", index=k, value=value, bound=a_k / 2.0,
            direction=">=", method="exact",
        )
    # Density variant: certify the sup from below through the ratio probe,
    # sup >= (R/2 - phi(0)) * rho_k with R the certified interval ratio.
    if ratio is None:
        ratio = llt_probe_density(model, sched, k)
    r_lower = ratio.value - ratio.error
    value = (r_lower / 2.0 - PHI0) * sched.rho[k]
    return ProbeResult(
        name="clt", index=k, value=value, bound=a_k, direction=">=",
        method="exact-lower-bound",
        details={"ratio_lower": r_lower, "rho_k": sched.rho[k]},
    )


def llt_probe_density(
    model: ProcessModel,
    sched: Schedule,
    k: int,
    mc_reps: Optional[int] = None,
    seed: int = 0,
    b_target_error: float = 1e-6,
) -> ProbeResult:
    """(1/rho_k) mu(S_{n_k}/(sigma sqrt(n_k)) in [-rho_k, rho_k]) >= L, odd k.

    The certified value is the decomposition lower bound mu(G~_k) * b_{n_k}
    / rho_k: trajectories that stay inside tower k for the whole window
    contribute exactly the tower-mass fraction times the noise interval
    probability, by independence of the noise and tower factors.
    """
    if model.variant != "thm2":
        raise VariantMismatch("density probe needs the density variant")
    if k % 2 == 0:
        raise EvenIndex(f"density ratio probe is certified for odd k, got {k}")
    n, H, p_k, d_k, rho_k = sched.n[k], sched.H[k], sched.p[k], sched.d[k], sched.rho[k]
    b = interval_probability([1.0] * n, math.sqrt(n), target_error=b_target_error, seed=seed)
    g_frac = (H - n + 1) * p_k / H  # mu(G~_k), exact from tower geometry
    value = g_frac * b.lower / rho_k
    L = sched.constants["L"]
    details = {
        "b_n": b.value,
        "b_error": b.error,
        "b_method": b.method,
        "tilde_tower_mass": g_frac,
        "half_mass_ratio_bound": b.lower * p_k / (2.0 * d_k) * math.sqrt(
            sched.constants["sigma2_truncated"]
        ),
        "llt_reference_ratio": 2.0 * PHI0,
    }
    if mc_reps:
        sums = sample_partial_sums(model, n, mc_reps, seed)
        sigma = math.sqrt(sched.constants["sigma2_truncated"])
        hits = np.abs(sums / (sigma * math.sqrt(n))) <= rho_k
        est = float(np.mean(hits))
        se = math.sqrt(max(est * (1 - est), 1.0 / mc_reps) / mc_reps)
        details["mc_interval_probability"] = est
        details["mc_se"] = se
        details["mc_consistent"] = bool(est >= g_frac * b.lower - 4.0 * se)
    return ProbeResult(
        name="llt-ratio", index=k, value=value, bound=L, direction=">=",
        method="exact-lower-bound", details=details,
    )


def density_bound_probe(model: ProcessModel) -> ProbeResult:
    """Density of f bounded by L1 + L2 and integrating to 1."""
    from .construction import density_of_f

    dens = density_of_f(model)
    consts = model.schedule.constants
    cap = consts["L1"] + consts["L2"]
    return ProbeResult(
        name="density-bound", index=-1, value=dens.max_value(), bound=cap + 1e-12,
        direction="<=", method="exact",
        details={"integral": dens.integral()},
    )


def variance_probe(model: ProcessModel) -> ProbeResult:
    """Closed-form variance against the state-sum route, tolerance 1e-12."""
    pi = model.system.stationary_array()
    state_sum = float(np.dot(pi, model.weight**2)) * model.noise.variance
    sched = model.schedule
    if model.variant == "thm2":
        closed = sched.constants["sigma2_truncated"]
    else:
        # each inactive slab has exact mass d_k, so Var f = Var g * (1 - sum d_k)
        closed = model.noise.variance * (1.0 - sum(sched.d))
    return ProbeResult(
        name="variance", index=-1, value=abs(state_sum - closed), bound=1e-12,
        direction="<=", method="exact",
        details={"sigma2": state_sum, "closed_form": closed},
    )


# -- strong-MDS tests ------------------------------------------------------


def _enumerate_windows(model: ProcessModel, window: int):
    """Yield (trajectory tuple of state indices, probability), all paths."""
    sys = model.system
    pi = sys.stationary_array()
    stack = []

    def walk(tower, level, path, prob):
        path = path + (sys.offsets[tower] + level,)
        if len(path) == window:
            stack.append((path, prob))
            return
        if level < sys.heights[tower] - 1:
            walk(tower, level + 1, path, prob)
        else:
            for d in range(len(sys.towers)):
                p = sys.top_transition[tower, d]
                if p > 0.0:
                    walk(d, 0, path, prob * p)

    for l in range(len(sys.towers)):
        for j in range(int(sys.heights[l])):
            walk(l, j, (), pi[sys.offsets[l] + j])
    return stack


def mds_conditional_mean_test(
    model: ProcessModel,
    window: int,
    reps: int = 0,
    seed: int = 0,
    filter_coeff: float = 0.0,
) -> ProbeResult:
    """Conditional mean of the middle coordinate given everything else.

    Exact path (small systems, window <= 6): enumerate (trajectory, noise
    values at the other positions) cylinders and compute the conditional
    mean of f at the probed position; all must vanish.  Monte Carlo path:
    bin samples by the same conditioning data and demand every bin mean
    stay within 4 standard errors of 0.  filter_coeff != 0 replaces f_j by
    f_j + filter_coeff * f_{j-1}, a deliberately non-MDS control.
    """
    j = window // 2
    if reps <= 0:
        value = _mds_exact(model, window, j, filter_coeff)
        return ProbeResult(
            name="mds", index=window, value=value, bound=1e-12,
            direction="<=", method="exact",
        )
    value, worst_se, nbins = _mds_mc(model, window, j, reps, seed, filter_coeff)
    return ProbeResult(
        name="mds", index=window, value=value, bound=4.0,
        direction="<=", method="monte-carlo", error=0.0,
        details={"bins": nbins, "statistic": "max |bin mean| / bin se"},
    )


def _noise_support(model):
    if model.noise.kind == "lattice":
        a = model.noise.a
        vals = [-1.0, 0.0, 1.0]
        probs = [a / 2.0, 1.0 - a, a / 2.0]
        return [(v, p) for v, p in zip(vals, probs) if p > 0.0]
    # two-interval noise: conditioning by sign; the conditional mean of f at
    # the probed position only needs E g = 0, represented by the two signed
    # conditional means +-3/4.
    return [(-0.75, 0.5), (0.75, 0.5)]


def _mds_exact(model, window, j, filter_coeff) -> float:
    support = _noise_support(model)
    paths = _enumerate_windows(model, window)
    bins: dict[tuple, list[float]] = {}
    import itertools

    for path, pprob in paths:
        if pprob == 0.0:
            continue
        others = [i for i in range(window) if i != j]
        for gs in itertools.product(support, repeat=len(others)):
            key_prob = pprob * math.prod(p for _, p in gs)
            gvals = {}
            for i, (v, _) in zip(others, gs):
                gvals[i] = v
            key = (path, tuple(gvals[i] for i in others))
            num, den = bins.setdefault(key, [0.0, 0.0])
            for gj, pj in support:
                gvals[j] = gj
                f_j = model.weight[path[j]] * gj
                if filter_coeff and j >= 1:
                    f_j += filter_coeff * model.weight[path[j - 1]] * gvals[j - 1]
                num += key_prob * pj * f_j
                den += key_prob * pj
            bins[key] = [num, den]
    worst = 0.0
    for num, den in bins.values():
        if den > 0.0:
            worst = max(worst, abs(num / den))
    return worst


def _mds_mc(model, window, j, reps, seed, filter_coeff):
    sys = model.system
    towers, levels = sample_trajectory_batch(sys, seed, window, reps)
    idx = sys.offsets[towers] + levels
    w = model.weight[idx]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6d6473]))
    g = model.noise.sample(rng, (reps, window))
    f = w[:, j] * g[:, j]
    if filter_coeff and j >= 1:
        f = f + filter_coeff * w[:, j - 1] * g[:, j - 1]
    # conditioning bin: tower sequence + signs of the other noise coordinates
    others = [i for i in range(window) if i != j]
    sign = np.sign(g[:, others]).astype(np.int8)
    key_mat = np.concatenate([towers.astype(np.int64), sign.astype(np.int64) + 1], axis=1)
    _, inverse = np.unique(key_mat, axis=0, return_inverse=True)
    nbins = int(inverse.max()) + 1
    worst = 0.0
    used = 0
    sums = np.bincount(inverse, weights=f, minlength=nbins)
    sqs = np.bincount(inverse, weights=f * f, minlength=nbins)
    counts = np.bincount(inverse, minlength=nbins)
    for b in range(nbins):
        c = counts[b]
        if c < 30:
            continue
        mean = sums[b] / c
        var = max(sqs[b] / c - mean * mean, 0.0)
        se = math.sqrt(var / c) if var > 0 else 0.0
        if se == 0.0:
            continue
        used += 1
        worst = max(worst, abs(mean) / se)
    return worst, 0.0, used


def conditional_variance_floor(model: ProcessModel, depth: int) -> ProbeResult:
    """min over positive-probability histories of E(f^2 | history).

    Every state is reachable from a positive-measure start, so for any
    depth >= 1 the minimum equals the minimum over current states of
    Var(g) * E(weight^2 at the next state | current state).  For the
    constructed models the floor is exactly 0 - from deep inside an
    inactive slab the next state is again inactive - which is the
    mechanism that defeats the local limit theorem.
    """
    if model.noise.kind != "lattice":
        raise VariantMismatch("variance-floor probe is for lattice models")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    sys = model.system
    w2 = model.weight**2
    worst = math.inf
    for l in range(len(sys.towers)):
        a0, b0 = sys.offsets[l], sys.offsets[l + 1]
        nxt = np.empty(b0 - a0)
        nxt[:-1] = w2[a0 + 1 : b0]
        nxt[-1] = float(np.dot(sys.top_transition[l], w2[sys.offsets[:-1]]))
        worst = min(worst, float(nxt.min()))
    value = model.noise.variance * worst
    return ProbeResult(
        name="variance-floor", index=depth, value=value, bound=1e-15,
        direction="<=", method="exact",
        details={"is_zero": value == 0.0},
    )


# -- mixing ---------------------------------------------------------------


class _ChainAnalyzer:
    """Exact beta-mixing of the tower chain via its renewal structure.

    From (tower l, level j) the chain is deterministic for H_l - 1 - j
    steps; afterwards its law equals the post-landing flow started from
    tower l's top row.  Evolving each distinct flow once gives every row of
    every matrix power.
    """

    def __init__(self, sys: TowerSystem):
        self.sys = sys
        self.pi = sys.stationary_array()
        rows = [tuple(r) for r in sys.top_transition]
        self.row_of_tower = []
        self.flows: list[np.ndarray] = []  # current flow distribution per distinct row
        self.tv: list[list[float]] = []  # tv[r][m] = TV(flow after m steps, pi)
        seen: dict[tuple, int] = {}
        for l, r in enumerate(rows):
            if r not in seen:
                seen[r] = len(self.flows)
                v = np.zeros(sys.n_states)
                v[sys.offsets[:-1]] = np.asarray(r)
                self.flows.append(v)
                self.tv.append([self._tv(v)])
            self.row_of_tower.append(seen[r])
        self.steps = 0

    def _tv(self, v: np.ndarray) -> float:
        return 0.5 * float(np.abs(v - self.pi).sum())

    def extend(self, lag: int):
        """Advance the landing flows so tv is known for indices < lag."""
        while self.steps < lag:
            for r, v in enumerate(self.flows):
                v2 = self.sys.push_forward(v)
                self.flows[r] = v2
                self.tv[r].append(self._tv(v2))
            self.steps += 1

    def beta(self, lag: int) -> float:
        """beta(n) = sum_s pi(s) TV(P^n(s, .), pi), exact."""
        if lag == 0:
            return 0.5 * float(np.sum(np.abs(1.0 - self.pi) * self.pi)
                               + np.dot(self.pi, 1.0 - self.pi))
        self.extend(lag)
        sys = self.sys
        total = 0.0
        for l in range(len(sys.towers)):
            h = int(sys.heights[l])
            lm = sys.level_mass(l)
            tvr = self.tv[self.row_of_tower[l]]
            # no landing yet: state (l, j) with j + lag <= h - 1
            j_det = h - lag
            if j_det > 0:
                dest = slice(sys.offsets[l] + lag, sys.offsets[l + 1])
                total += lm * float(np.sum(1.0 - self.pi[dest]))
            # landed: flow age m = lag - (h - j), for j > h - lag
            for j in range(max(0, j_det), h):
                total += lm * tvr[lag - (h - j)]
        return total


def mixing_profile(sys: TowerSystem, lags: Sequence[int]) -> MixingProfile:
    """Exact beta(n) of the tower chain; alpha(n) <= beta(n) is reported."""
    chain = _ChainAnalyzer(sys)
    betas = tuple(chain.beta(int(n)) for n in lags)
    return MixingProfile(
        lags=tuple(int(n) for n in lags),
        beta=betas,
        alpha_upper=betas,
        aperiodic=sys.is_aperiodic(),
    )


def find_mixing_lag(
    sys: TowerSystem, eps: float, chain: Optional[_ChainAnalyzer] = None,
    lag_cap: int = 1 << 21, lag_floor: int = 1,
) -> Optional[int]:
    """Smallest lag >= lag_floor with beta(lag) <= eps, by doubling + bisection."""
    chain = chain or _ChainAnalyzer(sys)
    lo = lag_floor
    if chain.beta(lo) <= eps:
        return lo
    hi = lo
    while chain.beta(hi) > eps:
        hi *= 2
        if hi > lag_cap:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if chain.beta(mid) <= eps:
            hi = mid
        else:
            lo = mid
    return hi


def mixing_probe(sys: TowerSystem, sched: Schedule, lag_cap: int = 1 << 21) -> ProbeResult:
    """For each scheduled k: a lag m_k with beta(m_k) <= eps_k (hence <= 7 eps_k)."""
    chain = _ChainAnalyzer(sys)
    worst_ratio = 0.0
    lags, betas = [], []
    floor = 1
    for k, eps in enumerate(sched.eps):
        m = find_mixing_lag(sys, eps, chain=chain, lag_cap=lag_cap, lag_floor=floor)
        if m is None:
            return ProbeResult(
                name="mixing", index=-1, value=math.inf, bound=1.0, direction="<=",
                method="exact", details={"failed_at_k": k, "lag_cap": lag_cap},
            )
        b = chain.beta(m)
        lags.append(m)
        betas.append(b)
        worst_ratio = max(worst_ratio, b / (7.0 * eps))
        floor = m + 1
    return ProbeResult(
        name="mixing", index=-1, value=worst_ratio, bound=1.0, direction="<=",
        method="exact",
        details={
            "m_lags": lags,
            "beta_at_m": betas,
            "seven_eps": [7.0 * e for e in sched.eps],
            "aperiodic": sys.is_aperiodic(),
        },
    )


# -- i.i.d. baseline --------------------------------------------------------


def gnedenko_baseline(step_law: LatticeDistribution, b: float, h: float, n: int) -> float:
    """sup_N |(sigma sqrt(n)/h) P_n(N) - phi((nb + Nh - nm)/(sigma sqrt(n)))|.

    Exact n-fold convolution of an integer-lattice step law declared to live
    on {b + N h}; the i.i.d. contrast for the lattice point-probability
    limit theorem.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    var = step_law.variance()
    if var <= 0:
        raise LatticeMismatch("step law must have positive variance")
    pts = step_law.support[step_law.probs > 1e-300]
    ratios = (pts - b) / h
    if np.max(np.abs(ratios - np.round(ratios))) > 1e-9:
        raise LatticeMismatch(f"support not contained in {{{b} + N*{h}}}")
    m = step_law.mean()
    sigma = math.sqrt(var)
    probs = step_law.probs
    acc = np.array([1.0])
    off = 0
    for _ in range(n):
        acc = np.convolve(acc, probs)
        off += step_law.offset
    scale = sigma * math.sqrt(n)
    worst = 0.0
    support = off + np.arange(len(acc))
    # every lattice point b*n + N*h inside the support range
    lo = math.floor((support[0] - n * b) / h)
    hi = math.ceil((support[-1] - n * b) / h)
    for N in range(lo, hi + 1):
        s = n * b + N * h
        i = int(round(s)) - off
        p = acc[i] if 0 <= i < len(acc) else 0.0
        z = (s - n * m) / scale
        phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
        worst = max(worst, abs(scale / h * p - phi))
    return worst
