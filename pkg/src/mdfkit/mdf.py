"""Monte Carlo measurement of deviation frequencies and verdicts against bounds.

The overlap count O = #{n in [n0, N_eval] : d(X_n, X) > eps_n} is measured on
simulated paths, with the simulator's limit proxy standing in for X.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Optional, Sequence as Seq

import numpy as np

from .bounds import BoundReport, Quantity, azuma_residual
from .sequences import PartialSum, Sequence, partial_sum_table
from .simulate import ANALYTIC, PathBatch, PathRecord, ProcessSpec, iter_blocks

DEFAULT_TAU = 2.5
CONFIDENCE = 0.99
Z_ONE_SIDED = NormalDist().inv_cdf(CONFIDENCE)
K_MAX_CAP = 200
MIN_EXCEEDING = 5


class MarginError(ValueError):
    """The evaluation index is too close to the horizon for a horizon-value proxy."""


# --- overlap counts ---------------------------------------------------------


@dataclass(frozen=True)
class OverlapSample:
    O: int
    exceed_indices: tuple
    truncated_at: int
    eps_id: str


def check_margin(horizon: int, proxy_method: str, N_eval: int, tau: float = DEFAULT_TAU) -> None:
    if N_eval > horizon:
        raise MarginError(f"N_eval={N_eval} exceeds the horizon {horizon}")
    if proxy_method != ANALYTIC and tau * N_eval > horizon:
        raise MarginError(f"a {proxy_method} proxy with N_eval={N_eval} needs horizon >= {math.ceil(tau * N_eval)}, "
                          f"got {horizon}")


def exceedance_matrix(batch: PathBatch, eps: Sequence, n0: int, N_eval: int,
                      tau: float = DEFAULT_TAU) -> np.ndarray:
    """Boolean (paths, N_eval - n0 + 1) array of d(X_n, proxy) > eps_n."""
    if n0 > N_eval:
        raise ValueError(f"n0={n0} exceeds N_eval={N_eval}")
    check_margin(batch.horizon, batch.proxy_method, N_eval, tau)
    tol = eps(np.arange(n0, N_eval + 1, dtype=np.int64))
    return batch.distances(n0, N_eval) > tol[None, :]


def overlap_count(path: PathRecord, eps: Sequence, n0: int, N_eval: int, tau: float = DEFAULT_TAU) -> OverlapSample:
    """Count and list the indices in [n0, N_eval] where the path is farther than eps_n from its proxy."""
    values = np.asarray(path.values, dtype=float)
    single = PathBatch(path.process_id, values[None, ...], path.index0, np.asarray(path.limit_proxy, dtype=float)[None, ...],
                       path.proxy_method, np.array([path.truncated]))
    row = exceedance_matrix(single, eps, n0, N_eval, tau)[0]
    idx = tuple(int(i) + n0 for i in np.nonzero(row)[0])
    return OverlapSample(len(idx), idx, N_eval, eps.label)


# --- confidence intervals ---------------------------------------------------


def wilson_upper(successes, n: int, confidence: float = CONFIDENCE):
    """One-sided Wilson score upper limit for a binomial proportion (vectorized)."""
    z = NormalDist().inv_cdf(confidence)
    p = np.asarray(successes, dtype=float) / n
    centre = p + z * z / (2 * n)
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return np.minimum((centre + half) / (1 + z * z / n), 1.0)


def wilson_lower(successes, n: int, confidence: float = CONFIDENCE):
    z = NormalDist().inv_cdf(confidence)
    p = np.asarray(successes, dtype=float) / n
    centre = p + z * z / (2 * n)
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return np.maximum((centre - half) / (1 + z * z / n), 0.0)


def bootstrap_mean_interval(x: np.ndarray, resamples: int, seed: int,
                            confidence: float = CONFIDENCE) -> tuple[float, float]:
    """Percentile bootstrap (lower, upper) one-sided limits for the mean.

    Resampling goes through the histogram of distinct values, which is exact
    and cheap because S_a(O) takes few distinct values.
    """
    x = np.asarray(x, dtype=float)
    values, counts = np.unique(x, return_counts=True)
    if values.size == 1:
        return float(values[0]), float(values[0])
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    n = x.size
    means = rng.multinomial(n, counts / n, size=resamples) @ values / n
    return float(np.quantile(means, 1 - confidence)), float(np.quantile(means, confidence))


# --- Monte Carlo overlap ----------------------------------------------------


@dataclass
class MCOverlapResult:
    """Per-path overlap counts and their summaries.

    tail_hat[k], ci_upper[k], ci_lower[k] are indexed by k = 0..k_max.
    mean_ci_upper is the bootstrap limit; mean_hoeffding_upper uses the largest
    observed S_a(O) as the range and is only a heuristic.
    """

    n_paths: int
    completed: int
    O: np.ndarray
    S: np.ndarray
    S_table: np.ndarray
    E_hat: float
    mean_ci_lower: float
    mean_ci_upper: float
    mean_hoeffding_upper: float
    ks: np.ndarray
    tail_hat: np.ndarray
    ci_upper: np.ndarray
    ci_lower: np.ndarray
    proxy_slack: float
    truncated_paths: int
    runtime: float
    partial: bool = False
    notes: dict = field(default_factory=dict)
    proxies: Optional[np.ndarray] = None

    @property
    def k_max(self) -> int:
        return int(self.ks[-1])

    def markov_violations(self, rel_slack: float = 1e-12) -> list[int]:
        """k >= 1 where tail_hat(k) > E_hat / S_a(k) beyond rounding (should be empty)."""
        bad = []
        for k in self.ks[1:]:
            s_k = self.S_table[k]
            if s_k > 0 and self.tail_hat[k] > self.E_hat / s_k * (1 + rel_slack) + rel_slack:
                bad.append(int(k))
        return bad


def tail_curve(O: np.ndarray, cap: int = K_MAX_CAP, min_exceeding: int = MIN_EXCEEDING):
    """(ks, counts) for k = 0..k_max, k_max the smallest k with fewer than min_exceeding paths at O >= k."""
    hist = np.bincount(O, minlength=cap + 2)
    at_least = np.cumsum(hist[::-1])[::-1]  # at_least[k] = #{O >= k}
    below = np.nonzero(at_least[: cap + 1] < min_exceeding)[0]
    k_max = int(below[0]) if below.size else cap
    return np.arange(k_max + 1), at_least[: k_max + 1]


def mc_overlap(spec: ProcessSpec, eps: Sequence, a: Sequence, n0: int, N_eval: int, n_paths: int,
               master_seed: int, horizon: Optional[int] = None, *, workers: int = 1, tau: float = DEFAULT_TAU,
               proxy_slack: float = 0.0, resamples: int = 1000, time_budget: Optional[float] = None,
               exclude_truncated: bool = True) -> MCOverlapResult:
    """Simulate, count exceedances per path and summarize E[S_a(O)] and P(O >= k)."""
    if n_paths < 100:
        raise ValueError("mc_overlap needs at least 100 paths")
    horizon = math.ceil(tau * N_eval) if horizon is None else horizon
    # one entry past the largest possible O, since k_max can reach it
    table = partial_sum_table(PartialSum(a, n0), N_eval - n0 + 2)
    start = time.perf_counter()
    counts, proxies, trunc = [], [], 0
    completed = 0
    partial = False
    for batch in iter_blocks(spec, n_paths, horizon, master_seed, workers):
        O = exceedance_matrix(batch, eps, n0, N_eval, tau).sum(axis=1)
        keep = ~batch.truncated if exclude_truncated else np.ones(batch.n_paths, dtype=bool)
        trunc += int(batch.truncated.sum())
        counts.append(O[keep])
        proxies.append(np.asarray(batch.proxy)[keep])
        completed += batch.n_paths
        if time_budget is not None and time.perf_counter() - start > time_budget and completed < n_paths:
            partial = True
            break
    proxies = np.concatenate(proxies)
    res = summarize_overlaps(np.concatenate(counts), table, master_seed, resamples=resamples)
    res.n_paths, res.completed, res.partial = n_paths, completed, partial
    res.proxy_slack, res.truncated_paths, res.proxies = proxy_slack, trunc, proxies
    res.runtime = time.perf_counter() - start
    return res


def summarize_overlaps(O, S_table: np.ndarray, seed: int = 0, *, resamples: int = 1000) -> MCOverlapResult:
    """Mean of S_a(O) with its intervals and the tail curve for overlap counts computed elsewhere.

    ``S_table[k]`` must hold S_a(k) for every k up to max(O) + 1.
    """
    start = time.perf_counter()
    O = np.asarray(O).astype(np.int64)
    n = O.size
    if int(O.max(initial=0)) + 1 >= S_table.size:
        raise ValueError("S_table is too short for the observed overlap counts")
    S = S_table[O]
    E_hat = float(S.mean())
    lo, hi = bootstrap_mean_interval(S, resamples, seed)
    hoeff = E_hat + float(S.max()) * math.sqrt(math.log(1.0 / (1.0 - CONFIDENCE)) / (2.0 * n))
    ks, at_least = tail_curve(O)
    return MCOverlapResult(n, n, O, S, S_table, E_hat, lo, hi, hoeff, ks, at_least / n,
                           wilson_upper(at_least, n), wilson_lower(at_least, n), 0.0, 0,
                           time.perf_counter() - start)


def azuma_proxy_slack(c_seq: Sequence, eps_at_eval: float, N_eval: int) -> float:
    """Two-sided Azuma closure bound on a fluctuation beyond N_eval larger than eps/2."""
    r = float(azuma_residual(c_seq)(N_eval))
    if r == 0.0:
        return 0.0
    return min(1.0, 2.0 * math.exp(-(eps_at_eval / 2.0) ** 2 / (2.0 * r)))


# --- Ky Fan -----------------------------------------------------------------


def kyfan_empirical(samples) -> float:
    """inf{eps >= 0 : (#samples > eps)/n <= eps} for the empirical distribution of distances."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise ValueError("kyfan_empirical needs at least 100 samples")
    n = x.size
    grid = np.unique(np.concatenate([[0.0], x[x >= 0]]))
    above = n - np.searchsorted(np.sort(x), grid, side="right")  # #samples > grid value
    cand = np.maximum(grid, above / n)
    nxt = np.append(grid[1:], np.inf)
    ok = cand < nxt
    return float(cand[ok].min())


# --- verdicts ---------------------------------------------------------------


PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass(frozen=True)
class VerificationVerdict:
    bound: BoundReport
    empirical: float
    ci_upper: float
    ci_lower: float
    status: str
    n_paths: int
    runtime: float = 0.0
    slack: float = 0.0


def verify(bound: BoundReport, empirical: float, ci_upper: float, ci_lower: Optional[float] = None, n_paths: int = 0,
           *, quantity: Optional[Quantity] = None, slack: float = 0.0, width_fraction: float = 1.0,
           runtime: float = 0.0) -> VerificationVerdict:
    """pass when the upper CI is below the bound; fail only when the lower CI clears bound + slack."""
    if quantity is not None and Quantity(quantity) != bound.quantity:
        raise ValueError(f"empirical quantity {Quantity(quantity).value!r} does not match bound {bound.quantity.value!r}")
    ci_lower = empirical if ci_lower is None else ci_lower
    if not bound.valid or not math.isfinite(bound.value):
        status = INCONCLUSIVE
    elif ci_upper <= bound.value:
        status = PASS if ci_upper - ci_lower <= width_fraction * bound.value else INCONCLUSIVE
    elif ci_lower > bound.value + slack:
        status = FAIL
    else:
        status = INCONCLUSIVE
    return VerificationVerdict(bound, empirical, ci_upper, ci_lower, status, n_paths, runtime, slack)


def verify_tails(result: MCOverlapResult, bound_at: Callable[[int], BoundReport],
                 width_fraction: float = 1.0) -> list[VerificationVerdict]:
    """One verdict per reported k >= 1."""
    out = []
    for k in result.ks[1:]:
        out.append(verify(bound_at(int(k)), float(result.tail_hat[k]), float(result.ci_upper[k]),
                          float(result.ci_lower[k]), int(result.O.size), quantity=Quantity.TAIL,
                          slack=result.proxy_slack, width_fraction=width_fraction, runtime=result.runtime))
    return out


def verify_mean(result: MCOverlapResult, bound: BoundReport, width_fraction: float = 1.0) -> VerificationVerdict:
    return verify(bound, result.E_hat, result.mean_ci_upper, result.mean_ci_lower, int(result.O.size),
                  quantity=Quantity.MOMENT_SA, slack=0.0, width_fraction=width_fraction, runtime=result.runtime)


# --- model refutation -------------------------------------------------------


@dataclass(frozen=True)
class RefutationResult:
    k_star: int
    U_N: int
    decision: str
    bound_at_k_star: float


def refutation_level(k: int, C: float, s: float, n0: int, eps: float, p: float) -> float:
    """2 e^{-pk} sqrt(1 + b^{n0-1} / (1 - b^{1-2p})) with b = exp(-s^2 eps^2 / (C+1)^2)."""
    b = math.exp(-(s * eps) ** 2 / (C + 1.0) ** 2)
    return 2.0 * math.exp(-p * k) * math.sqrt(1.0 + b ** (n0 - 1) / -math.expm1((1.0 - 2.0 * p) * math.log(b)))


def refutation_k_star(C: float, s: float, n0: int, eps: float, p: float, alpha: float) -> int:
    """Smallest k >= 0 with refutation_level(k) <= alpha (the level is strictly decreasing in k)."""
    p_max = (s * eps) ** 2 / (2.0 * (C + 1.0) ** 2)
    if not (0 < p <= p_max):
        raise ValueError(f"p must lie in (0, s^2 eps^2 / (2 (C+1)^2)] = (0, {p_max!r}]")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    level = lambda k: refutation_level(k, C, s, n0, eps, p)  # noqa: E731
    if level(0) <= alpha:
        return 0
    hi = 1
    while level(hi) > alpha:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if level(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def refutation_test(data, C: float, s: float, n0: int, eps: float, p: float, alpha: float) -> RefutationResult:
    """Refute the urn model when U_N = #{j : |y_j - y_N| > 2 eps} exceeds k_star.

    ``data`` holds y_{n0}, ..., y_N for one colour coordinate.
    """
    y = np.asarray(data, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("data must be a 1-d sequence with at least two observations")
    # the horizon condition (N - n0) p <= s^2 eps^2 (N+1) / (2 (C+1)^2) follows
    # from the range of p checked here, so it needs no separate test
    k_star = refutation_k_star(C, s, n0, eps, p, alpha)
    u = int(np.count_nonzero(np.abs(y - y[-1]) > 2.0 * eps))
    return RefutationResult(k_star, u, "refute" if u > k_star else "retain",
                            refutation_level(k_star, C, s, n0, eps, p))


def refutation_batch(batch: PathBatch, C: float, s: float, eps: float, p: float, alpha: float,
                     coordinate: int = 0) -> tuple[np.ndarray, int]:
    """U_N for every path of a batch and the common k_star; path i is refuted iff U[i] > k_star."""
    vals = batch.values if batch.values.ndim == 2 else batch.values[:, :, coordinate]
    n0 = max(batch.index0, 1)
    vals = vals[:, n0 - batch.index0 :]
    k_star = refutation_test(vals[0], C, s, n0, eps, p, alpha).k_star
    u = np.count_nonzero(np.abs(vals - vals[:, -1:]) > 2.0 * eps, axis=1)
    return u, k_star


# --- constants from empirical rates -----------------------------------------


@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    argmax_index: int
    kind: str
    estimate: bool = True


def estimate_constant(kind: str, ns, ci_upper, *, alpha: Optional[float] = None, v: Optional[float] = None,
                      K: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> ConstantEstimate:
    """Plug-in constant from upper confidence limits of empirical rates at indices ``ns``.

    baum_katz_C: sup_n ci_upper_n n^{alpha-1}.
    critical_c_inf: sup_n ci_upper_n (v n / 2) exp(2 K(n) / (v n)), i.e. the
    supremum of 1 + c_K(n) in the critical Galton-Watson tail asymptotics.
    """
    ns = np.asarray(ns, dtype=float)
    up = np.asarray(ci_upper, dtype=float)
    if ns.size < 10 or ns.shape != up.shape:
        raise ValueError("need empirical rates at >= 10 indices")
    if kind == "baum_katz_C":
        if alpha is None:
            raise ValueError("baum_katz_C needs alpha")
        scaled = up * ns ** (alpha - 1.0)
    elif kind == "critical_c_inf":
        if v is None or K is None:
            raise ValueError("critical_c_inf needs v and K")
        scaled = up * (v * ns / 2.0) * np.exp(2.0 * np.asarray(K(ns), dtype=float) / (v * ns))
    else:
        raise ValueError(f"unknown kind {kind!r}")
    i = int(np.argmax(scaled))
    return ConstantEstimate(float(scaled[i]), int(ns[i]), kind)


# --- nested events ----------------------------------------------------------


@dataclass(frozen=True)
class NestedExact:
    by_law: float
    by_rates: float
    law: tuple


def nested_exact(p: Sequence, a: Sequence, n0: int, truncation: int) -> NestedExact:
    """E[S_a(O)] for nested events A_n = {U <= p_n}, computed two ways up to n0 + truncation - 1.

    by_law sums P(O = k) S_a(k) with P(O = k) = p_{n0+k-1} - p_{n0+k} for k <= truncation;
    by_rates sums a_n p_n for n < n0 + truncation.  They differ by
    p_{n0+truncation} S_a(truncation), the mass of the law beyond the truncation.
    """
    ns = np.arange(n0, n0 + truncation + 1, dtype=np.int64)
    pv = [float(x) for x in p(ns)]
    av = [float(x) for x in a(ns[:-1])]
    S = [0.0]
    for x in av:
        S.append(S[-1] + x)
    law = [1.0 - pv[0]] + [pv[k - 1] - pv[k] for k in range(1, truncation + 1)]
    by_law = math.fsum(law[k] * S[k] for k in range(1, truncation + 1))
    by_rates = math.fsum(av[i] * pv[i] for i in range(truncation))
    return NestedExact(by_law, by_rates, tuple(law))
