"""Vectorized path simulators for martingales and related processes.

Paths are produced in blocks.  Block ``j`` of an ensemble draws from its own
Philox stream keyed by ``(master_seed, j)`` and the block size depends only on
the horizon, so an ensemble is bit-identical however many workers generate
it and in whatever order.  Each simulator works on a whole block at once:
the loop runs over time steps and every step is a numpy operation across
paths.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence as Seq

import numpy as np

from .bounds import gcrp_normalizer
from .sequences import Sequence, tail_sum, Power

ANALYTIC = "analytic"
HORIZON_VALUE = "horizon_value"
HORIZON_MEAN = "horizon_mean"
PROXY_METHODS = (ANALYTIC, HORIZON_VALUE, HORIZON_MEAN)

_BLOCK_CELLS = 1 << 23
_MAX_BLOCK = 512


class SimulationError(RuntimeError):
    """Invalid parameters or a violated runtime invariant (signals a defect)."""


def block_size(horizon: int, width: int = 1) -> int:
    """Paths per block: about 2^23 stored numbers, at most 512 paths."""
    return max(1, min(_MAX_BLOCK, _BLOCK_CELLS // ((horizon + 1) * width)))


def block_rng(master_seed: int, block_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(block_index)])))


@dataclass
class PathRecord:
    """One simulated path; ``values[i]`` is X at index ``index0 + i``."""

    process_id: str
    seed: int
    path_index: int
    values: np.ndarray
    index0: int
    limit_proxy: object
    proxy_method: str
    truncated: bool = False
    aux: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.index0 + self.values.shape[0] - 1


@dataclass
class PathBatch:
    """A block of paths.

    values: (paths, T) for scalar processes or (paths, T, d) for vector ones,
    indexed from ``index0``.  proxy: (paths,) or (paths, d).
    """

    process_id: str
    values: np.ndarray
    index0: int
    proxy: np.ndarray
    proxy_method: str
    truncated: np.ndarray
    aux: dict = field(default_factory=dict)
    seed: int = 0
    first_path: int = 0

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.index0 + self.values.shape[1] - 1

    def distances(self, lo: int, hi: int) -> np.ndarray:
        """d(X_n, proxy) for n in [lo, hi]: absolute value or Euclidean norm."""
        if lo < self.index0 or hi > self.horizon:
            raise SimulationError(f"indices [{lo}, {hi}] outside the simulated range [{self.index0}, {self.horizon}]")
        block = self.values[:, lo - self.index0 : hi - self.index0 + 1]
        if block.ndim == 2:
            with np.errstate(invalid="ignore"):
                d = np.abs(block - self.proxy[:, None])
        else:
            d = np.linalg.norm(block - self.proxy[:, None, :], axis=2)
        return np.where(np.isnan(d), np.inf, d)

    def record(self, i: int) -> PathRecord:
        aux = {}
        for key, val in self.aux.items():
            if isinstance(val, np.ndarray) and val.ndim >= 1 and val.shape[0] == self.n_paths:
                aux[key] = val[i]
            else:
                aux[key] = val
        return PathRecord(self.process_id, self.seed, self.first_path + i, self.values[i], self.index0,
                          self.proxy[i], self.proxy_method, bool(self.truncated[i]), aux)


def concat(batches: Seq[PathBatch]) -> PathBatch:
    """Join blocks of the same process into one batch (per-path aux arrays are stacked)."""
    first = batches[0]
    aux = {}
    for key, val in first.aux.items():
        if isinstance(val, np.ndarray) and val.ndim >= 1 and val.shape[0] == first.n_paths:
            aux[key] = np.concatenate([b.aux[key] for b in batches])
        else:
            aux[key] = val
    return PathBatch(first.process_id, np.concatenate([b.values for b in batches]), first.index0,
                     np.concatenate([b.proxy for b in batches]), first.proxy_method,
                     np.concatenate([b.truncated for b in batches]), aux, first.seed, first.first_path)


class ProcessSpec:
    """A simulatable process; subclasses implement :meth:`simulate_block`."""

    process_id = "process"
    width = 1

    def simulate_block(self, rng: np.random.Generator, n_paths: int, horizon: int) -> PathBatch:
        raise NotImplementedError

    def increment_bound(self, n: int) -> Optional[float]:
        """Deterministic bound on |X_n - X_{n-1}| if the process has one."""
        return None


def _run_block(args) -> PathBatch:
    spec, master_seed, block_index, size, horizon, first = args
    batch = spec.simulate_block(block_rng(master_seed, block_index), size, horizon)
    batch.seed = int(master_seed)
    batch.first_path = first
    return batch


def _block_plan(spec: ProcessSpec, n_paths: int, horizon: int) -> list[tuple[int, int, int]]:
    size = block_size(horizon, spec.width)
    plan = []
    first = 0
    j = 0
    while first < n_paths:
        plan.append((j, min(size, n_paths - first), first))
        first += size
        j += 1
    return plan


def iter_blocks(spec: ProcessSpec, n_paths: int, horizon: int, master_seed: int, workers: int = 1) -> Iterator[PathBatch]:
    """Yield the ensemble block by block, in block order."""
    if n_paths < 1 or horizon < 0:
        raise SimulationError("need n_paths >= 1 and horizon >= 0")
    jobs = [(spec, master_seed, j, size, horizon, first) for j, size, first in _block_plan(spec, n_paths, horizon)]
    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            yield _run_block(job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves order, so the concatenated ensemble is worker independent
        yield from pool.map(_run_block, jobs)


def simulate(spec: ProcessSpec, n_paths: int, horizon: int, master_seed: int, workers: int = 1) -> PathBatch:
    """The whole ensemble as one batch."""
    return concat(list(iter_blocks(spec, n_paths, horizon, master_seed, workers)))


def default_workers() -> int:
    return os.cpu_count() or 1


def write_trace(batch: PathBatch, path: str) -> None:
    """One JSON record per path."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(batch.n_paths):
            rec = batch.record(i)
            fh.write(json.dumps({
                "process_id": rec.process_id,
                "seed": rec.seed,
                "path_index": rec.path_index,
                "index0": rec.index0,
                "values": np.asarray(rec.values).tolist(),
                "limit_proxy": np.asarray(rec.limit_proxy).tolist(),
                "proxy_method": rec.proxy_method,
                "truncated": rec.truncated,
            }) + "\n")


# --- urns -------------------------------------------------------------------


@dataclass(frozen=True)
class Polya2(ProcessSpec):
    """Two-colour Polya urn started with B black balls out of N; X_n is the black proportion.

    A nonzero ``bias`` perturbs the dynamics: black is drawn with probability
    clip(X_{n-1} + bias, 0, 1), which is no longer a martingale.
    """

    B: int = 1
    N: int = 2
    bias: float = 0.0

    process_id = "polya2"

    def __post_init__(self):
        if not (int(self.B) == self.B and int(self.N) == self.N and 1 <= self.B < self.N):
            raise SimulationError(f"Polya urn needs integers 1 <= B < N, got B={self.B}, N={self.N}")
        if not -1.0 <= self.bias <= 1.0:
            raise SimulationError("bias must lie in [-1, 1]")

    def increment_bound(self, n: int) -> float:
        return 2.0 / (n + self.N)

    def simulate_block(self, rng, n_paths, horizon):
        values = np.empty((n_paths, horizon + 1))
        black = np.full(n_paths, float(self.B))
        values[:, 0] = self.B / self.N
        for n in range(1, horizon + 1):
            prob = values[:, n - 1] if self.bias == 0.0 else np.clip(values[:, n - 1] + self.bias, 0.0, 1.0)
            draw = rng.random(n_paths) < prob
            black += draw
            values[:, n] = black / (n + self.N)
        steps = np.arange(1, horizon + 1)
        if horizon and not np.all(np.abs(np.diff(values, axis=1)) <= 2.0 / (steps + self.N) + 1e-15):
            raise SimulationError("Polya increment exceeded 2/(n+N)")
        return PathBatch(self.process_id, values, 0, values[:, -1].copy(), HORIZON_VALUE,
                         np.zeros(n_paths, dtype=bool),
                         {"limit_law": ("beta", self.B, self.N - self.B)} if self.bias == 0.0 else {"bias": self.bias})


@dataclass(frozen=True)
class ReplacementMatrix:
    """Integer replacement matrix of a tenable multicolour urn."""

    entries: tuple

    def __post_init__(self):
        r = np.asarray(self.entries, dtype=np.int64)
        object.__setattr__(self, "entries", tuple(tuple(int(x) for x in row) for row in r))
        problems = tenability_violations(r)
        if problems:
            raise SimulationError("replacement matrix is not tenable: " + "; ".join(problems))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.int64)

    @property
    def d(self) -> int:
        return len(self.entries)

    @property
    def row_sum(self) -> int:
        return int(sum(self.entries[0]))


def tenability_violations(r: np.ndarray) -> list[str]:
    """Check: nonnegative off-diagonal entries, constant row sums, negative diagonals divide their column."""
    out = []
    if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] < 1:
        return ["matrix must be square"]
    d = r.shape[0]
    off = r[~np.eye(d, dtype=bool)]
    if np.any(off < 0):
        out.append("off-diagonal entries must be >= 0")
    sums = r.sum(axis=1)
    if np.any(sums != sums[0]):
        out.append(f"row sums differ: {sums.tolist()}")
    elif sums[0] < 0:
        out.append("row sum must be >= 0")
    for i in range(d):
        if r[i, i] < 0:
            bad = [k for k in range(d) if r[k, i] % (-r[i, i]) != 0]
            if bad:
                out.append(f"|r[{i},{i}]| = {-r[i, i]} does not divide column entries in rows {bad}")
    return out


@dataclass(frozen=True)
class PolyaMulticolor(ProcessSpec):
    """Generalized Polya urn: draw colour i with probability proportional to its count, add row i of R."""

    R: ReplacementMatrix
    initial: tuple

    process_id = "polya_multicolor"

    def __post_init__(self):
        init = np.asarray(self.initial, dtype=np.int64)
        object.__setattr__(self, "initial", tuple(int(x) for x in init))
        r = self.R.array
        if init.shape != (self.R.d,) or np.any(init < 0) or init.sum() <= 0:
            raise SimulationError("initial counts must be a nonnegative vector of length d with positive total")
        for i in range(self.R.d):
            if r[i, i] < 0 and init[i] % (-r[i, i]) != 0:
                raise SimulationError(f"initial count of colour {i} must be a multiple of {-r[i, i]}")

    @property
    def width(self):
        return self.R.d

    def increment_bound(self, n: int) -> float:
        c = int(np.abs(self.R.array).max())
        return (c + 1.0) / (sum(self.initial) + (n - 1) * self.R.row_sum)

    def simulate_block(self, rng, n_paths, horizon):
        r = self.R.array
        d = self.R.d
        counts = np.tile(np.asarray(self.initial, dtype=np.int64), (n_paths, 1))
        total0 = int(sum(self.initial))
        values = np.empty((n_paths, horizon + 1, d))
        values[:, 0, :] = counts / total0
        for n in range(1, horizon + 1):
            total = total0 + (n - 1) * self.R.row_sum
            u = rng.random(n_paths) * total
            colour = (np.cumsum(counts, axis=1) <= u[:, None]).sum(axis=1)
            counts += r[colour]
            if np.any(counts < 0):
                bad = int(np.argmax(np.any(counts < 0, axis=1)))
                raise SimulationError(f"negative ball count at step {n} on path {bad}: the urn is not tenable")
            new_total = total0 + n * self.R.row_sum
            if np.any(counts.sum(axis=1) != new_total):
                raise SimulationError(f"total count differs from {new_total} at step {n}")
            values[:, n, :] = counts / new_total
            step = np.abs(values[:, n, :] - values[:, n - 1, :]).max()
            if step > self.increment_bound(n) + 1e-12:
                raise SimulationError(f"increment {step} exceeds the urn bound at step {n}")
        return PathBatch(self.process_id, values, 0, values[:, -1, :].copy(), HORIZON_VALUE,
                         np.zeros(n_paths, dtype=bool), {"final_counts": counts})


# --- branching --------------------------------------------------------------


@dataclass(frozen=True)
class GaltonWatson(ProcessSpec):
    """Galton-Watson process from Z_0 = 1 with finitely supported offspring; X_n = Z_n / m^n."""

    offspring: Mapping[int, float]
    cap: int = 10**7

    process_id = "galton_watson"

    def __post_init__(self):
        items = sorted((int(k), float(p)) for k, p in dict(self.offspring).items())
        if not items or any(k < 0 or p < 0 or not math.isfinite(p) for k, p in items):
            raise SimulationError("offspring law needs nonnegative integer support and nonnegative masses")
        total = math.fsum(p for _, p in items)
        if abs(total - 1.0) > 1e-9:
            raise SimulationError(f"offspring masses sum to {total}, not 1")
        object.__setattr__(self, "offspring", {k: p / total for k, p in items if p > 0})

    @property
    def support(self) -> np.ndarray:
        return np.array(list(self.offspring.keys()), dtype=np.int64)

    @property
    def probs(self) -> np.ndarray:
        return np.array(list(self.offspring.values()))

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def variance(self) -> float:
        return float(np.dot(self.support.astype(float) ** 2, self.probs)) - self.mean**2

    def simulate_block(self, rng, n_paths, horizon):
        m = self.mean
        if m <= 0:
            raise SimulationError("offspring mean must be positive")
        support, probs = self.support, self.probs
        z = np.empty((n_paths, horizon + 1), dtype=np.int64)
        z[:, 0] = 1
        truncated = np.zeros(n_paths, dtype=bool)
        for n in range(1, horizon + 1):
            if not z[:, n - 1].any():  # extinction is absorbing
                z[:, n:] = 0
                break
            counts = rng.multinomial(z[:, n - 1], probs)
            nxt = counts @ support
            over = nxt > self.cap
            truncated |= over
            z[:, n] = np.minimum(nxt, self.cap)
        scale = m ** -np.arange(horizon + 1, dtype=float)
        values = z * scale
        if m > 1:
            proxy, method = values[:, -1].copy(), HORIZON_VALUE
        else:
            proxy, method = np.zeros(n_paths), ANALYTIC
        return PathBatch(self.process_id, values, 0, proxy, method, truncated,
                         {"Z": z, "mean": m, "variance": self.variance})


# --- martingales with explicit increments -----------------------------------


@dataclass(frozen=True)
class RandomWalkDecaying(ProcessSpec):
    """X_n = sum_{k <= n} +-k^{-q/2} with fair signs, so Var(dX_n) = n^{-q}."""

    q: float

    process_id = "random_walk_decaying"

    def __post_init__(self):
        if not self.q > 3:
            raise SimulationError("the decaying random walk needs q > 3")

    def increment_bound(self, n: int) -> float:
        return n ** (-self.q / 2.0)

    def residual_variances(self, horizon: int) -> np.ndarray:
        """pi_n = sum_{k > n} k^{-q} for n = 0..horizon (upper bounds)."""
        rate = Power(-self.q)
        out = np.empty(horizon + 1)
        out[horizon] = tail_sum(rate, horizon + 1).value
        ks = np.arange(1, horizon + 1, dtype=float)
        out[:horizon] = out[horizon] + np.cumsum((ks ** -self.q)[::-1])[::-1]
        return out

    def simulate_block(self, rng, n_paths, horizon):
        steps = np.arange(1, horizon + 1, dtype=float) ** (-self.q / 2.0)
        signs = rng.integers(0, 2, size=(n_paths, horizon), dtype=np.int8) * 2 - 1
        values = np.zeros((n_paths, horizon + 1))
        np.cumsum(signs * steps, axis=1, out=values[:, 1:])
        return PathBatch(self.process_id, values, 0, values[:, -1].copy(), HORIZON_VALUE,
                         np.zeros(n_paths, dtype=bool), {"pi": self.residual_variances(horizon)})


@dataclass(frozen=True)
class SignWalk(ProcessSpec):
    """Simple random walk X_n = sum of n fair +-1 signs, X_0 = 0; the proxy is the start value."""

    process_id = "sign_walk"

    def increment_bound(self, n: int) -> float:
        return 1.0

    def simulate_block(self, rng, n_paths, horizon):
        signs = rng.integers(0, 2, size=(n_paths, horizon), dtype=np.int8) * 2 - 1
        values = np.zeros((n_paths, horizon + 1))
        np.cumsum(signs, axis=1, out=values[:, 1:])
        return PathBatch(self.process_id, values, 0, np.zeros(n_paths), ANALYTIC, np.zeros(n_paths, dtype=bool))


@dataclass(frozen=True)
class StochasticIntegral(ProcessSpec):
    """X_n = sum_{k <= n} g_k D_k / k with |g_k| <= bound_g predictable and D_k = +-bound_delta."""

    bound_g: float = 1.0
    bound_delta: float = 1.0
    g_rule: str = "constant"

    process_id = "stochastic_integral"

    def __post_init__(self):
        if not (self.bound_g > 0 and self.bound_delta > 0):
            raise SimulationError("bounds must be positive")
        if self.g_rule not in ("constant", "sign_of_past"):
            raise SimulationError("g_rule must be 'constant' or 'sign_of_past'")

    def increment_bound(self, n: int) -> float:
        return self.bound_g * self.bound_delta / n

    def simulate_block(self, rng, n_paths, horizon):
        values = np.zeros((n_paths, horizon + 1))
        deltas = (rng.integers(0, 2, size=(n_paths, horizon)) * 2 - 1) * self.bound_delta
        for k in range(1, horizon + 1):
            if self.g_rule == "constant":
                g = self.bound_g
            else:
                g = np.where(values[:, k - 1] >= 0, self.bound_g, -self.bound_g)
            values[:, k] = values[:, k - 1] + g * deltas[:, k - 1] / k
        c = self.bound_g * self.bound_delta / np.arange(1, horizon + 1, dtype=float)
        return PathBatch(self.process_id, values, 0, values[:, -1].copy(), HORIZON_VALUE,
                         np.zeros(n_paths, dtype=bool), {"c": c})


# --- generalized Chinese restaurant -----------------------------------------


@dataclass(frozen=True)
class GCRP(ProcessSpec):
    """Two-parameter Chinese restaurant process; values are V_m / phi_m for m = 1..n.

    Customer m+1 opens a new table with probability (alpha V_m + theta)/(m + theta)
    and otherwise joins table i with probability (|A_i| - alpha)/(m + theta).
    Joining uses rejection: a uniformly chosen seated customer proposes its
    table, accepted with probability (|A_i| - alpha)/|A_i|.
    """

    alpha: float
    theta: float

    process_id = "gcrp"
    check_every = 1024

    def __post_init__(self):
        if not (0 < self.alpha < 1 and self.theta > -self.alpha):
            raise SimulationError("GCRP needs 0 < alpha < 1 and theta > -alpha")

    def simulate_block(self, rng, n_paths, horizon):
        n = max(horizon, 1)
        rows = np.arange(n_paths)
        table_of = np.zeros((n_paths, n), dtype=np.int32)  # table of each seated customer
        sizes = np.zeros((n_paths, n + 1), dtype=np.int64)
        sizes[:, 0] = 1
        tables = np.ones(n_paths, dtype=np.int64)
        v_path = np.empty((n_paths, n), dtype=np.int64)
        v_path[:, 0] = 1
        a, th = self.alpha, self.theta
        for m in range(1, n):
            new = rng.random(n_paths) < (a * tables + th) / (m + th)
            join = np.nonzero(~new)[0]
            chosen = np.empty(join.size, dtype=np.int64)
            pending = np.arange(join.size)
            while pending.size:
                p_rows = join[pending]
                cand = table_of[p_rows, rng.integers(0, m, size=pending.size)]
                s = sizes[p_rows, cand]
                ok = rng.random(pending.size) * s < s - a
                chosen[pending[ok]] = cand[ok]
                pending = pending[~ok]
            sizes[join, chosen] += 1
            table_of[join, m] = chosen
            opened = np.nonzero(new)[0]
            sizes[opened, tables[opened]] = 1
            table_of[opened, m] = tables[opened]
            tables[opened] += 1
            v_path[:, m] = tables
            if m % self.check_every == 0 or m == n - 1:
                self._check(sizes, tables, m + 1)
        phi = np.array([gcrp_normalizer(a, th, k) for k in range(1, n + 1)])
        values = v_path / phi
        block_counts = [np.bincount(sizes[i, : tables[i]], minlength=2) for i in rows]
        return PathBatch(self.process_id, values, 1, values[:, -1].copy(), HORIZON_VALUE,
                         np.zeros(n_paths, dtype=bool),
                         {"V": v_path, "block_counts": np.array(block_counts, dtype=object), "phi": phi})

    def _check(self, sizes: np.ndarray, tables: np.ndarray, m: int) -> None:
        if np.any(sizes.sum(axis=1) != m):
            raise SimulationError(f"table sizes do not add up to {m} customers")
        if np.any((sizes > 0).sum(axis=1) != tables):
            raise SimulationError("number of occupied tables differs from V")
        mass = (sizes.sum(axis=1) - self.alpha * tables + self.alpha * tables + self.theta) / (m + self.theta)
        if np.any(np.abs(mass - 1.0) > 1e-12):
            raise SimulationError("seating probabilities do not sum to 1")


# --- method of moments ------------------------------------------------------


def moment_map(family: str, theta) -> np.ndarray:
    """First two raw moments: Normal (mu, sigma) or Gamma (shape, scale)."""
    t0, t1 = float(theta[0]), float(theta[1])
    if family == "normal":
        return np.array([t0, t0 * t0 + t1 * t1])
    if family == "gamma":
        return np.array([t0 * t1, t0 * t1 * t1 * (1.0 + t0)])
    raise SimulationError(f"unknown family {family!r}")


def inverse_moment_map(family: str, moments: np.ndarray) -> np.ndarray:
    """Vectorized inverse of :func:`moment_map`; NaN where the moments are outside its range."""
    m = np.asarray(moments, dtype=float)
    m1, m2 = m[..., 0], m[..., 1]
    var = m2 - m1 * m1
    with np.errstate(invalid="ignore", divide="ignore"):
        if family == "normal":
            ok = var > 0
            out = np.stack([m1, np.sqrt(np.where(ok, var, np.nan))], axis=-1)
        elif family == "gamma":
            ok = (var > 0) & (m1 > 0)
            out = np.stack([m1 * m1 / var, var / m1], axis=-1)
        else:
            raise SimulationError(f"unknown family {family!r}")
    out[~ok] = np.nan
    return out


def moment_jacobian(family: str, theta) -> np.ndarray:
    t0, t1 = float(theta[0]), float(theta[1])
    if family == "normal":
        return np.array([[1.0, 0.0], [2 * t0, 2 * t1]])
    if family == "gamma":
        return np.array([[t1, t0], [t1 * t1 * (1 + 2 * t0), 2 * t0 * t1 * (1 + t0)]])
    raise SimulationError(f"unknown family {family!r}")


@dataclass(frozen=True)
class MomentProcess(ProcessSpec):
    """Distance ||theta_hat_m - theta0|| of the method-of-moments estimator, m = 1..n.

    Indices where the sample moments fall outside the moment map's range carry +inf.
    """

    family: str
    theta0: tuple

    process_id = "moment_process"

    def __post_init__(self):
        t = tuple(float(x) for x in self.theta0)
        object.__setattr__(self, "theta0", t)
        if self.family == "normal" and not t[1] > 0:
            raise SimulationError("normal family needs sigma > 0")
        if self.family == "gamma" and not (t[0] > 0 and t[1] > 0):
            raise SimulationError("gamma family needs shape > 0 and scale > 0")
        if self.family not in ("normal", "gamma"):
            raise SimulationError(f"unknown family {self.family!r}")

    def simulate_block(self, rng, n_paths, horizon):
        n = max(horizon, 1)
        if self.family == "normal":
            y = rng.normal(self.theta0[0], self.theta0[1], size=(n_paths, n))
        else:
            y = rng.gamma(self.theta0[0], self.theta0[1], size=(n_paths, n))
        counts = np.arange(1, n + 1, dtype=float)
        moments = np.stack([np.cumsum(y, axis=1) / counts, np.cumsum(y * y, axis=1) / counts], axis=-1)
        est = inverse_moment_map(self.family, moments)
        dist = np.linalg.norm(est - np.asarray(self.theta0), axis=-1)
        values = np.where(np.isnan(dist), np.inf, dist)
        jac = moment_jacobian(self.family, self.theta0)
        return PathBatch(self.process_id, values, 1, np.zeros(n_paths), ANALYTIC, np.zeros(n_paths, dtype=bool),
                         {"moments": moments, "jacobian": jac,
                          "min_singular_value": float(np.linalg.svd(jac, compute_uv=False).min())})


# --- nested events ----------------------------------------------------------


@dataclass(frozen=True)
class NestedEvents(ProcessSpec):
    """X_n = 1{U <= p_n} with one uniform U per path; p nonincreasing makes the events nested."""

    p: Sequence

    process_id = "nested_events"

    def simulate_block(self, rng, n_paths, horizon):
        n0 = self.p.n0
        ps = self.p.values(np.arange(n0, max(horizon, n0) + 1, dtype=np.int64))
        u = rng.random(n_paths)
        values = (u[:, None] <= ps[None, :]).astype(float)
        return PathBatch(self.process_id, values, n0, np.zeros(n_paths), ANALYTIC, np.zeros(n_paths, dtype=bool),
                         {"U": u})
