"""Weight, tolerance and probability-rate sequences, partial sums and K.

A :class:`Sequence` is a positive function on the integers n >= n0.  Closed
families know an :class:`Envelope`, an upper bound of the form
``coef * n**power * exp(-rate * n**shape)`` that makes infinite sums
certifiable: the sum is computed directly up to a cutoff and the remainder is
bounded analytically, so every reported constant is an upper bound.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .specfn import EvalResult, hurwitz_zeta, upper_incomplete_gamma

DIVERGENCE_THRESHOLD = 1e15
MAX_TERMS = 1 << 22
REL_TOL = 1e-10
_BLOCK = 1 << 16


class Direction(str, Enum):
    NONDECREASING = "nondecreasing"
    NONINCREASING = "nonincreasing"
    UNCONSTRAINED = "unconstrained"


class DivergenceError(ArithmeticError):
    """An infinite sum is (or is certified to be) divergent."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class RateExtrapolationError(ValueError):
    """A tabulated rate sequence was evaluated or summed beyond its table."""


class SequenceError(ValueError):
    """Invalid sequence parameters or a violated monotonicity constraint."""


@dataclass(frozen=True)
class Envelope:
    """Upper bound coef * n**power * exp(-rate * n**shape), valid for n >= start.

    ``exact`` marks envelopes that coincide with the sequence itself (up to
    the start index); only exact envelopes can certify divergence.
    """

    coef: float
    power: float = 0.0
    rate: float = 0.0
    shape: float = 1.0
    start: int = 1
    exact: bool = False

    def __post_init__(self):
        if self.rate == 0.0 and self.shape != 1.0:
            object.__setattr__(self, "shape", 1.0)
        if self.shape <= 0:
            raise SequenceError("envelope shape must be positive")
        if self.start < 1:
            object.__setattr__(self, "start", 1)

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        return self.coef * n**self.power * np.exp(-self.rate * n**self.shape)

    def summable(self) -> bool:
        if self.coef == 0.0:
            return True
        if self.rate > 0:
            return True
        return self.rate == 0.0 and self.power < -1.0

    def certifies_divergence(self) -> bool:
        return self.exact and not self.summable()

    def scaled(self, factor: float) -> "Envelope":
        return Envelope(self.coef * factor, self.power, self.rate, self.shape, self.start, self.exact)

    def raised(self, t: float) -> "Envelope":
        """Envelope of f**t.  Negative t needs an exact envelope (a lower bound)."""
        if t < 0 and not self.exact:
            raise SequenceError("a negative power needs an exact envelope")
        return Envelope(self.coef**t, self.power * t, self.rate * t, self.shape, self.start, self.exact)

    def times(self, other: "Envelope") -> "Envelope":
        start = max(self.start, other.start)
        coef = self.coef * other.coef
        power = self.power + other.power
        exact = self.exact and other.exact
        if self.rate == 0.0 or other.rate == 0.0 or self.shape == other.shape:
            if self.rate == 0.0:
                rate, shape = other.rate, other.shape
            elif other.rate == 0.0:
                rate, shape = self.rate, self.shape
            else:
                rate, shape = self.rate + other.rate, self.shape
            return Envelope(coef, power, rate, shape, start, exact)
        hi, lo = (self, other) if self.shape > other.shape else (other, self)
        if hi.rate < 0:
            # the faster growing exponential wins: not summable
            return Envelope(coef, power, hi.rate, hi.shape, start, exact)
        if lo.rate >= 0:
            return Envelope(coef, power, hi.rate, hi.shape, start, False)
        # exp(|lo.rate| n^lo.shape) <= exp(hi.rate/2 n^hi.shape) beyond a crossover
        cross = (2.0 * abs(lo.rate) / hi.rate) ** (1.0 / (hi.shape - lo.shape))
        return Envelope(coef, power, 0.5 * hi.rate, hi.shape, max(start, int(math.ceil(cross))), False)

    def tail(self, cutoff: int) -> float:
        """Upper bound on sum_{n > cutoff} of the envelope (cutoff >= start - 1)."""
        if self.coef == 0.0:
            return 0.0
        if not self.summable():
            return math.inf
        m = max(int(cutoff) + 1, self.start)
        # the envelope decreases on [peak, inf); sum terms explicitly until
        # m - 1 >= max(peak, 1), then sum_{n >= m} f(n) <= integral_{m-1}^inf f
        peak = 0.0
        if self.rate > 0 and self.power > 0:
            try:
                peak = (self.power / (self.rate * self.shape)) ** (1.0 / self.shape)
            except OverflowError:
                return math.inf
        if peak - m > 4096:
            # unimodal: each term is dominated by the integral over an adjacent
            # unit interval except the (at most two) terms next to the peak
            fmax = float(self(peak))
            return 2.0 * fmax + self._integral(max(m - 1.0, 0.0))
        last = max(m - 1, int(math.ceil(peak)), 1)
        explicit = 0.0
        if last >= m:
            explicit = float(np.sum(self(np.arange(m, last + 1, dtype=float))))
        return explicit + self._integral(float(last))

    def _integral(self, x0: float) -> float:
        """integral_{x0}^inf coef x^power exp(-rate x^shape) dx."""
        if self.rate == 0.0:
            return self.coef * x0 ** (self.power + 1.0) / (-self.power - 1.0)
        s = (self.power + 1.0) / self.shape
        y0 = self.rate * x0**self.shape
        if s > 0:
            log_scale = math.log(self.coef / self.shape) - s * math.log(self.rate)
        else:
            # x^power <= x0^power on the range when power <= -1
            s = 1.0 / self.shape
            log_scale = math.log(self.coef / self.shape) + self.power * math.log(x0) - s * math.log(self.rate)
        try:
            g = upper_incomplete_gamma(s, y0)
            return math.exp(log_scale) * (g.value + g.abs_error_bound)
        except OverflowError:
            return math.inf


class Sequence(ABC):
    """A positive sequence indexed by integers n >= n0."""

    n0: int

    @abstractmethod
    def values(self, n: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at integer indices (all >= n0)."""

    def __call__(self, n):
        if np.isscalar(n):
            if n < self.n0:
                raise SequenceError(f"{self.label} is defined for n >= {self.n0}, got {n}")
            return float(self.values(np.asarray([n], dtype=np.int64))[0])
        arr = np.asarray(n, dtype=np.int64)
        if arr.size and arr.min() < self.n0:
            raise SequenceError(f"{self.label} is defined for n >= {self.n0}")
        return self.values(arr)

    def envelope(self) -> Optional[Envelope]:
        return None

    def tail_certificate(self, cutoff: int) -> Optional[float]:
        """Upper bound on sum_{n > cutoff} self(n), or None when unknown."""
        env = self.envelope()
        if env is None:
            return None
        if cutoff + 1 < env.start:
            head = float(np.sum(self.values(np.arange(cutoff + 1, env.start, dtype=np.int64))))
            return head + env.tail(env.start - 1)
        return env.tail(cutoff)

    @property
    def direction(self) -> Direction:
        return Direction.UNCONSTRAINED

    @property
    def label(self) -> str:
        return type(self).__name__

    def is_monotone(self, direction: Direction, probe: int = 2000) -> bool:
        if direction is Direction.UNCONSTRAINED or self.direction is direction:
            return True
        ns = np.arange(self.n0, self.n0 + probe, dtype=np.int64)
        v = self.values(ns)
        d = np.diff(v)
        slack = 1e-12 * np.abs(v[1:])
        if direction is Direction.NONDECREASING:
            return bool(np.all(d >= -slack))
        return bool(np.all(d <= slack))


def require_direction(seq: Sequence, direction: Direction, name: str) -> None:
    if not seq.is_monotone(direction):
        raise SequenceError(f"{name} must be {direction.value}")


@dataclass(frozen=True)
class Power(Sequence):
    """scale * n**p."""

    p: float
    scale: float = 1.0
    n0: int = 1

    def __post_init__(self):
        if self.n0 < 1:
            raise SequenceError("Power sequences start at n0 >= 1")
        if not self.scale > 0:
            raise SequenceError("Power scale must be positive")

    def values(self, n):
        return self.scale * np.asarray(n, dtype=float) ** self.p

    def envelope(self):
        return Envelope(self.scale, self.p, 0.0, 1.0, self.n0, True)

    @property
    def direction(self):
        return Direction.NONDECREASING if self.p >= 0 else Direction.NONINCREASING

    @property
    def label(self):
        return f"Power(p={self.p!r}, scale={self.scale!r})"


@dataclass(frozen=True)
class ShiftedPower(Sequence):
    """scale * (n + shift)**p with shift >= 0."""

    p: float
    shift: float = 0.0
    scale: float = 1.0
    n0: int = 1

    def __post_init__(self):
        if self.n0 < 1:
            raise SequenceError("ShiftedPower sequences start at n0 >= 1")
        if not self.scale > 0 or not self.shift >= 0:
            raise SequenceError("ShiftedPower needs scale > 0 and shift >= 0")

    def values(self, n):
        return self.scale * (np.asarray(n, dtype=float) + self.shift) ** self.p

    def envelope(self):
        # (n + s)**p <= n**p for p <= 0 and <= (1 + s)**p n**p for p > 0, n >= 1
        coef = self.scale if self.p <= 0 else self.scale * (1.0 + self.shift) ** self.p
        return Envelope(coef, self.p, 0.0, 1.0, self.n0, self.shift == 0.0)

    @property
    def direction(self):
        return Direction.NONDECREASING if self.p >= 0 else Direction.NONINCREASING

    @property
    def label(self):
        return f"ShiftedPower(p={self.p!r}, shift={self.shift!r}, scale={self.scale!r})"


@dataclass(frozen=True)
class Exponential(Sequence):
    """scale * b**(p * n); b**p < 1 decays, b**p > 1 grows."""

    b: float
    p: float = 1.0
    scale: float = 1.0
    n0: int = 0

    def __post_init__(self):
        if not self.b > 0:
            raise SequenceError("Exponential base must be positive")
        if not self.scale > 0:
            raise SequenceError("Exponential scale must be positive")

    @property
    def log_ratio(self) -> float:
        return self.p * math.log(self.b)

    def values(self, n):
        return self.scale * np.exp(self.log_ratio * np.asarray(n, dtype=float))

    def envelope(self):
        return Envelope(self.scale, 0.0, -self.log_ratio, 1.0, max(self.n0, 1), True)

    @property
    def direction(self):
        return Direction.NONDECREASING if self.log_ratio >= 0 else Direction.NONINCREASING

    @property
    def label(self):
        return f"Exponential(b={self.b!r}, p={self.p!r}, scale={self.scale!r})"


@dataclass(frozen=True)
class Weibull(Sequence):
    """scale * b**(p * n**alpha)."""

    b: float
    p: float
    alpha: float
    scale: float = 1.0
    n0: int = 1

    def __post_init__(self):
        if not self.b > 0 or not self.alpha > 0 or not self.scale > 0:
            raise SequenceError("Weibull needs b > 0, alpha > 0, scale > 0")

    def values(self, n):
        return self.scale * np.exp(self.p * math.log(self.b) * np.asarray(n, dtype=float) ** self.alpha)

    def envelope(self):
        return Envelope(self.scale, 0.0, -self.p * math.log(self.b), self.alpha, max(self.n0, 1), True)

    @property
    def direction(self):
        return Direction.NONDECREASING if self.p * math.log(self.b) >= 0 else Direction.NONINCREASING

    @property
    def label(self):
        return f"Weibull(b={self.b!r}, p={self.p!r}, alpha={self.alpha!r})"


@dataclass(frozen=True)
class LogWeight(Sequence):
    """1 / (n * ln(n+1)**(1+theta))."""

    theta: float
    n0: int = 1

    def __post_init__(self):
        if not self.theta > 0:
            raise SequenceError("LogWeight needs theta > 0")
        if self.n0 < 1:
            raise SequenceError("LogWeight starts at n0 >= 1")

    def values(self, n):
        x = np.asarray(n, dtype=float)
        return 1.0 / (x * np.log1p(x) ** (1.0 + self.theta))

    def tail_certificate(self, cutoff):
        # 1/(x ln^{1+t}(x+1)) <= (1 + 1/N) / ((x+1) ln^{1+t}(x+1)) for x >= N, and
        # the latter integrates to ln^{-t}(N+1) / t over [N, inf).
        big_n = max(int(cutoff), 1)
        return (1.0 + 1.0 / big_n) / (self.theta * math.log1p(big_n) ** self.theta)

    def tail_lower(self, cutoff: int) -> float:
        return 1.0 / (self.theta * math.log(cutoff + 2.0) ** self.theta)

    @property
    def direction(self):
        return Direction.NONINCREASING

    @property
    def label(self):
        return f"LogWeight(theta={self.theta!r})"


@dataclass(frozen=True)
class LogSqrt(Sequence):
    """sqrt(2 C (2+theta) ln(n+1) / (n+1)**q)."""

    C: float
    theta: float
    q: float
    n0: int = 1

    def __post_init__(self):
        if not (self.C > 0 and self.theta > 0 and 0 < self.q <= 1):
            raise SequenceError("LogSqrt needs C > 0, theta > 0, 0 < q <= 1")
        if self.n0 < 1:
            raise SequenceError("LogSqrt starts at n0 >= 1")

    def values(self, n):
        x = np.asarray(n, dtype=float)
        return np.sqrt(2.0 * self.C * (2.0 + self.theta) * np.log1p(x) / (x + 1.0) ** self.q)

    @property
    def direction(self):
        # ln(x+1)/(x+1)^q decreases once ln(n+1) >= 1/q
        if math.log(self.n0 + 1.0) >= 1.0 / self.q:
            return Direction.NONINCREASING
        return Direction.UNCONSTRAINED

    @property
    def label(self):
        return f"LogSqrt(C={self.C!r}, theta={self.theta!r}, q={self.q!r})"


@dataclass(frozen=True)
class LogPower(Sequence):
    """scale * ln(n+1)**s."""

    s: float
    scale: float = 1.0
    n0: int = 1

    def __post_init__(self):
        if self.n0 < 1:
            raise SequenceError("LogPower starts at n0 >= 1")
        if not self.scale > 0:
            raise SequenceError("LogPower scale must be positive")

    def values(self, n):
        return self.scale * np.log1p(np.asarray(n, dtype=float)) ** self.s

    @property
    def direction(self):
        return Direction.NONDECREASING if self.s >= 0 else Direction.NONINCREASING

    @property
    def label(self):
        return f"LogPower(s={self.s!r}, scale={self.scale!r})"


@dataclass(frozen=True)
class Constant(Sequence):
    c: float
    n0: int = 0

    def __post_init__(self):
        if not self.c > 0:
            raise SequenceError("Constant sequences must be positive")

    def values(self, n):
        return np.full(np.shape(n), self.c, dtype=float)

    def envelope(self):
        return Envelope(self.c, 0.0, 0.0, 1.0, max(self.n0, 1), True)

    @property
    def direction(self):
        return Direction.NONDECREASING

    def is_monotone(self, direction, probe=2000):
        return True

    @property
    def label(self):
        return f"Constant({self.c!r})"


@dataclass(frozen=True)
class Tabulated(Sequence):
    """Explicit values a_{n0}, a_{n0+1}, ...

    Weights (``role="weight"``) are held at their last value beyond the
    table; rates (``role="rate"``) refuse to be extrapolated.
    """

    table: tuple
    n0: int = 0
    role: str = "weight"
    declared: Direction = Direction.UNCONSTRAINED

    def __post_init__(self):
        vals = np.asarray(self.table, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise SequenceError("Tabulated needs a non-empty 1-d table")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise SequenceError("Tabulated values must be finite and positive")
        if self.role not in ("weight", "rate"):
            raise SequenceError("role must be 'weight' or 'rate'")
        object.__setattr__(self, "table", tuple(float(v) for v in vals))
        d = np.diff(vals)
        if self.declared is Direction.NONDECREASING and np.any(d < 0):
            raise SequenceError(f"table is not nondecreasing at index {self.n0 + int(np.argmax(d < 0)) + 1}")
        if self.declared is Direction.NONINCREASING and np.any(d > 0):
            raise SequenceError(f"table is not nonincreasing at index {self.n0 + int(np.argmax(d > 0)) + 1}")

    def values(self, n):
        arr = np.asarray(self.table)
        idx = np.asarray(n, dtype=np.int64) - self.n0
        if self.role == "rate" and idx.size and idx.max() >= arr.size:
            raise RateExtrapolationError(
                f"tabulated rate defined up to n={self.n0 + arr.size - 1}, asked for n={self.n0 + int(idx.max())}"
            )
        return arr[np.minimum(idx, arr.size - 1)]

    def envelope(self):
        if self.role == "rate":
            return None
        return Envelope(self.table[-1], 0.0, 0.0, 1.0, max(self.n0 + len(self.table), 1), True)

    def tail_certificate(self, cutoff):
        if self.role == "rate":
            raise RateExtrapolationError("tabulated rates cannot be summed to infinity")
        return super().tail_certificate(cutoff)

    @property
    def direction(self):
        return self.declared

    @property
    def label(self):
        return f"Tabulated(len={len(self.table)}, n0={self.n0})"


@dataclass(frozen=True)
class Derived(Sequence):
    """A sequence given by a vectorized callable, optionally with an envelope."""

    fn: Callable[[np.ndarray], np.ndarray]
    n0: int = 1
    bound: Optional[Envelope] = None
    declared: Direction = Direction.UNCONSTRAINED
    name: str = "Derived"
    tail_fn: Optional[Callable[[int], float]] = field(default=None, compare=False)

    def values(self, n):
        return np.asarray(self.fn(np.asarray(n, dtype=np.int64)), dtype=float)

    def envelope(self):
        return self.bound

    def tail_certificate(self, cutoff):
        if self.tail_fn is not None:
            return self.tail_fn(cutoff)
        return super().tail_certificate(cutoff)

    @property
    def direction(self):
        return self.declared

    @property
    def label(self):
        return self.name


def product(*seqs: Sequence, name: Optional[str] = None) -> Derived:
    """Pointwise product with the product envelope when every factor has one."""
    n0 = max(s.n0 for s in seqs)
    envs = [s.envelope() for s in seqs]
    env = None
    if all(e is not None for e in envs):
        env = envs[0]
        for e in envs[1:]:
            env = env.times(e)

    def fn(n):
        out = np.ones(np.shape(n), dtype=float)
        for s in seqs:
            out = out * s.values(n)
        return out

    return Derived(fn, n0, env, Direction.UNCONSTRAINED, name or " * ".join(s.label for s in seqs))


def square(seq: Sequence) -> Sequence:
    """seq**2, staying inside the closed families where possible."""
    if isinstance(seq, Power):
        return Power(2.0 * seq.p, seq.scale**2, seq.n0)
    if isinstance(seq, ShiftedPower):
        return ShiftedPower(2.0 * seq.p, seq.shift, seq.scale**2, seq.n0)
    if isinstance(seq, Exponential):
        return Exponential(seq.b, 2.0 * seq.p, seq.scale**2, seq.n0)
    if isinstance(seq, Constant):
        return Constant(seq.c**2, seq.n0)
    return product(seq, seq, name=f"({seq.label})**2")


def _block_tails(seq: Sequence, n: np.ndarray) -> np.ndarray:
    """Upper bounds on sum_{m >= n_i} seq_m for an array of indices n_i."""
    n = np.asarray(n, dtype=np.int64)
    if n.size == 0:
        return np.zeros(0)
    lo, hi = int(n.min()), int(n.max())
    if hi - lo > MAX_TERMS:
        out = np.empty(n.shape)
        for i, m in enumerate(n.flat):
            out.flat[i] = tail_sum(seq, int(m)).value
        return out
    anchor_val = tail_sum(seq, hi).value
    if hi == lo:
        return np.full(n.shape, anchor_val)
    terms = seq.values(np.arange(lo, hi, dtype=np.int64))
    # T(m) = T(hi) + sum_{j=m}^{hi-1} seq_j, accumulated from the small end
    rev = np.cumsum(terms[::-1])[::-1]
    table = np.append(rev, 0.0) + anchor_val
    return table[n - lo]


def tail_sequence(seq: Sequence) -> Derived:
    """T(n) = sum_{m >= n} seq_m as a nonincreasing sequence (upper bounds)."""
    return Derived(lambda n: _block_tails(seq, n), seq.n0, None, Direction.NONINCREASING, f"tail({seq.label})")


def residual(c: Sequence) -> Derived:
    """r(n) = sum_{k > n} c_k**2 as a nonincreasing sequence for n >= c.n0.

    A contiguous block of indices is evaluated with one certified tail sum
    at the block end plus a reversed cumulative sum, so every value is an
    upper bound (the tail error is added).
    """
    c2 = square(c)

    def fn(n):
        return _block_tails(c2, np.asarray(n, dtype=np.int64) + 1)

    env = None
    e = c2.envelope()
    if e is not None:
        if e.rate == 0.0 and e.power < -1.0:
            # sum_{k > n} coef k^P <= coef int_n^inf x^P dx
            env = Envelope(e.coef / (-e.power - 1.0), e.power + 1.0, 0.0, 1.0, max(e.start - 1, 1), False)
        elif e.rate > 0.0 and e.shape == 1.0 and e.power <= 0.0:
            q = math.exp(-e.rate)
            env = Envelope(e.coef * q / (1.0 - q), 0.0, e.rate, 1.0, max(e.start - 1, 1), False)
    return Derived(fn, c.n0, env, Direction.NONINCREASING, f"residual({c.label})")


@dataclass(frozen=True)
class PartialSum:
    """S_{a,n0}(N) = sum_{n=0}^{N-1} a_{n0+n}, with S(0) = 0."""

    weight: Sequence
    n0: int

    def __post_init__(self):
        if self.n0 < self.weight.n0:
            raise SequenceError(f"partial sum starts at n0={self.n0} before the weight's first index {self.weight.n0}")


class SumValue(float):
    """A float that records whether the computation saturated (overflowed)."""

    saturated: bool

    def __new__(cls, value: float, saturated: bool = False):
        obj = super().__new__(cls, value)
        obj.saturated = saturated
        return obj


def partial_sum(ps: PartialSum, N: int) -> SumValue:
    """S_{a,n0}(N); geometric closed form for the Exponential family."""
    if int(N) != N or N < 0:
        raise SequenceError(f"N must be a nonnegative integer, got {N}")
    N = int(N)
    if N == 0:
        return SumValue(0.0)
    a = ps.weight
    with np.errstate(over="ignore", invalid="ignore"):
        if isinstance(a, Exponential) and a.log_ratio != 0.0:
            lr = a.log_ratio
            first = a.scale * math.exp(lr * ps.n0) if lr * ps.n0 < 709 else math.inf
            try:
                factor = math.expm1(lr * N) / math.expm1(lr)
            except OverflowError:
                factor = math.inf
            value = first * factor
        elif isinstance(a, Constant):
            value = a.c * N
        else:
            value = 0.0
            for start in range(0, N, _BLOCK):
                stop = min(N, start + _BLOCK)
                idx = np.arange(ps.n0 + start, ps.n0 + stop, dtype=np.int64)
                value += math.fsum(a.values(idx))
    if not math.isfinite(value):
        return SumValue(math.inf, saturated=True)
    return SumValue(value)


def partial_sum_table(ps: PartialSum, N: int) -> np.ndarray:
    """Array of S(0), ..., S(N) for repeated lookups (e.g. S_a(O) per path)."""
    idx = np.arange(ps.n0, ps.n0 + N, dtype=np.int64)
    with np.errstate(over="ignore"):
        terms = ps.weight.values(idx) if N > 0 else np.zeros(0)
    out = np.empty(N + 1)
    out[0] = 0.0
    np.cumsum(terms, out=out[1:])
    return out


def tail_sum(rate: Sequence, n: int) -> EvalResult:
    """sum_{m >= n} rate(m).

    The value is an upper bound on the sum and ``abs_error_bound`` bounds
    its distance to the true sum.
    """
    if n < rate.n0:
        raise SequenceError(f"tail_sum from n={n} before the rate's first index {rate.n0}")
    if isinstance(rate, Exponential):
        lr = rate.log_ratio
        if lr >= 0:
            raise DivergenceError(f"geometric rate with ratio {math.exp(lr)!r} >= 1 is not summable")
        value = rate.scale * math.exp(lr * n) / -math.expm1(lr) * (1.0 + 8.8e-16)
        return EvalResult(value, 8.8e-16 * value)
    if isinstance(rate, Power):
        if rate.p >= -1:
            raise DivergenceError(f"power rate n^{rate.p} is not summable (needs p < -1)")
        z = hurwitz_zeta(-rate.p, max(int(n), 1), tol=1e-13)
        return EvalResult(rate.scale * (z.value + z.abs_error_bound), 2.0 * rate.scale * z.abs_error_bound)
    if isinstance(rate, ShiftedPower) and float(rate.shift).is_integer():
        if rate.p >= -1:
            raise DivergenceError(f"power rate (n+{rate.shift})^{rate.p} is not summable (needs p < -1)")
        z = hurwitz_zeta(-rate.p, int(n) + int(rate.shift), tol=1e-13)
        return EvalResult(rate.scale * (z.value + z.abs_error_bound), 2.0 * rate.scale * z.abs_error_bound)
    if isinstance(rate, Constant):
        raise DivergenceError("constant rate is not summable")
    if isinstance(rate, LogWeight):
        # the tail decays like 1/ln^theta: sum a fixed number of terms and
        # bracket the remainder from both sides
        head = 0.0
        start = int(n)
        for lo in range(start, start + MAX_TERMS, 4 * _BLOCK):
            head += math.fsum(rate.values(np.arange(lo, lo + 4 * _BLOCK, dtype=np.int64)))
        last = start + MAX_TERMS - 1
        upper = rate.tail_certificate(last)
        lower = rate.tail_lower(last)
        return EvalResult(head + upper, upper - lower + 1e-15 * head)
    if isinstance(rate, Tabulated) and rate.role == "rate":
        raise RateExtrapolationError("tabulated rates cannot be summed to infinity")
    env = rate.envelope()
    if env is not None and env.certifies_divergence():
        raise DivergenceError(f"{rate.label} is not summable")
    return _series(rate.values, int(n), rate.tail_certificate, rate.label)


def _series(
    terms: Callable[[np.ndarray], np.ndarray],
    start: int,
    tail_bound: Callable[[int], Optional[float]],
    label: str,
) -> EvalResult:
    """Direct summation plus a tail majorant (or a flagged estimate without one)."""
    total = 0.0
    pos = start
    last_block = None
    while pos - start < MAX_TERMS:
        size = min(_BLOCK if pos - start < _BLOCK * 4 else 4 * _BLOCK, MAX_TERMS - (pos - start))
        idx = np.arange(pos, pos + size, dtype=np.int64)
        vals = terms(idx)
        if not np.all(np.isfinite(vals)):
            raise DivergenceError(f"{label}: non-finite term", int(idx[np.argmax(~np.isfinite(vals))]))
        block = math.fsum(vals)
        total += block
        pos += size
        if total > DIVERGENCE_THRESHOLD:
            cums = np.cumsum(vals) + (total - block)
            raise DivergenceError(f"{label}: partial sums exceed {DIVERGENCE_THRESHOLD:g}", int(idx[np.argmax(cums > DIVERGENCE_THRESHOLD)]))
        last_block = vals
        bound = tail_bound(pos - 1)
        if bound is not None and bound <= REL_TOL * total:
            break
        if bound is not None and math.isinf(bound):
            raise DivergenceError(f"{label}: tail majorant is infinite")
    bound = tail_bound(pos - 1)
    if bound is not None:
        return EvalResult(total + bound, bound + 1e-15 * total)
    est = _tail_estimate(last_block, pos)
    if est is None:
        raise DivergenceError(f"{label}: terms do not decay fast enough to be summable", pos)
    return EvalResult(total + est, est + 1e-15 * total, certified=False)


def _tail_estimate(vals: Optional[np.ndarray], pos: int) -> Optional[float]:
    """Heuristic tail from the decay of the last block (power-law fit)."""
    if vals is None or vals.size < 16:
        return 0.0
    a, b = vals[vals.size // 2 - 1], vals[-1]
    if b <= 0:
        return 0.0
    n1, n2 = pos - vals.size // 2 - 1, pos - 1
    slope = math.log(a / b) / math.log(n2 / n1) if a > b else 0.0
    if slope <= 1.05:
        return None
    return 2.0 * b * n2 / (slope - 1.0)


def tradeoff_constant(
    a: Sequence,
    rate: Sequence,
    n0: int,
    threshold: float = DIVERGENCE_THRESHOLD,
    rate_lower: Optional[Envelope] = None,
) -> EvalResult:
    """K(a, rate, n0) = sum_{n >= n0} a_n sum_{m >= n} rate_m, as an upper bound.

    Swapping the order of summation gives K = sum_m rate_m A(m) with
    A(m) = a_{n0} + ... + a_m.  Beyond the cutoff M, A(m) <= A(M) + m a_m,
    so the remainder is at most A(M) * R(M) + sum_{m > M} m a_m rate_m, where
    R(M) is the rate's tail majorant and the last sum is bounded through the
    product envelope.

    Raises DivergenceError when the partial sums pass ``threshold`` (the
    error carries that index) or when exact envelopes certify divergence.
    ``rate_lower`` is an optional envelope known to lie below the rate; it
    lets non-exact rates certify divergence as well.
    """
    if n0 < max(a.n0, rate.n0):
        raise SequenceError(f"n0={n0} precedes the sequences' first indices")
    require_direction(a, Direction.NONDECREASING, "weight a")
    if isinstance(rate, Tabulated) and rate.role == "rate":
        raise RateExtrapolationError("tabulated rates cannot be summed to infinity")

    r_env = rate.envelope()
    a_env = a.envelope()
    if r_env is not None and r_env.certifies_divergence():
        raise DivergenceError(f"{rate.label} is not summable")
    prod_env = None
    certified_divergent = False
    if rate_lower is not None and not rate_lower.summable():
        raise DivergenceError(f"{rate.label} is not summable (certified by a lower envelope)")
    if r_env is not None and a_env is not None:
        prod_env = Envelope(1.0, 1.0, 0.0, 1.0, 1, True).times(a_env).times(r_env)
    r_low = rate_lower if rate_lower is not None else (r_env if r_env is not None and r_env.exact else None)
    if r_low is not None and a_env is not None and a_env.exact:
        r_low = Envelope(r_low.coef, r_low.power, r_low.rate, r_low.shape, r_low.start, True)
        # lower bound on A(m): a_m always, and order m**(power+1) for
        # polynomially growing weights
        if a_env.rate == 0.0 and a_env.power >= 0.0:
            lower = Envelope(a_env.coef, a_env.power + 1.0, 0.0, 1.0, 1, True).times(r_low)
        else:
            lower = a_env.times(r_low)
        certified_divergent = lower.certifies_divergence()

    def remainder(cutoff: int, big_a: float) -> Optional[float]:
        r_tail = rate.tail_certificate(cutoff)
        if r_tail is None or prod_env is None:
            return None
        if cutoff + 1 < prod_env.start:
            head_idx = np.arange(cutoff + 1, prod_env.start, dtype=np.int64)
            head = float(np.sum(head_idx * a.values(head_idx) * rate.values(head_idx)))
            return big_a * r_tail + head + prod_env.tail(prod_env.start - 1)
        return big_a * r_tail + prod_env.tail(cutoff)

    total = 0.0
    big_a = 0.0
    pos = n0
    last_terms = None
    while pos - n0 < MAX_TERMS:
        size = min(_BLOCK if pos - n0 < 4 * _BLOCK else 4 * _BLOCK, MAX_TERMS - (pos - n0))
        idx = np.arange(pos, pos + size, dtype=np.int64)
        with np.errstate(over="ignore", invalid="ignore"):
            av = a.values(idx)
            rv = rate.values(idx)
            cum_a = big_a + np.cumsum(av)
            terms = rv * cum_a
        if not np.all(np.isfinite(terms)):
            raise DivergenceError("non-finite (overflowing) term in the double sum", int(idx[np.argmax(~np.isfinite(terms))]))
        block = math.fsum(terms)
        if total + block > threshold:
            cums = total + np.cumsum(terms)
            raise DivergenceError(f"partial sums of K exceed {threshold:g}", int(idx[np.argmax(cums > threshold)]))
        total += block
        big_a = float(cum_a[-1])
        pos += size
        last_terms = terms
        if certified_divergent:
            break
        rem = remainder(pos - 1, big_a)
        if rem is not None and rem <= REL_TOL * max(total, 1e-300):
            break
        if rem is not None and total == 0.0 and rem == 0.0:
            break
    if certified_divergent:
        raise DivergenceError(
            f"K({a.label}, {rate.label}) diverges (certified by a lower envelope); "
            f"partial sums reached {total:.6g} after {pos - n0} terms without passing {threshold:g}"
        )
    rem = remainder(pos - 1, big_a)
    if rem is not None:
        return EvalResult(total + rem, rem + 1e-15 * total)
    est = _tail_estimate(last_terms, pos)
    if est is None:
        raise DivergenceError(f"K({a.label}, {rate.label}): terms do not decay fast enough", pos)
    return EvalResult(total + est, est + 1e-15 * total, certified=False)
