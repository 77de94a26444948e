"""Closed-form bounds on mean deviation frequencies, tails and rates.

Every public operation returns :class:`BoundReport` objects.  A report is
``valid`` only when all preconditions of the underlying inequality hold; an
invalid report carries ``value = inf`` and a human readable ``reason``.
Where a published constant turned out to be unsupported by its own
derivation, the value is the rigorous version and the printed form is kept
in ``details`` for comparison.

Notation used throughout: O counts the indices n >= n0 at which a process
deviates from its limit by more than eps_n, a_n is a nondecreasing weight
with partial sums S_a(N) = a_{n0} + ... + a_{n0+N-1}, and
K(a, rate, n0) = sum_{n >= n0} a_n sum_{m >= n} rate_m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence as Seq

import numpy as np

from .sequences import (
    Constant,
    Derived,
    Direction,
    DivergenceError,
    Envelope,
    LogPower,
    LogWeight,
    Power,
    Sequence,
    SequenceError,
    ShiftedPower,
    Weibull,
    _series,
    partial_sum,
    PartialSum,
    residual,
    tail_sequence,
    tail_sum,
    tradeoff_constant,
)
from .specfn import DomainError, digamma, hurwitz_zeta, lambert_w0, upper_incomplete_gamma

E98 = 2.0 * math.exp(9.0 / 8.0)  # the factor 2 e^{9/8} of the exponential tail lemma


class Quantity(str, Enum):
    MOMENT_SA = "moment E[S_a(O)]"
    MOMENT_POWER = "moment E[O^(p+1)]"
    EXP_MOMENT = "exp-moment E[b^(-pO)]"
    TAIL = "tail P(O>=k)"
    RATE = "pointwise rate P(d(X_n,X)>eps_n)"
    KY_FAN = "ky_fan d_KF upper bound"


@dataclass(frozen=True)
class BoundReport:
    bound_id: str
    quantity: Quantity
    params: dict
    value: float
    valid: bool = True
    reason: str = ""
    optimizer: Optional[tuple] = None
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.valid:
            object.__setattr__(self, "value", math.inf)
        elif math.isnan(self.value) or self.value < 0:
            raise ValueError(f"{self.bound_id}: bound value must be >= 0, got {self.value}")

    @property
    def display_value(self) -> float:
        """The value as shown to users: probabilities are clipped to [0, 1]."""
        if self.quantity in (Quantity.TAIL, Quantity.RATE) and self.valid:
            return min(self.value, 1.0)
        return self.value

    def record(self) -> dict:
        """Flat record for CSV / JSON output."""
        return {
            "bound_id": self.bound_id,
            "quantity": self.quantity.value,
            "params": _describe(self.params),
            "value": self.value,
            "valid": self.valid,
            "reason": self.reason,
            "optimizer": "" if self.optimizer is None else f"{self.optimizer[0]}={self.optimizer[1]!r}",
        }


def _describe(params: dict) -> str:
    parts = []
    for key, val in params.items():
        if isinstance(val, Sequence):
            parts.append(f"{key}={val.label}")
        else:
            parts.append(f"{key}={val!r}")
    return "; ".join(parts)


def _invalid(bound_id: str, quantity: Quantity, params: dict, reason: str, **details) -> BoundReport:
    return BoundReport(bound_id, quantity, params, math.inf, False, reason, None, details)


def _problems(checks: Seq[tuple[bool, str]]) -> str:
    return "; ".join(msg for ok, msg in checks if not ok)


def _upper(res) -> float:
    return res.value + res.abs_error_bound


def _zeta(z: float, n0: int) -> float:
    return _upper(hurwitz_zeta(z, n0))


# --- decay families ---------------------------------------------------------


@dataclass(frozen=True)
class PolyDecay:
    """Deviation probabilities with tails sum_{m >= n} P(A_m) <= c n^{-(q-1)}."""

    c: float
    q: float

    def rate(self, n0: int = 1) -> Sequence:
        return Power(-(self.q - 1.0), self.c, n0)


@dataclass(frozen=True)
class ExpDecay:
    """Deviation probabilities with tails sum_{m >= n} P(A_m) <= c b^n."""

    c: float
    b: float

    def rate(self, n0: int = 1) -> Sequence:
        from .sequences import Exponential

        return Exponential(self.b, 1.0, self.c, n0)


@dataclass(frozen=True)
class WeibullDecay:
    """Deviation probabilities P(A_n) <= c b^{n^alpha}."""

    c: float
    b: float
    alpha: float

    def rate(self, n0: int = 1) -> Sequence:
        return Weibull(self.b, 1.0, self.alpha, self.c, n0)


def _decay_checks(decay, p: Optional[float]) -> list[tuple[bool, str]]:
    checks = [(decay.c > 0, "c must be positive")]
    if isinstance(decay, PolyDecay):
        checks.append((decay.q > 2, "q must exceed 2"))
        if p is not None:
            checks.append((0 <= p < decay.q - 2, f"p must lie in [0, q-2) = [0, {decay.q - 2!r})"))
    else:
        checks.append((0 < decay.b < 1, "b must lie in (0, 1)"))
        if p is not None:
            checks.append((0 < p < 1, "p must lie in (0, 1)"))
        if isinstance(decay, WeibullDecay):
            checks.append((0 < decay.alpha < 1, "alpha must lie in (0, 1)"))
    return checks


def _decay_params(decay, **extra) -> dict:
    params = {"family": type(decay).__name__}
    params.update({k: v for k, v in vars(decay).items()})
    params.update(extra)
    return params


def _decay_id(decay, what: str) -> str:
    family = {PolyDecay: "poly", ExpDecay: "exp", WeibullDecay: "weibull"}[type(decay)]
    return f"decay.{family}.{what}"


def _poly_moment(c: float, q: float, p: float, n0: int) -> float:
    return c * q * _zeta(q - p - 1.0, n0)


def decay_moment_bound(decay, p: float, n0: int = 1) -> BoundReport:
    """Moment bound implied by a decay profile of the deviation probabilities.

    Poly: E[O^{p+1}] <= c q zeta(q-p-1; n0).
    Exp: E[b^{-pO}] <= 1 + c b^{n0-1} / (1 - b^{1-p}).
    Weibull: E[S_a(O)] <= K(b, p, alpha, n0) for a_n = b^{-p n^alpha}.
    """
    bid = _decay_id(decay, "moment")
    params = _decay_params(decay, p=p, n0=n0)
    checks = _decay_checks(decay, p) + [(n0 >= 1, "n0 must be >= 1")]
    if isinstance(decay, PolyDecay):
        quantity = Quantity.MOMENT_POWER
    elif isinstance(decay, ExpDecay):
        quantity = Quantity.EXP_MOMENT
    else:
        quantity = Quantity.MOMENT_SA
    bad = _problems(checks)
    if bad:
        return _invalid(bid, quantity, params, bad)
    if isinstance(decay, PolyDecay):
        return BoundReport(bid, quantity, params, _poly_moment(decay.c, decay.q, p, n0))
    if isinstance(decay, ExpDecay):
        value = 1.0 + decay.c * decay.b ** (n0 - 1) / (1.0 - decay.b ** (1.0 - p))
        return BoundReport(bid, quantity, params, value)
    k_const = weibull_constant(decay.c, decay.b, p, decay.alpha, n0)
    exp_moment = k_const + decay.b ** (-p * (n0 - 1) ** decay.alpha)
    return BoundReport(
        bid,
        quantity,
        params,
        k_const,
        details={"exp_moment_bound": exp_moment, "weight": "a_n = b^(-p n^alpha)"},
    )


def decay_tail_bound(decay, n0: int, k: int, optimize: bool = False, p: Optional[float] = None) -> BoundReport:
    """Bound on P(O >= k) for a decay profile.

    Without ``optimize`` the tail is Markov's inequality applied to the moment
    bound at the given p (the exponential family has its own p-free form).
    With ``optimize`` the free parameter is chosen per k.
    """
    bid = _decay_id(decay, "tail")
    params = _decay_params(decay, n0=n0, k=k, optimize=optimize, p=p)
    checks = _decay_checks(decay, None) + [(n0 >= 1, "n0 must be >= 1"), (k >= 1, "k must be >= 1")]
    if isinstance(decay, WeibullDecay) and optimize:
        checks.append((k >= 2, "the optimized Weibull tail needs k >= 2"))
    if not optimize and not isinstance(decay, ExpDecay):
        if p is None:
            checks.append((False, "p is required unless optimize=True"))
        else:
            checks += _decay_checks(decay, p)[1:]
    bad = _problems(checks)
    if bad:
        return _invalid(bid, Quantity.TAIL, params, bad)

    if isinstance(decay, ExpDecay):
        value = E98 * (k * (decay.c * decay.b ** (n0 - 1) + 1.0) + 1.0) * decay.b**k
        return BoundReport(bid, Quantity.TAIL, params, value)

    if isinstance(decay, PolyDecay):
        if not optimize:
            value = k ** -(p + 1.0) * _poly_moment(decay.c, decay.q, p, n0)
            return BoundReport(bid, Quantity.TAIL, params, value)
        return _poly_optimized_tail(bid, params, decay.c, decay.q, n0, k)

    c, b, alpha = decay.c, decay.b, decay.alpha
    if not optimize:
        k_const = weibull_constant(c, b, p, alpha, n0)
        s_k = partial_sum(PartialSum(Weibull(b, -p, alpha, 1.0, n0), n0), k)
        value = k_const / s_k if not s_k.saturated else 0.0
        return BoundReport(bid, Quantity.TAIL, params, value,
                           details={"K": k_const, "S_a(k)": float(s_k),
                                    "single_term_form": b ** (p * (k - 1) ** alpha) * k_const})
    value, d, big_d = weibull_optimized_tail(c, b, alpha, n0, k)
    p_star = 1.0 - (k - 1) ** -alpha
    return BoundReport(
        bid,
        Quantity.TAIL,
        params,
        value,
        optimizer=("p", p_star),
        details={"d": d, "D": big_d, "assembly": "d, D assembled from the Weibull constant at p = 1 - (k-1)^(-alpha)"},
    )


def poly_tail_optimum(q: float, n0: int, k: int) -> Optional[float]:
    """Closed-form optimizer p* = q - 2 - 1/(ln k - psi(n0)), or None below its range."""
    psi = digamma(n0).value
    if math.log(k) < 1.0 / (q - 2.0) + psi:
        return None
    return q - 2.0 - 1.0 / (math.log(k) - psi)


def _poly_optimized_tail(bid: str, params: dict, c: float, q: float, n0: int, k: int) -> BoundReport:
    psi = digamma(n0).value
    p_star = poly_tail_optimum(q, n0, k)
    details: dict = {}
    if p_star is not None:
        value = k ** -(p_star + 1.0) * _poly_moment(c, q, p_star, n0)
        c1 = c * q * math.exp((q - 2.0) * psi) * n0 ** (q - 2.0)
        # informational: this simplification is not an upper bound in general
        details["closed_form"] = c1 * k ** -(q - 1.0) * (math.log(k) + 1.0 / n0 - psi)
        details["c1"] = c1
        details["method"] = "closed-form optimizer"
    else:
        from scipy.optimize import minimize_scalar

        lo, hi = 1e-6, q - 2.0 - 1e-6

        def log_bound(p):
            return -(p + 1.0) * math.log(k) + math.log(_poly_moment(c, q, p, n0))

        res = minimize_scalar(log_bound, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
        p_star = float(res.x)
        value = math.exp(log_bound(p_star))
        details["method"] = "bounded scalar search (k below the closed-form range)"
    return BoundReport(bid, Quantity.TAIL, params, value, optimizer=("p", p_star), details=details)


# --- the Weibull constant ---------------------------------------------------

_WEIBULL_EXACT_TERMS = 20000
_LOG_UNDERFLOW = 700.0


def weibull_envelope_coefficient(b: float, alpha: float) -> float:
    """A with Gamma(1/alpha, L n^alpha) / (alpha L^{1/alpha}) <= A n^{1-alpha} b^{n^alpha}, n >= 1.

    Takes the larger of the classical asymptotic coefficient and the value
    obtained from the monotone ratio Gamma(s, x) e^x x^{1-s}, which is exact
    at n = 1 and valid for every n >= 1.
    """
    big_l = -math.log(b)
    s = 1.0 / alpha
    a_asym = (1.0 + (s - 1.0) / big_l) / (alpha * big_l)
    g = upper_incomplete_gamma(s, big_l)
    a_safe = _upper(g) * math.exp(big_l) * big_l ** (1.0 - s) / (alpha * big_l)
    return max(a_asym, a_safe)


def weibull_constant(c: float, b: float, p: float, alpha: float, n0: int = 1) -> float:
    """K(b, p, alpha, n0) = sum_{n >= n0} b^{-p n^alpha} * (bound on sum_{m >= n} c b^{m^alpha}).

    The inner sum is bounded by c [b^{n^alpha} + Gamma(1/alpha, L n^alpha) / (alpha L^{1/alpha})]
    with L = -ln b (first term plus the integral from n).  Terms are summed
    exactly while they are representable; the remainder uses the envelope
    c (1 + A n^{1-alpha}) b^{(1-p) n^alpha}.  The result is an upper bound.
    """
    big_l = -math.log(b)
    s = 1.0 / alpha
    scale = 1.0 / (alpha * big_l**s)
    coef_a = weibull_envelope_coefficient(b, alpha)
    mu = (1.0 - p) * big_l
    head = Envelope(c, 0.0, mu, alpha, 1, False)
    growth = Envelope(c * coef_a, 1.0 - alpha, mu, alpha, 1, False)

    def remainder(last: int) -> float:
        return head.tail(last) + growth.tail(last)

    last_exact = min(n0 + _WEIBULL_EXACT_TERMS - 1, int((_LOG_UNDERFLOW / big_l) ** s))
    terms = []
    n = n0
    total = 0.0
    while n <= last_exact:
        x = big_l * n**alpha
        g = upper_incomplete_gamma(s, x)
        inner = math.exp(-x) + scale * _upper(g)
        terms.append(c * math.exp(p * x) * inner)
        if len(terms) % 256 == 0:
            total = math.fsum(terms)
            if remainder(n) <= 1e-13 * total:
                break
        n += 1
    total = math.fsum(terms)
    return total + remainder(max(n0 - 1, n if n <= last_exact else last_exact))


def weibull_optimized_tail(c: float, b: float, alpha: float, n0: int, k: int) -> tuple[float, float, float]:
    """(d + D (k-1)^{2-alpha}) b^{(k-1)^alpha} with its constants d and D.

    Evaluates the Markov tail b^{p(k-1)^alpha} K at p* = 1 - (k-1)^{-alpha}.
    The n = n0 term of the envelope gives d; the rest is bounded by the
    integral of x^{1-alpha} b^{(1-p*) x^alpha} over (0, inf) plus its peak,
    which yields D.
    """
    big_l = -math.log(b)
    coef_a = weibull_envelope_coefficient(b, alpha)
    c_total = c * (1.0 + coef_a)
    d = c * (1.0 + coef_a * n0 ** (1.0 - alpha)) / b
    integral = math.gamma(2.0 / alpha - 1.0) / (alpha * big_l ** (2.0 / alpha - 1.0))
    peak = ((1.0 - alpha) / (alpha * big_l)) ** ((1.0 - alpha) / alpha) * math.exp(-(1.0 - alpha) / alpha)
    big_d = c_total * (integral + peak) / b
    value = (d + big_d * (k - 1) ** (2.0 - alpha)) * b ** ((k - 1) ** alpha)
    return value, d, big_d


# --- L2 martingale rates ----------------------------------------------------


def pythagoras_rate_sequence(pi: Sequence, eps: Sequence) -> Derived:
    """pi_n / eps_n^2, the Chebyshev rate for an L2 martingale with residual variance pi_n."""
    env = None
    pe, ee = pi.envelope(), eps.envelope()
    if pe is not None and ee is not None and ee.exact:
        env = pe.times(ee.raised(-2.0))
    return Derived(
        lambda n: pi.values(n) / eps.values(n) ** 2,
        max(pi.n0, eps.n0),
        env,
        Direction.UNCONSTRAINED,
        f"{pi.label} / ({eps.label})^2",
    )


def _rate_report(bid: str, params: dict, rate: Sequence, n: int) -> BoundReport:
    return BoundReport(bid, Quantity.RATE, params, float(rate(n)))


def _constant_report(bid: str, params: dict, a: Sequence, rate: Sequence, n0: int, factor: float = 1.0,
                     rate_lower: Optional[Envelope] = None, **details) -> BoundReport:
    try:
        k_const = tradeoff_constant(a, rate, n0, rate_lower=rate_lower)
    except DivergenceError as err:
        return _invalid(bid, Quantity.MOMENT_SA, params, f"diverges: {err}", divergence_index=err.index, **details)
    details = dict(details, abs_error_bound=factor * k_const.abs_error_bound, certified=k_const.certified)
    return BoundReport(bid, Quantity.MOMENT_SA, params, factor * k_const.value, details=details)


def pythagoras_rate(pi: Sequence, eps: Sequence, a: Sequence, n0: int = 1,
                    n: Optional[int] = None) -> tuple[BoundReport, BoundReport]:
    """Chebyshev rate at index n and the tradeoff constant K(a, pi/eps^2, n0)."""
    params = {"pi": pi, "eps": eps, "a": a, "n0": n0}
    n = n0 if n is None else n
    checks = [
        (pi.is_monotone(Direction.NONINCREASING), "pi must be nonincreasing"),
        (eps.is_monotone(Direction.NONINCREASING), "eps must be nonincreasing"),
        (a.is_monotone(Direction.NONDECREASING), "a must be nondecreasing"),
    ]
    bad = _problems(checks)
    if bad:
        return (_invalid("pythagoras.rate", Quantity.RATE, params, bad),
                _invalid("pythagoras.constant", Quantity.MOMENT_SA, params, bad))
    rate = pythagoras_rate_sequence(pi, eps)
    return (
        _rate_report("pythagoras.rate", dict(params, n=n), rate, n),
        _constant_report("pythagoras.constant", params, a, rate, n0),
    )


# --- Azuma-Hoeffding --------------------------------------------------------


def _gaussian_rate_envelope(r_env: Optional[Envelope], eps: Sequence, factor: float,
                            extra_power: float) -> Optional[Envelope]:
    """Envelope of exp(-factor m^extra eps_m^2 / r(m)) from envelopes of r and eps."""
    e = eps.envelope()
    if r_env is None or e is None or not e.exact or e.rate != 0.0:
        return None
    exponent_power = 2.0 * e.power + extra_power
    if r_env.rate == 0.0:
        shape = exponent_power - r_env.power
        if shape <= 0:
            return None
        return Envelope(1.0, 0.0, factor * e.coef**2 / r_env.coef, shape, max(r_env.start, e.start), False)
    if r_env.shape == 1.0 and r_env.power <= 0.0:
        # exp(-y) <= 1/y
        return Envelope(r_env.coef / (factor * e.coef**2), r_env.power - exponent_power, r_env.rate, 1.0,
                        max(r_env.start, e.start), False)
    return None


def _gaussian_rate(r_seq: Sequence, eps: Sequence, factor: float, extra_power: float, name: str) -> Derived:
    def fn(n):
        r = r_seq.values(n)
        y = factor * np.asarray(n, dtype=float) ** extra_power * eps.values(n) ** 2
        with np.errstate(divide="ignore"):
            return np.where(r > 0, np.exp(-y / np.where(r > 0, r, 1.0)), 0.0)

    env = _gaussian_rate_envelope(r_seq.envelope(), eps, factor, extra_power)
    return Derived(fn, max(r_seq.n0, eps.n0), env, Direction.UNCONSTRAINED, name)


def azuma_residual(c_seq: Sequence) -> Sequence:
    """r(n) = sum_{k > n} c_k^2."""
    return residual(c_seq)


def azuma_rate_sequence(c_seq: Sequence, eps: Sequence, r_seq: Optional[Sequence] = None) -> Derived:
    """exp(-eps_n^2 / (2 r(n))), the one-sided closure rate."""
    r_seq = azuma_residual(c_seq) if r_seq is None else r_seq
    return _gaussian_rate(r_seq, eps, 0.5, 0.0, f"azuma_rate({c_seq.label}, {eps.label})")


def kyfan_eta(r: float) -> float:
    """eta = sqrt(r W(1/r)), the solution of eta = exp(-eta^2 / (2r)); 0 when r = 0."""
    if r < 0:
        raise DomainError("r must be nonnegative")
    if r == 0.0:
        return 0.0
    return math.sqrt(r * lambert_w0(1.0 / r).value)


def azuma_finite_n(c_seq: Sequence, eps: float, n: int, start: int = 1, two_sided: bool = False) -> BoundReport:
    """Azuma-Hoeffding tail P(M_n - M_0 >= eps) <= exp(-eps^2 / (2 sum_{k=start}^{n} c_k^2))."""
    params = {"c": c_seq, "eps": eps, "n": n, "start": start, "two_sided": two_sided}
    if not (eps > 0 and n >= start >= c_seq.n0):
        return _invalid("azuma.finite_n", Quantity.RATE, params, "needs eps > 0 and c_seq.n0 <= start <= n")
    ks = np.arange(start, n + 1, dtype=np.int64)
    total = math.fsum(c_seq.values(ks) ** 2)
    value = math.exp(-eps * eps / (2.0 * total))
    if two_sided:
        value *= 2.0
    return BoundReport("azuma.finite_n", Quantity.RATE, params, value, details={"sum_c2": total})


def azuma_suite(c_seq: Sequence, eps: Sequence, a: Sequence, n0: int = 1,
                n: Optional[int] = None) -> tuple[BoundReport, BoundReport, BoundReport]:
    """Closure rate at n, tradeoff constant 2K(a, rate, n0) and the Ky Fan level eta_n."""
    params = {"c": c_seq, "eps": eps, "a": a, "n0": n0}
    n = n0 if n is None else n
    checks = [
        (eps.is_monotone(Direction.NONINCREASING), "eps must be nonincreasing"),
        (a.is_monotone(Direction.NONDECREASING), "a must be nondecreasing"),
    ]
    try:
        r_n = float(azuma_residual(c_seq)(n))
    except DivergenceError as err:
        checks.append((False, f"sum of c_k^2 diverges: {err}"))
    bad = _problems(checks)
    if bad:
        return (_invalid("azuma.closure_rate", Quantity.RATE, params, bad),
                _invalid("azuma.constant", Quantity.MOMENT_SA, params, bad),
                _invalid("azuma.ky_fan", Quantity.KY_FAN, params, bad))
    r_seq = azuma_residual(c_seq)
    rate = azuma_rate_sequence(c_seq, eps, r_seq)
    eta = kyfan_eta(r_n)
    return (
        BoundReport("azuma.closure_rate", Quantity.RATE, dict(params, n=n), float(rate(n)),
                    details={"r_n": r_n, "two_sided_rate": 2.0 * float(rate(n))}),
        _constant_report("azuma.constant", params, a, rate, n0, factor=2.0),
        BoundReport("azuma.ky_fan", Quantity.KY_FAN, dict(params, n=n), eta,
                    details={"r_n": r_n, "fixed_point_residual": abs(eta - math.exp(-eta * eta / (2 * r_n))) if r_n > 0 else 0.0}),
    )


def azuma_special_cases(C: float, q: float, case: str, *, n0: int = 1, p: Optional[float] = None,
                        k: Optional[int] = None, theta: Optional[float] = None, eps: Optional[float] = None,
                        n: Optional[int] = None) -> BoundReport:
    """Closed forms of the Azuma closure when r(n) <= C / (n+1)^q.

    case "a": eps_n = sqrt(2C(2+theta) ln(n+1)/(n+1)^q); moment E[O^{p+1}] or its tail.
    case "b": fixed eps, q in (0,1); Weibull moment / optimized tail.
    case "c": fixed eps, q = 1; exponential moment / tail.
    case "d": Ky Fan level eta_n = sqrt(C W((n+1)^q / C) / (n+1)^q).
    """
    params = {"C": C, "q": q, "case": case, "n0": n0, "p": p, "k": k, "theta": theta, "eps": eps, "n": n}
    bid = f"azuma_closure.{case}"
    checks = [(C > 0, "C must be positive"), (0 < q <= 1, "q must lie in (0, 1]"), (n0 >= 1, "n0 must be >= 1")]
    if k is not None:
        checks.append((k >= 1, "k must be >= 1"))
    if case == "a":
        quantity = Quantity.MOMENT_POWER if k is None else Quantity.TAIL
        checks.append((theta is not None and theta > 0, "case a needs theta > 0"))
        if k is None or p is not None:
            checks.append((p is not None and theta is not None and 0 < p < theta, "case a needs 0 < p < theta"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, quantity, params, bad)
        return _azuma_case_a(bid, params, theta, p, n0, k)
    if case == "b":
        quantity = Quantity.MOMENT_SA if k is None else Quantity.TAIL
        checks.append((q < 1, "case b needs q in (0, 1)"))
        checks.append((eps is not None and eps > 0, "case b needs eps > 0"))
        if k is None:
            checks.append((p is not None and 0 < p < 1, "case b moment needs p in (0, 1)"))
        else:
            checks.append((k >= 2, "case b tail needs k >= 2"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, quantity, params, bad)
        b = math.exp(-eps * eps / (2.0 * C))
        if k is None:
            value = 2.0 * weibull_constant(1.0, b, p, q, n0)
            return BoundReport(bid, quantity, params, value, details={"b": b, "alpha": q})
        value, d, big_d = weibull_optimized_tail(1.0, b, q, n0, k)
        return BoundReport(bid, quantity, params, 2.0 * value, optimizer=("p", 1.0 - (k - 1) ** -q),
                           details={"b": b, "d": 2.0 * d, "D": 2.0 * big_d})
    if case == "c":
        quantity = Quantity.EXP_MOMENT if k is None else Quantity.TAIL
        checks.append((q == 1, "case c needs q = 1"))
        checks.append((eps is not None and eps > 0, "case c needs eps > 0"))
        if k is None:
            checks.append((p is not None and 0 < p < 1, "case c moment needs p in (0, 1)"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, quantity, params, bad)
        lam = eps * eps / (2.0 * C)
        if k is None:
            value = 1.0 + 2.0 * math.exp(-lam * (n0 - 1)) / (1.0 - math.exp(-lam * (1.0 - p)))
            printed = 1.0 + 2.0 * math.exp(-lam * (n0 - 1)) / (1.0 - math.exp(-lam * (1.0 - p))) / math.exp(lam)
            return BoundReport(bid, quantity, params, value,
                               details={"lambda": lam, "moment_of": "E[exp(lambda p O)]", "printed_form": printed})
        value = E98 * (k * (2.0 * math.exp(-lam * (n0 - 1)) + 1.0) + 1.0) * math.exp(-lam * k)
        return BoundReport(bid, quantity, params, value, details={"lambda": lam})
    if case == "d":
        n = 0 if n is None else n
        checks.append((n >= 0, "n must be >= 0"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, Quantity.KY_FAN, params, bad)
        x = (n + 1.0) ** q
        value = math.sqrt(C * lambert_w0(x / C).value / x)
        return BoundReport(bid, Quantity.KY_FAN, params, value)
    return _invalid(bid, Quantity.MOMENT_SA, params, f"unknown case {case!r} (expected a, b, c or d)")


def _azuma_case_a(bid: str, params: dict, theta: float, p: Optional[float], n0: int, k: Optional[int]) -> BoundReport:
    # the two-sided rate is 2 (n+1)^{-(2+theta)}, whose tails are at most
    # (2/(1+theta)) n^{-(1+theta)}: a polynomial decay with q - 1 = 1 + theta
    def moment(pp: float) -> float:
        return 2.0 * (pp + 1.0) / (1.0 + theta) * _zeta(1.0 + theta - pp, n0)

    printed = lambda pp: 2.0 * theta * _zeta(1.0 + theta - pp, n0)  # noqa: E731
    if k is None:
        return BoundReport(bid, Quantity.MOMENT_POWER, params, moment(p), details={"printed_form": printed(p)})
    if p is not None:
        return BoundReport(bid, Quantity.TAIL, params, k ** -(p + 1.0) * moment(p))
    psi = digamma(n0).value
    if math.log(k) >= psi + 1.0 / theta:
        p_star = theta - 1.0 / (math.log(k) - psi)
    else:
        from scipy.optimize import minimize_scalar

        res = minimize_scalar(lambda pp: -(pp + 1.0) * math.log(k) + math.log(moment(pp)),
                              bounds=(1e-6, theta - 1e-6), method="bounded", options={"xatol": 1e-8})
        p_star = float(res.x)
    p_star = min(max(p_star, 1e-6), theta - 1e-6)
    return BoundReport(bid, Quantity.TAIL, params, k ** -(p_star + 1.0) * moment(p_star), optimizer=("p", p_star))


# --- strong laws ------------------------------------------------------------


def slln_lp_constant(p: float) -> float:
    """C_p = [8(p-1) max(1, 2^{p-1})]^p of the Lp martingale moment inequality."""
    if p < 2:
        raise DomainError("C_p is defined for p >= 2")
    return (8.0 * (p - 1.0) * max(1.0, 2.0 ** (p - 1.0))) ** p


def _lp_rate(beta: Sequence, eps: Sequence, p: float, scale: float, name: str) -> Derived:
    """scale * beta_n / (eps_n^p n^{p/2-1})."""
    env = None
    be, ee = beta.envelope(), eps.envelope()
    npow = Envelope(scale, -(p / 2.0 - 1.0), 0.0, 1.0, 1, True)
    if be is not None and ee is not None and ee.exact:
        env = be.times(ee.raised(-p)).times(npow)
    fn = lambda n: scale * beta.values(n) / (eps.values(n) ** p * np.asarray(n, dtype=float) ** (p / 2.0 - 1.0))  # noqa: E731
    return Derived(fn, max(beta.n0, eps.n0, 1), env, Direction.UNCONSTRAINED, name)


def slln_lp_bound(p: float, beta: Sequence, eps: Sequence, a: Sequence, n0: int = 1,
                  n: Optional[int] = None) -> tuple[BoundReport, BoundReport]:
    """Strong-law rate from Lp moments: rate C_p beta_n/(eps_n^p n^{p/2-1}) and C_p K_{a,eps,p}."""
    params = {"p": p, "beta": beta, "eps": eps, "a": a, "n0": n0}
    n = n0 if n is None else n
    if not p >= 2:
        return (_invalid("slln_lp.rate", Quantity.RATE, params, "p must be >= 2"),
                _invalid("slln_lp.constant", Quantity.MOMENT_SA, params, "p must be >= 2"))
    c_p = slln_lp_constant(p)
    inner = _lp_rate(beta, eps, p, 1.0, f"lp_rate(p={p!r})")
    rate = _lp_rate(beta, eps, p, c_p, f"C_p * lp_rate(p={p!r})")
    const = _constant_report("slln_lp.constant", params, a, inner, n0, factor=c_p, C_p=c_p)
    if const.valid:
        const.details["K_a_eps_p"] = const.value / c_p
    return (BoundReport("slln_lp.rate", Quantity.RATE, dict(params, n=n), float(rate(n)), details={"C_p": c_p}), const)


def bounded_slln_bound(a_bound: float, eps: float, n0: int = 1, p: Optional[float] = None,
                       k: Optional[int] = None, n: Optional[int] = None) -> BoundReport:
    """Strong law for increments bounded by a_bound, via Azuma on the running mean.

    P(|S_n/n| > eps) <= 2 exp(-n eps^2 / (2 a^2)) =: 2 exp(-lambda n).
    Without k and p: that rate at n.  With p in (0,1): the exponential moment
    E[exp(lambda p O)].  With k: the tail of the exponential lemma.
    """
    params = {"a_bound": a_bound, "eps": eps, "n0": n0, "p": p, "k": k, "n": n}
    checks = [(a_bound > 0, "a_bound must be positive"), (eps > 0, "eps must be positive"), (n0 >= 1, "n0 must be >= 1")]
    lam = eps * eps / (2.0 * a_bound * a_bound)
    if k is not None:
        checks.append((k >= 1, "k must be >= 1"))
        bad = _problems(checks)
        if bad:
            return _invalid("bounded_slln.tail", Quantity.TAIL, params, bad)
        value = E98 * (k * (2.0 * math.exp(-lam * (n0 - 1)) + 1.0) + 1.0) * math.exp(-k * lam)
        return BoundReport("bounded_slln.tail", Quantity.TAIL, params, value, details={"lambda": lam})
    if p is not None:
        checks.append((0 < p < 1, "p must lie in (0, 1)"))
        bad = _problems(checks)
        if bad:
            return _invalid("bounded_slln.moment", Quantity.EXP_MOMENT, params, bad)
        value = 1.0 + 2.0 * math.exp(-lam * (n0 - 1)) / (1.0 - math.exp(-lam * (1.0 - p)))
        return BoundReport("bounded_slln.moment", Quantity.EXP_MOMENT, params, value,
                           details={"lambda": lam, "moment_of": "E[exp(lambda p O)]"})
    n = n0 if n is None else n
    bad = _problems(checks + [(n >= 1, "n must be >= 1")])
    if bad:
        return _invalid("bounded_slln.rate", Quantity.RATE, params, bad)
    return BoundReport("bounded_slln.rate", Quantity.RATE, params, 2.0 * math.exp(-lam * n), details={"lambda": lam})


def baum_katz_tolerance(alpha: float, p: float, eta: float, n0: int = 1) -> Sequence:
    """eps_n = eta n^{alpha/p - 1}."""
    return Power(alpha / p - 1.0, eta, n0)


def baum_katz_bound(alpha: float, p: float, p_tilde: float, eta: float, n0: int = 1, C_est: float = 1.0,
                    k: Optional[int] = None, nested: bool = False) -> BoundReport:
    """Moment (or tail at k) from the Baum-Katz rate p_n <= C_est / n^{alpha-1}.

    General: E[O^{1+p_tilde}] <= C_est (alpha-1) zeta(alpha-2-p_tilde; n0), p_tilde in [0, alpha-3).
    Nested events: C_est zeta(alpha-1-p_tilde; n0), p_tilde in [0, alpha-2).
    The tail is k^{-(1+p_tilde)} times the moment.
    """
    params = {"alpha": alpha, "p": p, "p_tilde": p_tilde, "eta": eta, "n0": n0, "C_est": C_est, "k": k, "nested": nested}
    bid = "baum_katz." + ("nested." if nested else "") + ("moment" if k is None else "tail")
    quantity = Quantity.MOMENT_POWER if k is None else Quantity.TAIL
    upper = alpha - 2.0 if nested else alpha - 3.0
    checks = [
        (p > 0 and 0.5 < alpha / p <= 1.0, "needs 1/2 < alpha/p <= 1"),
        (0 <= p_tilde < upper, f"p_tilde must lie in [0, {upper!r})"),
        (eta > 0, "eta must be positive"),
        (C_est > 0, "C_est must be positive"),
        (n0 >= 1, "n0 must be >= 1"),
    ]
    if k is not None:
        checks.append((k >= 1, "k must be >= 1"))
    bad = _problems(checks)
    if bad:
        return _invalid(bid, quantity, params, bad)
    if nested:
        moment = C_est * _zeta(alpha - 1.0 - p_tilde, n0)
    else:
        moment = C_est * (alpha - 1.0) * _zeta(alpha - 2.0 - p_tilde, n0)
    value = moment if k is None else k ** -(1.0 + p_tilde) * moment
    return BoundReport(bid, quantity, params, value,
                       details={"eps_n": f"{eta!r} * n^{alpha / p - 1.0!r}", "eps_exponent": alpha / p - 1.0})


# --- exponential strong law -------------------------------------------------


def lesigne_volny_suite(lam: float, delta: float, mode: str, n0: int = 1, *, eps: Optional[float] = None,
                        n: Optional[int] = None, p: Optional[float] = None, k: Optional[int] = None,
                        theta: Optional[float] = None, optimize: bool = True) -> BoundReport:
    """Exponential strong law for martingale differences with E[exp(lam |d|)] bounded.

    modes:
      fixed_eps: rate exp(-(1-delta)/2 lam^{2/3} eps^{2/3} n^{1/3}) at n.
      weibull_mdf: Weibull moment (or tail at k) for a fixed eps.
      ky_fan: the Ky Fan level at n, solving eta = rate(eta).
      as_rate: E[O] for the slowly vanishing eps_n = c ln^3(n+1)/sqrt(n).
    """
    params = {"lam": lam, "delta": delta, "mode": mode, "n0": n0, "eps": eps, "n": n, "p": p, "k": k, "theta": theta}
    bid = f"lesigne_volny.{mode}"
    checks = [(lam > 0, "lambda must be positive"), (0 < delta < 1, "delta must lie in (0, 1)"), (n0 >= 1, "n0 must be >= 1")]
    if mode == "fixed_eps":
        n = n0 if n is None else n
        checks += [(eps is not None and eps > 0, "eps must be positive"), (n >= 1, "n must be >= 1")]
        bad = _problems(checks)
        if bad:
            return _invalid(bid, Quantity.RATE, params, bad)
        value = math.exp(-(1.0 - delta) / 2.0 * lam ** (2.0 / 3.0) * eps ** (2.0 / 3.0) * n ** (1.0 / 3.0))
        return BoundReport(bid, Quantity.RATE, params, value)
    if mode == "weibull_mdf":
        quantity = Quantity.MOMENT_SA if k is None else Quantity.TAIL
        checks.append((eps is not None and eps > 0, "eps must be positive"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, quantity, params, bad)
        c_lv = (1.0 - delta) / 2.0 * lam ** (2.0 / 3.0) * eps ** (2.0 / 3.0)
        b = math.exp(-c_lv)
        decay = WeibullDecay(1.0, b, 1.0 / 3.0)
        extra = {"c": c_lv, "b": b, "alpha": 1.0 / 3.0}
        if p is not None and not 0 < p < c_lv:
            return _invalid(bid, quantity, params, f"p must lie in (0, {c_lv!r})", **extra)
        p_w = None if p is None else p / c_lv
        if k is None:
            if p_w is None:
                return _invalid(bid, quantity, params, "the moment needs p", **extra)
            inner = decay_moment_bound(decay, p_w, n0)
        else:
            inner = decay_tail_bound(decay, n0, k, optimize=optimize or p_w is None, p=p_w)
        return BoundReport(bid, quantity, params, inner.value, inner.valid, inner.reason,
                           inner.optimizer, dict(inner.details, **extra))
    if mode == "ky_fan":
        n = n0 if n is None else n
        checks.append((n >= 1, "n must be >= 1"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, Quantity.KY_FAN, params, bad)
        x = (1.0 - delta) / 3.0 * lam ** (2.0 / 3.0) * n ** (1.0 / 3.0)
        w = lambert_w0(x).value
        value = 3.0**1.5 * w**1.5 / ((1.0 - delta) ** 1.5 * lam * math.sqrt(n))
        printed = 2.0 ** (5.0 / 6.0) / 3.0 ** (1.0 / 3.0) * w**1.5 / ((1.0 - delta) ** 1.5 * lam * math.sqrt(n))
        residual_ = abs(value - math.exp(-(1.0 - delta) / 2.0 * lam ** (2.0 / 3.0) * value ** (2.0 / 3.0) * n ** (1.0 / 3.0)))
        return BoundReport(bid, Quantity.KY_FAN, params, value,
                           details={"printed_form": printed, "fixed_point_residual": residual_})
    if mode == "as_rate":
        checks.append((theta is not None and theta > 0, "theta must be positive"))
        bad = _problems(checks)
        if bad:
            return _invalid(bid, Quantity.MOMENT_SA, params, bad)
        return _lesigne_volny_as_rate(bid, params, lam, delta, theta, n0)
    return _invalid(bid, Quantity.RATE, params, f"unknown mode {mode!r}")


def lesigne_volny_as_tolerance(lam: float, delta: float, theta: float, n0: int = 1) -> Derived:
    """eps_n = 2(1+theta) ln^3(n+1) / ((1-delta) lam^{2/3} sqrt(n))."""
    factor = 2.0 * (1.0 + theta) / ((1.0 - delta) * lam ** (2.0 / 3.0))
    return Derived(lambda n: factor * np.log1p(np.asarray(n, dtype=float)) ** 3 / np.sqrt(np.asarray(n, dtype=float)),
                   n0, None, Direction.UNCONSTRAINED, f"lv_tolerance(theta={theta!r})")


def _lesigne_volny_as_rate(bid: str, params: dict, lam: float, delta: float, theta: float, n0: int) -> BoundReport:
    kappa = (1.0 - delta) ** (1.0 / 3.0) / 2.0 * lam ** (2.0 / 9.0) * (2.0 * (1.0 + theta)) ** (2.0 / 3.0)

    def rate(n):
        return np.exp(-kappa * np.log1p(np.asarray(n, dtype=float)) ** 2)

    def weight(n):
        x = np.asarray(n, dtype=float)
        return 1.0 / (x * np.log1p(x) ** (1.0 + theta))

    # beyond M the ratio rate/weight is nonincreasing
    def decreasing_from(x: float) -> bool:
        ln = math.log1p(x)
        return 2.0 * kappa * ln >= (x + 1.0) / x + (1.0 + theta) / ln

    big_m = max(n0, 2)
    while not decreasing_from(big_m) and big_m < 10**7:
        big_m *= 2
    dominated = decreasing_from(big_m)
    if dominated:
        ns = np.arange(n0, big_m + 1, dtype=np.int64)
        dominated = bool(np.all(rate(ns) <= weight(ns)))
    details = {"kappa": kappa, "monotone_from": big_m, "dominated": dominated,
               "eps_n": "2(1+theta) ln^3(n+1) / ((1-delta) lam^(2/3) sqrt(n))"}
    if dominated:
        total = tail_sum(LogWeight(theta, n0), n0)
        details["abs_error_bound"] = total.abs_error_bound
        return BoundReport(bid, Quantity.MOMENT_SA, params, total.value, details=details)

    def tail_fn(cutoff: int) -> Optional[float]:
        beta = kappa * math.log(cutoff + 2.0)
        if beta <= 1.0:
            return None
        return (cutoff + 1.0) ** (1.0 - beta) / (beta - 1.0)

    clipped = lambda n: np.minimum(1.0, rate(n))  # noqa: E731
    total = _series(clipped, n0, tail_fn, "lesigne_volny rate")
    details["summed"] = "sum of min(1, rate)"
    return BoundReport(bid, Quantity.MOMENT_SA, params, total.value, details=details)


# --- branching processes ----------------------------------------------------


def branching_bounds(regime: str, **kw) -> BoundReport:
    """Excursion bounds for Galton-Watson processes with mean m and offspring variance v.

    regimes and keyword parameters:
      subcritical(m, v, K, k): tail of the number of generations with Z_n >= K.
      supercritical_tail(m, v, eps, k): tail of the count of |X_n - X| > eps for X_n = Z_n/m^n.
      supercritical_rate(m, v, theta, k=None): eps_n = sqrt(v n^theta / (m^n (m^2-m))); tail k^{-1} zeta(theta).
      critical_moment(v, c_tilde=1, k=None): moment with a_n = 1/ln^2(n+1), or its tail.
      critical_poly(r, v, eta, p, c_inf, n0=1, k=None): polynomial decay from r-th moments.
      critical_exp(v, c_inf, mode, delta=1, p=None, k=None, n0=1): exponential decay.
    """
    bid = f"branching.{regime}"
    params = dict(kw, regime=regime)
    get = kw.get
    if regime == "subcritical":
        m, v, big_k, k = get("m"), get("v"), get("K"), get("k", 1)
        bad = _problems([(m is not None and 0 < m < 1, "m must lie in (0, 1)"), (v is not None and v > 0, "v must be positive"),
                         (big_k is not None and big_k > 0, "K must be positive"), (k >= 1, "k must be >= 1")])
        if bad:
            return _invalid(bid, Quantity.TAIL, params, bad)
        base = m * (1.0 - m) * big_k
        stated = E98 / base * (k * (min(v / base, 1.0) + 1.0) + 1.0) * m**k
        c = min(1.0 / big_k, v / (m * (1.0 - m) * big_k**2))
        derived = E98 * (k * (c + 1.0) + 1.0) * m**k
        return BoundReport(bid, Quantity.TAIL, params, max(stated, derived),
                           details={"stated_form": stated, "derived_form": derived})
    if regime == "supercritical_tail":
        m, v, eps, k = get("m"), get("v"), get("eps"), get("k", 1)
        bad = _problems([(m is not None and m > 1, "m must exceed 1"), (v is not None and v > 0, "v must be positive"),
                         (eps is not None and eps > 0, "eps must be positive"), (k >= 1, "k must be >= 1")])
        if bad:
            return _invalid(bid, Quantity.TAIL, params, bad)
        stated = E98 * v / ((1.0 - 1.0 / m) * (m * m - m) * eps * eps) * (2 * k + 1) * m ** (-k)
        c = v / ((m * m - m) * eps * eps)
        derived = E98 * (k * (c + 1.0) + 1.0) * m ** (-k)
        return BoundReport(bid, Quantity.TAIL, params, max(stated, derived),
                           details={"stated_form": stated, "derived_form": derived})
    if regime == "supercritical_rate":
        m, v, theta, k = get("m"), get("v"), get("theta"), get("k", 1)
        bad = _problems([(m is not None and m > 1, "m must exceed 1"), (v is not None and v > 0, "v must be positive"),
                         (theta is not None and theta > 1, "theta must exceed 1"), (k >= 1, "k must be >= 1")])
        if bad:
            return _invalid(bid, Quantity.TAIL, params, bad)
        return BoundReport(bid, Quantity.TAIL, params, _zeta(theta, 1) / k,
                           details={"eps_n": "sqrt(v n^theta / (m^n (m^2 - m)))"})
    if regime == "critical_moment":
        v, c_tilde, k = get("v"), get("c_tilde", 1.0), get("k")
        quantity = Quantity.MOMENT_SA if k is None else Quantity.TAIL
        bad = _problems([(v is not None and v > 0, "v must be positive"), (c_tilde > 0, "c_tilde must be positive"),
                         (k is None or k >= 1, "k must be >= 1")])
        if bad:
            return _invalid(bid, quantity, params, bad)
        moment = c_tilde * 2.0 / v * tail_sum(LogWeight(1.0, 1), 1).value
        details = {"weight": "a_n = 1/ln^2(n+1)"}
        if k is None:
            return BoundReport(bid, quantity, params, moment, details=details)
        s_k = math.fsum(1.0 / math.log1p(j) ** 2 for j in range(1, k + 1))
        return BoundReport(bid, quantity, params, moment / s_k, details=dict(details, S_k=s_k, moment=moment))
    if regime == "critical_poly":
        r, v, eta, p, c_inf = get("r"), get("v"), get("eta"), get("p"), get("c_inf")
        n0, k = get("n0", 1), get("k")
        quantity = Quantity.MOMENT_POWER if k is None else Quantity.TAIL
        checks = [(v is not None and v > 0, "v must be positive"), (c_inf is not None and c_inf > 0, "c_inf must be positive"),
                  (eta is not None and eta >= 0, "eta must be >= 0"), (n0 >= 1, "n0 must be >= 1")]
        if r is None or eta is None or p is None:
            checks.append((False, "r, eta and p are required"))
        else:
            checks += [(r >= 3 and r > 3 + 4 * eta, "needs r >= 3 and r > 3 + 4 eta"),
                       (0 <= p < r - 3 - 4 * eta, f"p must lie in [0, r-3-4eta) = [0, {r - 3 - 4 * eta!r})")]
        bad = _problems(checks)
        if bad:
            return _invalid(bid, quantity, params, bad)
        q = r - 1.0 - 4.0 * eta
        moment = _poly_moment(2.0 * c_inf / v, q, p, n0)
        printed = 2.0 * c_inf / v * _zeta(r - 2.0 - 4.0 * eta - p, n0)
        value = moment if k is None else k ** -(p + 1.0) * moment
        return BoundReport(bid, quantity, params, value, details={"printed_form": printed, "q": q})
    if regime == "critical_exp":
        v, c_inf, mode = get("v"), get("c_inf"), get("mode", "sqrt_log")
        delta = 1.0 if mode == "sqrt_log" else get("delta", 1.0)
        p, k, n0 = get("p"), get("k"), get("n0", 1)
        quantity = Quantity.EXP_MOMENT if k is None else Quantity.TAIL
        bad = _problems([(v is not None and v > 0, "v must be positive"), (c_inf is not None and c_inf > 0, "c_inf must be positive"),
                         (mode in ("sqrt_log", "quadratic"), "mode must be sqrt_log or quadratic"),
                         (delta > 0, "delta must be positive")])
        if bad:
            return _invalid(bid, quantity, params, bad)
        decay = ExpDecay(2.0 * (1.0 + c_inf) / v, math.exp(-2.0 * delta / v))
        inner = decay_moment_bound(decay, p if p is not None else math.nan, n0) if k is None else decay_tail_bound(decay, n0, k)
        return BoundReport(bid, quantity, params, inner.value, inner.valid, inner.reason,
                           details=dict(inner.details, c=decay.c, b=decay.b))
    return _invalid(bid, Quantity.TAIL, params, f"unknown regime {regime!r}")


# --- Freedman ---------------------------------------------------------------


def freedman_tail(u: float, v: float, rho: float) -> float:
    """exp(-u^2 / (2 (v^2 + rho u)))."""
    return math.exp(-u * u / (2.0 * (v * v + rho * u)))


def _freedman_tail_bound(rho: float, v: float, u_seq: Sequence, a: Sequence) -> Optional[Callable[[int], Optional[float]]]:
    """Majorant of sum_{n > N} a_n exp(-u_n^2/(2(v^2+rho u_n))) via exp(-u/(2rho)) e^{v^2/(2rho^2)}."""
    lift = math.exp(v * v / (2.0 * rho * rho))
    a_env = a.envelope()
    if a_env is None or a_env.rate != 0.0:
        return None
    if isinstance(u_seq, LogPower) and u_seq.s >= 1.0:
        power = a_env.power
        a_coef = a_env.coef * (1.0 if power >= 0 else 2.0 ** (-power))

        def tail(cutoff: int) -> Optional[float]:
            # for n >= N+1: (n+1)^{-gamma(n)} <= (n+1)^{-gamma(N+1)}, a_n <= a_coef (n+1)^power
            gamma = u_seq.scale * math.log(cutoff + 2.0) ** (u_seq.s - 1.0) / (2.0 * rho)
            beta = gamma - power
            if beta <= 1.0:
                return None
            return lift * a_coef * (cutoff + 1.0) ** (1.0 - beta) / (beta - 1.0)

        return tail
    u_env = u_seq.envelope()
    if u_env is not None and u_env.exact and u_env.rate == 0.0 and u_env.power > 0:
        env = Envelope(lift, 0.0, u_env.coef / (2.0 * rho), u_env.power, u_env.start, False).times(a_env)
        return env.tail
    return None


def _freedman_divergent(rho: float, u_seq: Sequence, a: Sequence) -> bool:
    """Certify divergence from terms >= a_n exp(-u_n/(2rho))."""
    if not isinstance(u_seq, LogPower):
        return False
    if u_seq.s < 1.0:
        return True
    if u_seq.s > 1.0:
        return False
    gamma = u_seq.scale / (2.0 * rho)
    a_env = a.envelope()
    growth = a_env.power if a_env is not None and a_env.exact and a_env.rate == 0.0 and a_env.power > 0 else 0.0
    return gamma - growth <= 1.0


def freedman_bound(rho: float, v: float, u_seq: Sequence, a: Sequence, n0: int = 1, qv_prob: float = 1.0) -> BoundReport:
    """K = sum_{n >= n0} a_n exp(-u_n^2/(2(v^2 + rho u_n))) and the conditional moment K / qv_prob."""
    params = {"rho": rho, "v": v, "u": u_seq, "a": a, "n0": n0, "qv_prob": qv_prob}
    checks = [(rho > 0, "rho must be positive"), (v > 0, "v must be positive"),
              (0 < qv_prob <= 1, "qv_prob must lie in (0, 1]"),
              (u_seq.is_monotone(Direction.NONDECREASING), "u must be nondecreasing"),
              (a.is_monotone(Direction.NONDECREASING), "a must be nondecreasing")]
    bad = _problems(checks)
    if bad:
        return _invalid("freedman.constant", Quantity.MOMENT_SA, params, bad)
    if _freedman_divergent(rho, u_seq, a):
        return _invalid("freedman.constant", Quantity.MOMENT_SA, params,
                        "diverges: terms are at least a_n exp(-u_n/(2 rho)), which is not summable")

    def terms(n):
        u = u_seq.values(n)
        return a.values(n) * np.exp(-u * u / (2.0 * (v * v + rho * u)))

    try:
        total = _series(terms, n0, _freedman_tail_bound(rho, v, u_seq, a) or (lambda _n: None), "freedman")
    except DivergenceError as err:
        return _invalid("freedman.constant", Quantity.MOMENT_SA, params, f"diverges: {err}", divergence_index=err.index)
    k_val = total.value
    return BoundReport("freedman.constant", Quantity.MOMENT_SA, params, k_val / qv_prob,
                       details={"K": k_val, "certified": total.certified})


# --- Ky Fan metric ----------------------------------------------------------


def kyfan_weight(eps: Sequence, theta: float, n0: int = 1) -> Derived:
    """a_n = 1 / (n ln^{1+theta}(n+1) sum_{m >= n} eps_m), the weight turning a Ky Fan rate into an MDF bound."""
    tails = tail_sequence(eps)
    return Derived(lambda n: LogWeight(theta, 1).values(n) / tails.values(n), max(n0, eps.n0, 1), None,
                   Direction.UNCONSTRAINED, f"kyfan_weight(theta={theta!r})")


def kyfan_corollaries(mode: str, n0: int = 1, *, eps: Optional[Sequence] = None, theta: Optional[float] = None,
                      a: Optional[Sequence] = None, rate: Optional[Sequence] = None, n: Optional[int] = None,
                      probe: int = 10000) -> BoundReport:
    """Conversions between Ky Fan rates and mean deviation frequencies.

    kf_to_mdf: for summable Ky Fan levels eps, E[S_a(O)] <= sum_{n >= n0} 1/(n ln^{1+theta}(n+1))
      with the weight of :func:`kyfan_weight`.
    mdf_to_kf: if eps_n sum_{i <= n} a_i >= 1 for n >= n0 (checked up to ``probe``),
      d_KF(X_n, X) <= eps_n; ``rate`` optionally certifies K(a, rate, n0) < inf.
    """
    params = {"mode": mode, "n0": n0, "eps": eps, "theta": theta, "a": a, "rate": rate, "n": n}
    bid = f"kyfan.{mode}"
    if mode == "kf_to_mdf":
        bad = _problems([(eps is not None, "eps is required"), (theta is not None and theta > 0, "theta must be positive"),
                         (n0 >= 1, "n0 must be >= 1")])
        if bad:
            return _invalid(bid, Quantity.MOMENT_SA, params, bad)
        try:
            eps_sum = tail_sum(eps, max(n0, eps.n0))
        except DivergenceError as err:
            return _invalid(bid, Quantity.MOMENT_SA, params, f"eps is not summable: {err}")
        total = tail_sum(LogWeight(theta, n0), n0)
        return BoundReport(bid, Quantity.MOMENT_SA, params, total.value,
                           details={"abs_error_bound": total.abs_error_bound, "eps_sum": eps_sum.value, "weight": "1/(n ln^(1+theta)(n+1) sum_{m>=n} eps_m)"})
    if mode == "mdf_to_kf":
        bad = _problems([(eps is not None, "eps is required"), (a is not None, "a is required"), (n0 >= 1, "n0 must be >= 1")])
        if bad:
            return _invalid(bid, Quantity.KY_FAN, params, bad)
        first = max(1, a.n0)
        stop = max(probe, n0)
        idx = np.arange(first, stop + 1, dtype=np.int64)
        cum = np.cumsum(a.values(idx))
        check_idx = idx[idx >= max(n0, eps.n0)]
        balance = eps.values(check_idx) * cum[check_idx - first]
        failing = np.nonzero(balance < 1.0)[0]
        if failing.size:
            first_bad = int(check_idx[failing[0]])
            return _invalid(bid, Quantity.KY_FAN, params,
                            f"balance eps_n * sum_(i<=n) a_i >= 1 fails at n={first_bad}", first_violation=first_bad)
        details = {"balance_checked_up_to": stop}
        if rate is not None:
            try:
                k_const = tradeoff_constant(a, rate, n0)
            except DivergenceError as err:
                return _invalid(bid, Quantity.KY_FAN, params, f"K(a, rate) diverges: {err}")
            details["K"] = k_const.value
        n = n0 if n is None else n
        return BoundReport(bid, Quantity.KY_FAN, params, float(eps(n)), details=details)
    return _invalid(bid, Quantity.KY_FAN, params, f"unknown mode {mode!r}")


# --- M-estimators -----------------------------------------------------------


@dataclass(frozen=True)
class Margins:
    """Linearization margins of an estimating equation: spectral gap lam and slacks delta1, delta2."""

    lam: float
    delta1: float = 0.5
    delta2: float = 0.5

    def __post_init__(self):
        if not (self.lam > 0 and 0 < self.delta1 <= 1 and 0 < self.delta2 <= 1):
            raise ValueError("margins need lam > 0 and delta1, delta2 in (0, 1]")

    @classmethod
    def from_jacobian(cls, jacobian, safety: float = 0.0, delta1: float = 0.5, delta2: float = 0.5) -> "Margins":
        """lam = smallest singular value of the Jacobian at the true parameter, minus ``safety``."""
        sv = np.linalg.svd(np.atleast_2d(np.asarray(jacobian, dtype=float)), compute_uv=False)
        return cls(float(sv.min()) - safety, delta1, delta2)

    @property
    def product(self) -> float:
        return self.lam * self.delta1 * self.delta2


def m_estimator_bounds(setting: str, **kw) -> BoundReport:
    """Deviation-frequency bounds for method-of-moments estimators built from averages.

    settings and keyword parameters:
      cesaro(p, ell, beta_star, eps, a, margins, M_sup=1, n0=1)
      lp_bounded(p, ell, alpha, p_tilde, eta, C_est, n0=1, k=None, nested=False)
      exp_moments(gamma, alpha, ell, margins, delta=0.5, p=None, k=None, n0=1)
      gartner_ellis(hessian_norm, alpha, margins, C=1, delta=0.5, p=None, k=None, n0=1)
      as_bounded(c_seq, eps, a, ell, margins, n0=1)
    """
    bid = f"m_estimator.{setting}"
    params = dict(kw, setting=setting)
    get = kw.get
    margins = get("margins")
    if setting == "lp_bounded":
        p, ell, alpha = get("p"), get("ell"), get("alpha")
        k = get("k")
        quantity = Quantity.MOMENT_POWER if k is None else Quantity.TAIL
        bad = _problems([(p is not None and ell is not None and ell >= 1 and p > 6 * ell, "needs p > 6 ell"),
                         (alpha is not None and alpha > 3, "needs alpha > 3"),
                         (p is not None and ell and alpha is not None and p / (2 * ell) < alpha <= p / ell,
                          "needs p/(2 ell) < alpha <= p/ell")])
        if bad:
            return _invalid(bid, quantity, params, bad)
        inner = baum_katz_bound(alpha, p / ell, get("p_tilde", 0.0), get("eta", 1.0), get("n0", 1),
                                get("C_est", 1.0), k, get("nested", False))
        return BoundReport(bid, inner.quantity, params, inner.value, inner.valid, inner.reason, inner.optimizer,
                           dict(inner.details, reduced_to=inner.bound_id))
    if margins is None:
        return _invalid(bid, Quantity.MOMENT_SA, params, "margins are required")
    if setting == "cesaro":
        return _m_cesaro(bid, params, **kw)
    if setting in ("exp_moments", "gartner_ellis"):
        alpha, k, p, n0 = get("alpha", 0.0), get("k"), get("p"), get("n0", 1)
        delta = get("delta", 0.5)
        quantity = Quantity.MOMENT_SA if k is None else Quantity.TAIL
        checks = [(0 <= alpha < 0.5, "alpha must lie in [0, 1/2)"), (0 < delta < 1, "delta must lie in (0, 1)")]
        if setting == "exp_moments":
            gamma, ell = get("gamma"), get("ell", 1)
            checks += [(gamma is not None and gamma > 0, "gamma must be positive"), (ell >= 1, "ell must be >= 1")]
            bad = _problems(checks)
            if bad:
                return _invalid(bid, quantity, params, bad)
            c0_eff = (1.0 - delta) / 2.0 * (margins.product * gamma) ** (2.0 / 3.0)
            decay = WeibullDecay(float(ell), math.exp(-c0_eff), (1.0 - 2.0 * alpha) / 3.0)
            extra = {"c0": c0_eff, "printed_c0": (margins.product * gamma) ** (2.0 / 3.0)}
        else:
            h, c_const = get("hessian_norm"), get("C", 1.0)
            checks += [(h is not None and h > 0, "hessian_norm must be positive"), (c_const > 0, "C must be positive")]
            bad = _problems(checks)
            if bad:
                return _invalid(bid, quantity, params, bad)
            c0_eff = (1.0 - delta) / 2.0 * h * margins.product**2
            decay = WeibullDecay(float(c_const), math.exp(-c0_eff), 1.0 - 2.0 * alpha)
            extra = {"c0": c0_eff}
        extra.update(b=decay.b, weibull_alpha=decay.alpha)
        if k is None:
            if p is None:
                return _invalid(bid, quantity, params, "the moment needs p", **extra)
            inner = decay_moment_bound(decay, p, n0)
        else:
            inner = decay_tail_bound(decay, n0, k, optimize=p is None, p=p)
        return BoundReport(bid, quantity, params, inner.value, inner.valid, inner.reason, inner.optimizer,
                           dict(inner.details, **extra))
    if setting == "as_bounded":
        c_seq, eps, a, ell, n0 = get("c_seq"), get("eps"), get("a"), get("ell", 1), get("n0", 1)
        bad = _problems([(c_seq is not None and eps is not None and a is not None, "c_seq, eps and a are required"),
                         (ell >= 1, "ell must be >= 1")])
        if bad:
            return _invalid(bid, Quantity.MOMENT_SA, params, bad)
        kappa = margins.product**2 / (2.0 * ell)
        try:
            azuma_residual(c_seq)(n0)
        except DivergenceError as err:
            return _invalid(bid, Quantity.MOMENT_SA, params, f"sum of c_k^2 diverges: {err}")
        rate = _gaussian_rate(azuma_residual(c_seq), eps, kappa, 2.0, "m_estimator_as_rate")
        return _constant_report(bid, params, a, rate, n0, factor=2.0, kappa=kappa)
    return _invalid(bid, Quantity.MOMENT_SA, params, f"unknown setting {setting!r}")


def _m_cesaro(bid: str, params: dict, *, margins: Margins, p=None, ell=None, beta_star=None, eps=None, a=None,
              M_sup: float = 1.0, n0: int = 1, **_ignored) -> BoundReport:
    bad = _problems([(p is not None and ell is not None and ell >= 1 and p > 6 * ell, "needs p > 6 ell"),
                     (beta_star is not None and eps is not None and a is not None, "beta_star, eps and a are required"),
                     (M_sup > 0, "M_sup must be positive")])
    if bad:
        return _invalid(bid, Quantity.MOMENT_SA, params, bad)
    r = p / ell
    c_r = slln_lp_constant(r)
    c_tilde = c_r * 2.0 ** (r - 1.0) * ell ** (r / 2.0 - 1.0) * 2.0 ** (r - 1.0) * max(ell, M_sup ** (r / 2.0))
    prefactor = margins.product ** (-r)

    def fn(n):
        x = np.asarray(n, dtype=float)
        return (np.maximum(beta_star.values(n), 1.0) + 1.0) / (eps.values(n) ** r * x ** (r / 2.0 - 1.0))

    env = lower = None
    be, ee = beta_star.envelope(), eps.envelope()
    if ee is not None and ee.exact:
        shape = ee.raised(-r).times(Envelope(1.0, -(r / 2.0 - 1.0), 0.0, 1.0, 1, True))
        lower = shape.scaled(2.0)
        if be is not None and be.rate == 0.0:
            env = Envelope(be.coef + 2.0, max(be.power, 0.0), 0.0, 1.0, be.start, False).times(shape)
    rate = Derived(fn, max(beta_star.n0, eps.n0, 1), env, Direction.UNCONSTRAINED, "cesaro_rate")
    return _constant_report(bid, params, a, rate, n0, factor=prefactor * c_tilde, rate_lower=lower,
                            C_tilde=c_tilde, margin_prefactor=prefactor, printed_prefactor=1.0 / margins.product)


# --- Chinese restaurant process --------------------------------------------


def gcrp_normalizer(alpha: float, theta: float, n: int) -> float:
    """phi_n = Gamma(1+theta) Gamma(n+alpha+theta) / (Gamma(1+theta+alpha) Gamma(n+theta))."""
    if not (0 < alpha < 1 and theta > -alpha):
        raise DomainError("needs 0 < alpha < 1 and theta > -alpha")
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    return math.exp(math.lgamma(1.0 + theta) + math.lgamma(n + alpha + theta)
                    - math.lgamma(1.0 + theta + alpha) - math.lgamma(n + theta))


def gcrp_normalizer_limit(alpha: float, theta: float) -> float:
    """lim phi_n / n^alpha = Gamma(1+theta) / Gamma(1+theta+alpha)."""
    return math.exp(math.lgamma(1.0 + theta) - math.lgamma(1.0 + theta + alpha))


# --- catalog ----------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    bound_id: str
    description: str
    domain: str


CATALOG: tuple[CatalogEntry, ...] = (
    CatalogEntry("decay.poly.moment", "E[O^(p+1)] from polynomially decaying deviation tails c n^-(q-1)", "c > 0, q > 2, 0 <= p < q-2, n0 >= 1"),
    CatalogEntry("decay.poly.tail", "P(O >= k) for polynomial decay, optionally optimized over p", "c > 0, q > 2, k >= 1"),
    CatalogEntry("decay.exp.moment", "E[b^(-pO)] from geometric deviation tails c b^n", "c > 0, 0 < b < 1, 0 < p < 1"),
    CatalogEntry("decay.exp.tail", "P(O >= k) for geometric decay", "c > 0, 0 < b < 1, k >= 1"),
    CatalogEntry("decay.weibull.moment", "E[S_a(O)] with a_n = b^(-p n^alpha) for Weibull decay c b^(n^alpha)", "c > 0, 0 < b < 1, 0 < p < 1, 0 < alpha < 1"),
    CatalogEntry("decay.weibull.tail", "P(O >= k) for Weibull decay, optimized p = 1-(k-1)^-alpha", "c > 0, 0 < b < 1, 0 < alpha < 1, k >= 2 when optimized"),
    CatalogEntry("pythagoras.rate", "Chebyshev rate pi_n / eps_n^2 for L2 martingales", "pi nonincreasing, eps positive nonincreasing"),
    CatalogEntry("pythagoras.constant", "K(a, pi/eps^2, n0) bounding E[S_a(O)]", "as pythagoras.rate, a nondecreasing"),
    CatalogEntry("azuma.finite_n", "Azuma-Hoeffding tail exp(-eps^2/(2 sum c_k^2)) at a fixed n", "eps > 0"),
    CatalogEntry("azuma.closure_rate", "exp(-eps_n^2/(2 r(n))) with r(n) = sum_{k>n} c_k^2", "sum c_k^2 < inf, eps nonincreasing"),
    CatalogEntry("azuma.constant", "2 K(a, closure rate, n0) bounding E[S_a(O)]", "as azuma.closure_rate, a nondecreasing"),
    CatalogEntry("azuma.ky_fan", "Ky Fan level sqrt(r(n) W(1/r(n)))", "sum c_k^2 < inf"),
    CatalogEntry("azuma_closure.a", "E[O^(p+1)] or tail when r(n) <= C/(n+1)^q and eps_n ~ sqrt(ln n / n^q)", "C > 0, 0 < q <= 1, theta > 0, 0 < p < theta"),
    CatalogEntry("azuma_closure.b", "Weibull moment / tail for fixed eps when r(n) <= C/(n+1)^q", "C > 0, 0 < q < 1, eps > 0, 0 < p < 1"),
    CatalogEntry("azuma_closure.c", "exponential moment / tail for fixed eps when r(n) <= C/(n+1)", "C > 0, q = 1, eps > 0, 0 < p < 1"),
    CatalogEntry("azuma_closure.d", "Ky Fan level sqrt(C W((n+1)^q/C)/(n+1)^q)", "C > 0, 0 < q <= 1, n >= 0"),
    CatalogEntry("slln_lp.rate", "Lp strong-law rate C_p beta_n/(eps_n^p n^(p/2-1))", "p >= 2"),
    CatalogEntry("slln_lp.constant", "C_p K_(a,eps,p) bounding E[S_a(O)] for the running mean", "p >= 2, a nondecreasing"),
    CatalogEntry("bounded_slln.rate", "2 exp(-n eps^2/(2 a^2)) for increments bounded by a", "a > 0, eps > 0"),
    CatalogEntry("bounded_slln.moment", "E[exp(lambda p O)] for bounded increments", "a > 0, eps > 0, 0 < p < 1"),
    CatalogEntry("bounded_slln.tail", "P(O >= k) for bounded increments", "a > 0, eps > 0, k >= 1"),
    CatalogEntry("baum_katz.moment", "C (alpha-1) zeta(alpha-2-p~; n0) from Baum-Katz rates", "1/2 < alpha/p <= 1, 0 <= p~ < alpha-3"),
    CatalogEntry("baum_katz.tail", "k^-(1+p~) times the Baum-Katz moment", "as baum_katz.moment, k >= 1"),
    CatalogEntry("baum_katz.nested.moment", "C zeta(alpha-1-p~; n0) for nested deviation events", "1/2 < alpha/p <= 1, 0 <= p~ < alpha-2"),
    CatalogEntry("baum_katz.nested.tail", "tail of the nested Baum-Katz moment", "as baum_katz.nested.moment, k >= 1"),
    CatalogEntry("lesigne_volny.fixed_eps", "exp(-(1-d)/2 lam^(2/3) eps^(2/3) n^(1/3)) for exponential moments", "lam > 0, 0 < d < 1, eps > 0"),
    CatalogEntry("lesigne_volny.weibull_mdf", "Weibull moment / tail for the exponential strong law", "0 < p < (1-d)/2 lam^(2/3) eps^(2/3)"),
    CatalogEntry("lesigne_volny.ky_fan", "Ky Fan level of the exponential strong law via Lambert W", "lam > 0, 0 < d < 1, n >= 1"),
    CatalogEntry("lesigne_volny.as_rate", "E[O] for eps_n ~ ln^3(n+1)/sqrt(n)", "lam > 0, 0 < d < 1, theta > 0"),
    CatalogEntry("branching.subcritical", "P(O_K >= k) for generations with Z_n >= K, mean m < 1", "0 < m < 1, v > 0, K > 0"),
    CatalogEntry("branching.supercritical_tail", "P(O >= k) for |Z_n/m^n - W| > eps, mean m > 1", "m > 1, v > 0, eps > 0"),
    CatalogEntry("branching.supercritical_rate", "k^-1 zeta(theta) for eps_n = sqrt(v n^theta/(m^n (m^2-m)))", "m > 1, v > 0, theta > 1"),
    CatalogEntry("branching.critical_moment", "moment with a_n = 1/ln^2(n+1) for critical processes", "v > 0"),
    CatalogEntry("branching.critical_poly", "polynomial moment from r-th offspring moments, critical case", "r > 3 + 4 eta, 0 <= p < r-3-4eta"),
    CatalogEntry("branching.critical_exp", "exponential moment / tail for critical processes", "v > 0, c_inf > 0"),
    CatalogEntry("freedman.constant", "sum a_n exp(-u_n^2/(2(v^2+rho u_n))) over P(<M> <= v)", "rho > 0, v > 0, 0 < qv_prob <= 1"),
    CatalogEntry("kyfan.kf_to_mdf", "MDF moment sum 1/(n ln^(1+theta)(n+1)) from a summable Ky Fan rate", "eps summable, theta > 0"),
    CatalogEntry("kyfan.mdf_to_kf", "Ky Fan bound eps_n under the balance eps_n sum a_i >= 1", "balance holds from n0"),
    CatalogEntry("m_estimator.cesaro", "tradeoff constant for estimators of Cesaro-convergent data", "p > 6 ell, margins given"),
    CatalogEntry("m_estimator.lp_bounded", "Baum-Katz moment for estimators of uniformly Lp-bounded data", "p > 6 ell, alpha > 3, p/(2ell) < alpha <= p/ell"),
    CatalogEntry("m_estimator.exp_moments", "Weibull moment / tail for data with bounded exponential moments", "0 <= alpha < 1/2, gamma > 0, margins given"),
    CatalogEntry("m_estimator.gartner_ellis", "Weibull moment / tail in a Gartner-Ellis setting", "0 <= alpha < 1/2, hessian_norm > 0, margins given"),
    CatalogEntry("m_estimator.as_bounded", "tradeoff constant for almost surely bounded data", "sum c_k^2 < inf, margins given"),
)
