"""Special functions used by the bound calculators.

Everything here is plain float arithmetic on top of :mod:`math`: the Hurwitz
zeta function by Euler-Maclaurin summation, the principal branch of Lambert's
W by Halley iteration, the digamma function at positive integers and the upper
incomplete gamma function by series / continued fraction.  Every routine
returns an :class:`EvalResult` carrying a bound on its own numerical error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EULER_GAMMA = 0.57721566490153286060651209008240243104215933593992

# B_2, B_4, ..., B_30
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
)

_ROUNDING = 4.0 * 2.0**-52


class DomainError(ValueError):
    """Raised when a special function is called outside its domain."""


@dataclass(frozen=True)
class EvalResult:
    """A numerical value together with a guaranteed absolute error bound."""

    value: float
    abs_error_bound: float
    certified: bool = True

    def __float__(self) -> float:
        return self.value


def hurwitz_zeta(z: float, n0: int = 1, tol: float = 1e-12) -> EvalResult:
    """Hurwitz zeta function sum_{n >= n0} n**(-z) for real z > 1.

    The first terms are summed directly and the rest is handled by the
    Euler-Maclaurin formula.  For x -> x**(-z) every derivative of even order
    is positive, so the remainder after the last Bernoulli correction is
    bounded by the first omitted correction term; that term is the reported
    truncation error.

    Args:
        z: Exponent, must exceed 1.
        n0: First summation index (>= 1).
        tol: Requested absolute tolerance.

    Returns:
        EvalResult with the value and its error bound.  Close to z = 1 the
        value is large and the rounding part of the bound can exceed ``tol``;
        the bound is then reported honestly instead of raising.
    """
    if not z > 1.0 or math.isinf(z):
        raise DomainError(f"hurwitz_zeta needs 1 < z < inf, got z={z}")
    if int(n0) != n0 or n0 < 1:
        raise DomainError(f"hurwitz_zeta needs an integer n0 >= 1, got {n0}")
    if not tol > 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    n0 = int(n0)

    cutoff = max(n0, 10, int(math.ceil(z)) + 2)
    while True:
        head = math.fsum(n ** (-z) for n in range(n0, cutoff))
        tail, err = _zeta_euler_maclaurin_tail(z, cutoff, tol)
        if err <= tol or cutoff > 10**6:
            break
        cutoff *= 4

    value = head + tail
    rounding = _ROUNDING * (abs(head) + abs(tail)) * 4.0
    return EvalResult(value, err + rounding)


def _zeta_euler_maclaurin_tail(z: float, cutoff: int, tol: float) -> tuple[float, float]:
    """sum_{n >= cutoff} n**(-z) and the magnitude of the first omitted term."""
    big_n = float(cutoff)
    terms = [big_n ** (1.0 - z) / (z - 1.0), 0.5 * big_n ** (-z)]
    # rising factorial z (z+1) ... (z+2j-2) over (2j)!
    coeff = z / 2.0
    power = big_n ** (-z - 1.0)
    omitted = math.inf
    for j, bern in enumerate(_BERNOULLI_EVEN, start=1):
        term = bern * coeff * power
        if j == len(_BERNOULLI_EVEN):
            omitted = abs(term)
            break
        terms.append(term)
        coeff *= (z + 2 * j - 1) * (z + 2 * j) / ((2 * j + 1) * (2 * j + 2))
        power /= big_n * big_n
        nxt = abs(_BERNOULLI_EVEN[j] * coeff * power)
        if nxt <= 0.1 * tol:
            omitted = nxt
            break
    return math.fsum(terms), omitted


def lambert_w0(x: float) -> EvalResult:
    """Principal branch W0 of Lambert's function, w * exp(w) = x with w >= -1.

    Halley iteration from a piecewise initial guess (branch-point series near
    -1/e, a logarithmic guess for large x).  For x above e the iteration works
    on the equivalent equation w + ln(w) = ln(x), which avoids overflow.

    Args:
        x: Argument, x >= -1/e.

    Returns:
        EvalResult whose error bound is derived from the final residual.
    """
    branch = -math.exp(-1.0)
    if math.isnan(x) or x < branch - 1e-15:
        raise DomainError(f"lambert_w0 needs x >= -1/e, got {x}")
    if math.isinf(x):
        raise DomainError("lambert_w0 needs a finite argument")
    if x <= branch:
        return EvalResult(-1.0, 1e-8)
    if x == 0.0:
        return EvalResult(0.0, 0.0)

    if x > math.e:
        w = _w0_large(x)
    else:
        w = _w0_small(x, branch)

    residual = w * math.exp(w) - x if w < 700 else 0.0
    slope = math.exp(w) * (1.0 + w)
    if slope > 1e-4:
        err = abs(residual) / slope + _ROUNDING * abs(w)
    else:
        # near the branch point w*exp(w) is quadratic in (w + 1)
        err = math.sqrt(2.0 * math.e * abs(residual)) + abs(residual) / max(slope, 1e-300)
        err = min(err, math.sqrt(2.0 * math.e * (abs(residual) + 1e-16)))
    return EvalResult(w, err)


def _w0_small(x: float, branch: float) -> float:
    if x < -0.25:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3 - 43.0 / 540.0 * p**4
    else:
        lp = math.log1p(x)
        w = lp * (1.0 - math.log1p(lp) / (2.0 + lp))
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 <= 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w_new = w - step
        if w_new < -1.0:
            w_new = 0.5 * (w - 1.0)
        if abs(w_new - w) <= 1e-16 * (1.0 + abs(w_new)):
            w = w_new
            break
        w = w_new
    return max(w, -1.0)


def _w0_large(x: float) -> float:
    log_x = math.log(x)
    l2 = math.log(log_x) if log_x > 1.0 else 0.0
    w = log_x - l2 + (l2 / log_x if log_x > 0 else 0.0)
    w = max(w, 1.0)
    for _ in range(100):
        g = w + math.log(w) - log_x
        g1 = 1.0 + 1.0 / w
        g2 = -1.0 / (w * w)
        step = g / (g1 - 0.5 * g * g2 / g1)
        w_new = w - step
        if w_new <= 0:
            w_new = 0.5 * w
        if abs(w_new - w) <= 1e-16 * abs(w_new):
            w = w_new
            break
        w = w_new
    return w


def digamma(n0: int) -> EvalResult:
    """psi(n0) = Gamma'(n0) / Gamma(n0) at a positive integer.

    Uses psi(n) = -gamma + H_{n-1} with a correctly rounded harmonic sum for
    moderate n and the asymptotic Bernoulli series beyond that.
    """
    if int(n0) != n0 or n0 < 1:
        raise DomainError(f"digamma is implemented for integers n0 >= 1, got {n0}")
    n = int(n0)
    if n <= 20000:
        harmonic = math.fsum(1.0 / k for k in range(1, n))
        value = harmonic - EULER_GAMMA
        return EvalResult(value, _ROUNDING * (abs(value) + 1.0))
    x = float(n)
    terms = [math.log(x), -0.5 / x]
    inv2 = 1.0 / (x * x)
    power = inv2
    err = 0.0
    for k, bern in enumerate(_BERNOULLI_EVEN[:8], start=1):
        terms.append(-bern / (2 * k) * power)
        power *= inv2
        err = abs(_BERNOULLI_EVEN[k] / (2 * k + 2) * power)
    value = math.fsum(terms)
    return EvalResult(value, err + _ROUNDING * abs(value))


def upper_incomplete_gamma(s: float, x: float) -> EvalResult:
    """Gamma(s, x) = integral_x^inf exp(-t) t**(s-1) dt for s > 0, x >= 0.

    Small integer orders use the finite sum (s-1)! e^{-x} sum_k x^k / k!.
    Otherwise x < s + 1 goes through the lower series and Gamma(s) - gamma(s, x),
    and x >= s + 1 through the Legendre continued fraction (modified Lentz).
    """
    if not s > 0 or math.isinf(s):
        raise DomainError(f"upper_incomplete_gamma needs s > 0, got s={s}")
    if not x >= 0 or math.isinf(x):
        raise DomainError(f"upper_incomplete_gamma needs finite x >= 0, got x={x}")

    if s == int(s) and s <= 30:
        return _gamma_integer_order(int(s), x)
    if x == 0.0:
        value = _gamma_complete(s)
        return EvalResult(value, 8 * _ROUNDING * value)
    if x < s + 1.0:
        lower, rel = _lower_gamma_series(s, x)
        full = _gamma_complete(s)
        value = full - lower
        err = rel * lower + 8 * _ROUNDING * (full + lower)
        return EvalResult(value, err)
    value, rel = _upper_gamma_fraction(s, x)
    return EvalResult(value, (rel + 16 * _ROUNDING) * value)


def _gamma_complete(s: float) -> float:
    if s > 171.0:
        raise OverflowError(f"Gamma({s}) overflows a double")
    return math.gamma(s)


def _gamma_integer_order(n: int, x: float) -> EvalResult:
    # Gamma(n, x) = (n-1)! e^{-x} sum_{k<n} x^k / k!
    term = 1.0
    terms = [1.0]
    for k in range(1, n):
        term *= x / k
        terms.append(term)
    value = math.factorial(n - 1) * math.exp(-x) * math.fsum(terms)
    return EvalResult(value, 4 * n * _ROUNDING * value)


def _lower_gamma_series(s: float, x: float) -> tuple[float, float]:
    """gamma(s, x) = x^s e^{-x} sum_n x^n / (s (s+1) ... (s+n)) and a relative error."""
    if x == 0.0:
        return 0.0, 0.0
    term = 1.0 / s
    total = term
    a = s
    rel = 0.0
    for _ in range(10000):
        a += 1.0
        term *= x / a
        total += term
        ratio = x / (a + 1.0)
        if ratio < 1.0 and term * ratio / (1.0 - ratio) <= 1e-17 * total:
            rel = term * ratio / (1.0 - ratio) / total
            break
    exponent = s * math.log(x) - x
    prefactor = math.exp(exponent)
    # exp amplifies the rounding of its argument by |exponent|
    return prefactor * total, rel + (4.0 + abs(exponent)) * _ROUNDING


def _upper_gamma_fraction(s: float, x: float) -> tuple[float, float]:
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    delta = 0.0
    for i in range(1, 10000):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    exponent = s * math.log(x) - x
    prefactor = math.exp(exponent)
    return prefactor * h, abs(delta - 1.0) + 1e-15 + abs(exponent) * _ROUNDING
