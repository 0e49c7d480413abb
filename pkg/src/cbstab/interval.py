"""Outward-rounded interval arithmetic on doubles.

Every primitive result is first computed in round-to-nearest; its exact
error is then recovered with error-free transformations (TwoSum for
``+``/``-``, Dekker's product for ``*``, residual checks for ``/`` and
``sqrt``) and the endpoint is stepped one ulp outward only when the
rounding went the wrong way.  ``exp`` and ``log`` have no exactness test
and are always widened by two ulps on each side.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

_INF = math.inf
_SPLIT = 134217729.0  # 2**27 + 1
# Dekker's product is exact only away from overflow and underflow
_PROD_SAFE_HI = 2.0 ** 996
_PROD_SAFE_LO = 2.0 ** -960


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _two_sum_err(a: float, b: float, s: float) -> float:
    bb = s - a
    return (a - (s - bb)) + (b - bb)


def _split(a: float):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod_err(a: float, b: float, p: float) -> float:
    ah, al = _split(a)
    bh, bl = _split(b)
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _prod_safe(a: float, b: float, p: float) -> bool:
    return all(_PROD_SAFE_LO < abs(v) < _PROD_SAFE_HI for v in (a, b, p))


def add_down(a, b):
    s = a + b
    if not math.isfinite(s):
        return s if s == -_INF or math.isnan(s) else math.nextafter(_INF, 0.0)
    return _down(s) if _two_sum_err(a, b, s) < 0 else s


def add_up(a, b):
    s = a + b
    if not math.isfinite(s):
        return s if s == _INF or math.isnan(s) else math.nextafter(-_INF, 0.0)
    return _up(s) if _two_sum_err(a, b, s) > 0 else s


def mul_down(a, b):
    p = a * b
    if a == 0.0 or b == 0.0:
        return 0.0
    if not _prod_safe(a, b, p):
        return _down(p)
    return _down(p) if _two_prod_err(a, b, p) < 0 else p


def mul_up(a, b):
    p = a * b
    if a == 0.0 or b == 0.0:
        return 0.0
    if not _prod_safe(a, b, p):
        return _up(p)
    return _up(p) if _two_prod_err(a, b, p) > 0 else p


def _div_residual_sign(a, b, q):
    """Sign of ``a/b - q`` (0 when exact), or ``None`` when it cannot be decided."""
    if not _prod_safe(q, b, q * b):
        return None
    p = q * b
    r = (a - p) - _two_prod_err(q, b, p)
    if r == 0.0:
        return 0
    return 1 if (r > 0) == (b > 0) else -1


def div_down(a, b):
    q = a / b
    if a == 0.0:
        return 0.0
    sgn = _div_residual_sign(a, b, q)
    return q if sgn is not None and sgn >= 0 else _down(q)


def div_up(a, b):
    q = a / b
    if a == 0.0:
        return 0.0
    sgn = _div_residual_sign(a, b, q)
    return q if sgn is not None and sgn <= 0 else _up(q)


def _sqrt_residual_sign(x, s):
    if s == 0.0 or not _prod_safe(s, s, s * s):
        return None
    p = s * s
    r = (x - p) - _two_prod_err(s, s, p)
    return 0 if r == 0.0 else (1 if r > 0 else -1)


def sqrt_down(x):
    s = math.sqrt(x)
    if x == 0.0:
        return 0.0
    sgn = _sqrt_residual_sign(x, s)
    return s if sgn is not None and sgn >= 0 else max(_down(s), 0.0)


def sqrt_up(x):
    s = math.sqrt(x)
    if x == 0.0:
        return 0.0
    sgn = _sqrt_residual_sign(x, s)
    return s if sgn is not None and sgn <= 0 else _up(s)


Number = Union[int, float, Fraction, "Interval"]


class Interval:
    """Closed interval ``[lo, hi]`` of reals with outward-rounded arithmetic."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        if hi is None:
            hi = lo
        if isinstance(lo, (Fraction, int)) and not isinstance(lo, bool):
            lo = _fraction_bounds(Fraction(lo))[0]
        if isinstance(hi, (Fraction, int)) and not isinstance(hi, bool):
            hi = _fraction_bounds(Fraction(hi))[1]
        lo, hi = float(lo), float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValueError(f"empty interval [{lo!r}, {hi!r}]")
        self.lo = lo
        self.hi = hi

    # construction -------------------------------------------------------
    @classmethod
    def exact(cls, value) -> "Interval":
        """Tightest enclosure of an exact rational (``int``, ``Fraction`` or decimal string)."""
        if isinstance(value, str):
            value = Fraction(value)
        if isinstance(value, float):
            return cls(value, value)
        lo, hi = _fraction_bounds(Fraction(value))
        return cls(lo, hi)

    @classmethod
    def hull(cls, *items) -> "Interval":
        items = [_coerce(x) for x in items]
        return cls(min(i.lo for i in items), max(i.hi for i in items))

    # queries ------------------------------------------------------------
    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, (Fraction, int)):
            lo_ok = self.lo == -_INF or Fraction(self.lo) <= x
            return lo_ok and (self.hi == _INF or x <= Fraction(self.hi))
        return self.lo <= x <= self.hi

    __contains__ = contains

    def certainly_le(self, other) -> bool:
        return self.hi <= _coerce(other).lo

    def certainly_lt(self, other) -> bool:
        return self.hi < _coerce(other).lo

    def certainly_ge(self, other) -> bool:
        return self.lo >= _coerce(other).hi

    def certainly_gt(self, other) -> bool:
        return self.lo > _coerce(other).hi

    def inflate(self, factor: float) -> "Interval":
        """Same midpoint, radius multiplied by ``factor`` (outward rounded)."""
        m = self.mid
        rad = max(sub_up(self.hi, m), sub_up(m, self.lo))
        r = mul_up(rad, factor)
        return Interval(sub_down(m, r), add_up(m, r))

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        o = _coerce(other)
        return Interval(add_down(self.lo, o.lo), add_up(self.hi, o.hi))

    __radd__ = __add__

    def __sub__(self, other):
        o = _coerce(other)
        return Interval(sub_down(self.lo, o.hi), sub_up(self.hi, o.lo))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other):
        o = _coerce(other)
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        return Interval(min(mul_down(a, b) for a, b in pairs),
                        max(mul_up(a, b) for a, b in pairs))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError(f"division by an interval containing 0: {o}")
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        return Interval(min(div_down(a, b) for a, b in pairs),
                        max(div_up(a, b) for a, b in pairs))

    def __rtruediv__(self, other):
        return _coerce(other) / self

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        if n == 0:
            return Interval(1.0)
        base = self
        if n % 2 == 0 and self.lo < 0.0:
            if self.hi <= 0.0:
                base = -self
            else:
                m = max(-self.lo, self.hi)
                top = Interval(m) ** n
                return Interval(0.0, top.hi)
        out = base
        for _ in range(n - 1):
            out = out * base
        return out

    def sqrt(self) -> "Interval":
        if self.lo < 0.0:
            raise ValueError(f"sqrt of an interval reaching below 0: {self}")
        return Interval(sqrt_down(self.lo), sqrt_up(self.hi))

    def exp(self) -> "Interval":
        lo = 1.0 if self.lo == 0.0 else max(_down(_down(math.exp(self.lo))), 0.0)
        hi = 1.0 if self.hi == 0.0 else _up(_up(math.exp(self.hi)))
        return Interval(lo, hi)

    def log(self) -> "Interval":
        if self.lo <= 0.0:
            raise ValueError(f"log of an interval reaching 0 or below: {self}")
        lo = 0.0 if self.lo == 1.0 else _down(_down(math.log(self.lo)))
        hi = 0.0 if self.hi == 1.0 else _up(_up(math.log(self.hi)))
        return Interval(lo, hi)

    def max(self, other) -> "Interval":
        o = _coerce(other)
        return Interval(max(self.lo, o.lo), max(self.hi, o.hi))

    def min(self, other) -> "Interval":
        o = _coerce(other)
        return Interval(min(self.lo, o.lo), min(self.hi, o.hi))

    # misc ---------------------------------------------------------------
    def __eq__(self, other):
        return isinstance(other, Interval) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __str__(self):
        if self.lo == self.hi:
            return f"[{self.lo:.10g}]"
        return f"[{self.lo:.10g}, {self.hi:.10g}]"

    def to_list(self):
        return [self.lo, self.hi]


def sub_down(a, b):
    return add_down(a, -b)


def sub_up(a, b):
    return add_up(a, -b)


def _fraction_bounds(q: Fraction):
    f = float(q)
    fq = Fraction(f)
    if fq == q:
        return f, f
    if fq < q:
        return f, _up(f)
    return _down(f), f


def _coerce(x) -> Interval:
    if isinstance(x, Interval):
        return x
    if isinstance(x, float):
        return Interval(x, x)
    if isinstance(x, (int, Fraction)):
        return Interval.exact(x)
    if isinstance(x, str):
        return Interval.exact(x)
    raise TypeError(f"cannot use {type(x).__name__} as an interval")


def sqrt(x) -> Interval:
    return _coerce(x).sqrt()


def exp(x) -> Interval:
    return _coerce(x).exp()


def log(x) -> Interval:
    return _coerce(x).log()
