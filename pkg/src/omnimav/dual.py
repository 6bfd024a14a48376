"""Tagged dual numbers for exact nested forward-mode differentiation.

Each call to :func:`derivative` opens a fresh perturbation tag.  Arithmetic
between duals of different tags treats the lower-tag operand as a constant of
the higher-tag one, which keeps nested derivatives from mixing their
infinitesimals (the usual "perturbation confusion" problem).

This module is deliberately plain Python: it backs the reference model and is
never on a hot path.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

_tags = itertools.count(1)


class Dual:
    __slots__ = ("re", "du", "tag")

    def __init__(self, re, du, tag: int):
        self.re = re
        self.du = du
        self.tag = tag

    def __repr__(self):
        return f"Dual({self.re!r}, {self.du!r}, tag={self.tag})"

    # arithmetic -----------------------------------------------------------
    def _split(self, other):
        """Return (tag, a.re, a.du, b.re, b.du) at the outermost tag."""
        tb = other.tag if isinstance(other, Dual) else 0
        if tb > self.tag:
            return tb, self, 0.0, other.re, other.du
        if tb == self.tag:
            return self.tag, self.re, self.du, other.re, other.du
        return self.tag, self.re, self.du, other, 0.0

    def __add__(self, other):
        t, ar, ad, br, bd = self._split(other)
        return Dual(ar + br, ad + bd, t)

    __radd__ = __add__

    def __sub__(self, other):
        t, ar, ad, br, bd = self._split(other)
        return Dual(ar - br, ad - bd, t)

    def __rsub__(self, other):
        t, ar, ad, br, bd = self._split(other)
        return Dual(br - ar, bd - ad, t)

    def __mul__(self, other):
        t, ar, ad, br, bd = self._split(other)
        return Dual(ar * br, ad * br + ar * bd, t)

    __rmul__ = __mul__

    def __truediv__(self, other):
        t, ar, ad, br, bd = self._split(other)
        return Dual(ar / br, (ad * br - ar * bd) / (br * br), t)

    def __rtruediv__(self, other):
        t, ar, ad, br, bd = self._split(other)
        return Dual(br / ar, (bd * ar - br * ad) / (ar * ar), t)

    def __neg__(self):
        return Dual(-self.re, -self.du, self.tag)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if not isinstance(k, (int, float)):
            raise TypeError("only constant exponents are supported")
        return Dual(self.re ** k, k * self.re ** (k - 1) * self.du, self.tag)


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.re), cos(x.re) * x.du, x.tag)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.re), -sin(x.re) * x.du, x.tag)
    return math.cos(x)


def sqrt(x):
    if isinstance(x, Dual):
        r = sqrt(x.re)
        return Dual(r, x.du / (2 * r), x.tag)
    return math.sqrt(x)


def _extract(value, tag):
    if isinstance(value, Dual) and value.tag == tag:
        return value.du
    if isinstance(value, (list, tuple)):
        return type(value)(_extract(v, tag) for v in value)
    return 0.0


def derivative(f, x, v=1.0):
    """Directional derivative of ``f`` at ``x`` along ``v``.

    ``x`` may be a scalar or a sequence (then ``v`` is a matching sequence).
    ``f`` may return a scalar or a (nested) list/tuple of scalars.
    """
    tag = next(_tags)
    if isinstance(x, (list, tuple, np.ndarray)):
        arg = [Dual(xi, vi, tag) for xi, vi in zip(x, v)]
    else:
        arg = Dual(x, v, tag)
    return _extract(f(arg), tag)


def gradient(f, x):
    n = len(x)
    return [derivative(f, list(x), [1.0 if j == i else 0.0 for j in range(n)])
            for i in range(n)]


def real(value) -> float:
    """Strip all perturbation parts, leaving the primal float."""
    while isinstance(value, Dual):
        value = value.re
    return float(value)
