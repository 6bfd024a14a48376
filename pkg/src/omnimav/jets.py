"""Truncated Taylor arithmetic ("jets") for compiled kernels.

A jet is a 3-tuple ``(c0, c1, c2)`` of normalized Taylor coefficients of a
scalar function of one variable, i.e. f(t) = c0 + c1 t + c2 t^2 + O(t^3).
This is the dual-number algebra extended by one order: ``(c0, c1, 0)`` with
``c1`` the tangent behaves exactly like ``c0 + c1 eps``.

Tuples keep everything on the stack inside numba, which matters because the
controller evaluates the equations of motion a few hundred thousand times per
simulated run.
"""

import math

from numba import njit

ORDER = 3


@njit(inline="always", error_model="numpy")
def const(x):
    return (x, 0.0, 0.0)


@njit(inline="always", error_model="numpy")
def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


@njit(inline="always", error_model="numpy")
def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


@njit(inline="always", error_model="numpy")
def scale(a, s):
    return (a[0] * s, a[1] * s, a[2] * s)


@njit(inline="always", error_model="numpy")
def mul(a, b):
    return (a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[1] * b[1] + a[2] * b[0])


@njit(inline="always", error_model="numpy")
def sincos(a):
    s0 = math.sin(a[0])
    c0 = math.cos(a[0])
    s1 = a[1] * c0
    c1 = -a[1] * s0
    s2 = 0.5 * (a[1] * c1 + 2.0 * a[2] * c0)
    c2 = -0.5 * (a[1] * s1 + 2.0 * a[2] * s0)
    return (s0, s1, s2), (c0, c1, c2)


@njit(inline="always", error_model="numpy")
def row(arr, i):
    return (arr[i, 0], arr[i, 1], arr[i, 2])


@njit(inline="always", error_model="numpy")
def accumulate(arr, i, a):
    arr[i, 0] += a[0]
    arr[i, 1] += a[1]
    arr[i, 2] += a[2]


@njit(inline="always", error_model="numpy")
def accumulate_sym(mat, i, j, a):
    for k in range(3):
        mat[i, j, k] += a[k]
        if i != j:
            mat[j, i, k] += a[k]
