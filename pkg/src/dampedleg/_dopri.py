"""Dormand-Prince 5(4) stepping for small ODE systems held in Python lists."""

import math

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = _A[6]
# fifth-order minus embedded fourth-order weights
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


def step(f, t, x, h, k1=None):
    """Advance ``x`` by one step of size ``h``.

    Returns ``(x_new, err, k_last)`` where ``err`` is the per-component local
    error estimate and ``k_last`` is the derivative at the new point (FSAL).
    """
    if k1 is None:
        k1 = f(t, x)
    a2, a3, a4, a5, a6, b = _A[1], _A[2], _A[3], _A[4], _A[5], _B
    k2 = f(t + _C[1] * h, [xi + h * a2[0] * p for xi, p in zip(x, k1)])
    k3 = f(
        t + _C[2] * h,
        [xi + h * (a3[0] * p + a3[1] * q) for xi, p, q in zip(x, k1, k2)],
    )
    k4 = f(
        t + _C[3] * h,
        [
            xi + h * (a4[0] * p + a4[1] * q + a4[2] * r)
            for xi, p, q, r in zip(x, k1, k2, k3)
        ],
    )
    k5 = f(
        t + _C[4] * h,
        [
            xi + h * (a5[0] * p + a5[1] * q + a5[2] * r + a5[3] * s)
            for xi, p, q, r, s in zip(x, k1, k2, k3, k4)
        ],
    )
    k6 = f(
        t + h,
        [
            xi + h * (a6[0] * p + a6[1] * q + a6[2] * r + a6[3] * s + a6[4] * u)
            for xi, p, q, r, s, u in zip(x, k1, k2, k3, k4, k5)
        ],
    )
    x_new = [
        xi + h * (b[0] * p + b[2] * r + b[3] * s + b[4] * u + b[5] * v)
        for xi, p, r, s, u, v in zip(x, k1, k3, k4, k5, k6)
    ]
    k7 = f(t + h, x_new)
    e = _E
    err = [
        h * (e[0] * p + e[2] * r + e[3] * s + e[4] * u + e[5] * v + e[6] * w)
        for p, r, s, u, v, w in zip(k1, k3, k4, k5, k6, k7)
    ]
    return x_new, err, k7


def error_norm(err, x, x_new, atol, rtol):
    total = 0.0
    for e, a, b in zip(err, x, x_new):
        scale = atol + rtol * max(abs(a), abs(b))
        total += (e / scale) ** 2
    return math.sqrt(total / len(err))


def next_step_size(h, norm, safety=0.9, min_factor=0.2, max_factor=10.0):
    if norm == 0.0:
        return h * max_factor
    factor = safety * norm ** (-1 / 5)
    return h * min(max_factor, max(min_factor, factor))
