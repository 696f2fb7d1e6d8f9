"""Airy function Ai, its derivative and its negative zeros.

Evaluation strategy
-------------------
For ``|x| <= X_SWITCH`` the value comes from the Maclaurin double series.
Summed naively in double precision the series cancels catastrophically
(``Ai`` is a small difference of two growing series), so it is summed once
in 60-digit decimal arithmetic at anchor nodes spaced ``ANCHOR_STEP``
apart. Between anchors the solution of ``y'' = x y`` is continued by its
local Taylor expansion, whose coefficients follow from the anchor values
by a three-term recurrence. Beyond ``X_SWITCH`` the classical asymptotic
expansions are used: exponentially decaying for ``x -> +inf`` and
oscillatory for ``x -> -inf``.

All public functions accept scalars or arrays and are pure.
"""

from dataclasses import dataclass
from decimal import Decimal, localcontext
from functools import lru_cache
import math

import numpy as np

from .exceptions import ConvergenceError, DomainError

__all__ = [
    "AiryValue",
    "airy",
    "airy_ai",
    "airy_ai_prime",
    "airy_value",
    "airy_zero",
    "airy_zeros",
    "X_SWITCH",
]

X_SWITCH = 8.0
ANCHOR_STEP = 0.25
N_MAX_DEFAULT = 100

# Ai(0) = 3^(-2/3)/Gamma(2/3), Ai'(0) = -3^(-1/3)/Gamma(1/3)
_AI0 = "0.35502805388781723926006318600418317639797917419918"
_AIP0 = "-0.25881940379280679840518356018920396347909113835493"

_TAYLOR_ORDER = 26
_ASYMPTOTIC_TERMS = 26
_NEWTON_BUDGET = 50


@dataclass(frozen=True)
class AiryValue:
    x: float
    ai: float
    ai_prime: float


def _maclaurin_decimal(x, prec=60):
    """Ai(x), Ai'(x) from the two Maclaurin series in decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = prec
        x = Decimal(repr(float(x)))
        x3 = x * x * x
        tiny = Decimal(10) ** (-prec + 5)
        # f = sum 3^k (1/3)_k x^{3k}/(3k)!,  g = sum 3^k (2/3)_k x^{3k+1}/(3k+1)!
        f = fk = Decimal(1)
        g = gk = x
        fp = Decimal(0)
        gp = Decimal(1)
        fpk = None
        gpk = Decimal(1)
        k = 0
        while True:
            k += 1
            fk = fk * x3 / ((3 * k - 1) * (3 * k))
            gk = gk * x3 / ((3 * k) * (3 * k + 1))
            # term-wise derivatives: d/dx x^n = n x^{n-1}
            fpk = fk * (3 * k) / x if x != 0 else Decimal(0)
            gpk = gk * (3 * k + 1) / x if x != 0 else Decimal(0)
            f += fk
            g += gk
            fp += fpk
            gp += gpk
            scale = max(abs(f), abs(g), Decimal(1))
            if k > 3 and max(abs(fk), abs(gk), abs(fpk), abs(gpk)) < tiny * scale:
                break
        c1 = Decimal(_AI0)
        c2 = -Decimal(_AIP0)
        return float(c1 * f - c2 * g), float(c1 * fp - c2 * gp)


@lru_cache(maxsize=1)
def _anchor_table():
    n = int(round(X_SWITCH / ANCHOR_STEP))
    nodes = np.arange(-n, n + 1) * ANCHOR_STEP
    vals = np.array([_maclaurin_decimal(x) for x in nodes])
    return nodes, vals[:, 0], vals[:, 1]


def _taylor_region(x):
    nodes, ai_nodes, aip_nodes = _anchor_table()
    idx = np.rint((x - nodes[0]) / ANCHOR_STEP).astype(int)
    idx = np.clip(idx, 0, nodes.size - 1)
    xj = nodes[idx]
    h = x - xj
    # Taylor coefficients of y'' = (xj + h) y:  c_{k+2} = (xj c_k + c_{k-1}) / ((k+2)(k+1))
    c_km1 = np.zeros_like(x)
    c_k = ai_nodes[idx].copy()
    c_kp1 = aip_nodes[idx].copy()
    ai = c_k + c_kp1 * h
    aip = c_kp1.copy()
    hk = h.copy()  # h^(k+1) at the loop head, k = 0
    hk_m1 = np.ones_like(x)  # h^k
    for k in range(0, _TAYLOR_ORDER):
        c_kp2 = (xj * c_k + c_km1) / ((k + 2) * (k + 1))
        hk_m1 = hk
        hk = hk * h
        ai = ai + c_kp2 * hk
        aip = aip + (k + 2) * c_kp2 * hk_m1
        c_km1, c_k, c_kp1 = c_k, c_kp1, c_kp2
    return ai, aip


@lru_cache(maxsize=1)
def _asymptotic_coefficients():
    u = [1.0]
    for k in range(1, _ASYMPTOTIC_TERMS):
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / ((2 * k - 1) * 216 * k))
    u = np.array(u)
    k = np.arange(_ASYMPTOTIC_TERMS)
    v = -(6 * k + 1) / (6 * k - 1) * u
    return u, v


def _asymptotic_positive(x):
    u, v = _asymptotic_coefficients()
    zeta = 2.0 / 3.0 * x ** 1.5
    powers = (-1.0 / zeta[:, None]) ** np.arange(u.size)[None, :]
    su = powers @ u
    sv = powers @ v
    pref = np.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    q = x ** 0.25
    return pref / q * su, -pref * q * sv


def _asymptotic_negative(x):
    u, v = _asymptotic_coefficients()
    r = -x
    zeta = 2.0 / 3.0 * r ** 1.5
    k = np.arange(u.size)
    inv = (1.0 / zeta[:, None]) ** k[None, :]
    sign = np.where((k // 2) % 2 == 0, 1.0, -1.0)[None, :]
    even = (k % 2 == 0)[None, :]
    pu_even = (inv * sign * even) @ u
    pu_odd = (inv * sign * ~even) @ u
    pv_even = (inv * sign * even) @ v
    pv_odd = (inv * sign * ~even) @ v
    phase = zeta - math.pi / 4.0
    c, s = np.cos(phase), np.sin(phase)
    q = r ** 0.25
    ai = (c * pu_even + s * pu_odd) / (math.sqrt(math.pi) * q)
    aip = q * (s * pv_even - c * pv_odd) / math.sqrt(math.pi)
    return ai, aip


def _evaluate(x, branch=None):
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise DomainError("Airy functions require finite arguments")
    ai = np.empty_like(x)
    aip = np.empty_like(x)
    if branch is None:
        inner = np.abs(x) <= X_SWITCH
        pos = x > X_SWITCH
        neg = x < -X_SWITCH
    else:
        # forced branch, used to check branch agreement near the switch
        inner = np.full(x.shape, branch == "series")
        pos = (~inner) & (x > 0)
        neg = (~inner) & (x <= 0)
    if inner.any():
        ai[inner], aip[inner] = _taylor_region(x[inner])
    if pos.any():
        ai[pos], aip[pos] = _asymptotic_positive(x[pos])
    if neg.any():
        ai[neg], aip[neg] = _asymptotic_negative(x[neg])
    if scalar:
        return float(ai[0]), float(aip[0])
    return ai, aip


def airy(x):
    """Return ``(Ai(x), Ai'(x))`` for a scalar or array argument."""
    return _evaluate(x)


def airy_ai(x):
    """Airy function of the first kind, Ai(x).

    Absolute error is below 1e-12 for ``|x| <= 10``; relative error (to the
    oscillation envelope on the negative axis) is below 1e-10 out to
    ``|x| = 100``.
    """
    return _evaluate(x)[0]


def airy_ai_prime(x):
    """Derivative Ai'(x), with the same accuracy as :func:`airy_ai`."""
    return _evaluate(x)[1]


def airy_value(x):
    ai, aip = _evaluate(float(x))
    return AiryValue(float(x), ai, aip)


def airy_zero(n, n_max=N_MAX_DEFAULT):
    """The n-th negative zero a_n of Ai (a_1 = -2.3381...).

    Seeded with -(3 pi (4n - 1) / 8)^(2/3) and polished by Newton's method.
    """
    if isinstance(n, bool) or int(n) != n:
        raise DomainError(f"zero index must be an integer, got {n!r}")
    n = int(n)
    if not 1 <= n <= n_max:
        raise DomainError(f"zero index must be in [1, {n_max}], got {n}")
    return _zero(n)


@lru_cache(maxsize=None)
def _zero(n):
    t = 3.0 * math.pi * (4 * n - 1) / 8.0
    x = -(t ** (2.0 / 3.0))
    for _ in range(_NEWTON_BUDGET):
        ai, aip = _evaluate(x)
        step = ai / aip
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            return x
    raise ConvergenceError(f"Newton iteration for Airy zero {n} did not converge",
                           partial=x)


def airy_zeros(n, n_max=N_MAX_DEFAULT):
    """First ``n`` zeros as an array, most-negative last."""
    return np.array([airy_zero(k, n_max=max(n_max, n)) for k in range(1, n + 1)])
