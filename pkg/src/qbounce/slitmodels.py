"""Analytic transmission models of the absorbing slit.

Every model maps absorber heights ``z_a`` to a (relative) count rate:

* :func:`count_rate` -- flux times aperture times survival, the measured quantity;
* :func:`classical_transmission` -- the ``z_a^(3/2)`` classical law;
* :func:`semiclassical_lowest_level` -- classical law with the lowest-level
  phase space removed;
* :func:`stepwise_transmission` -- ideal staircase with a jump at each level height;
* :func:`modesum_transmission` -- each level loses ``kappa * tail`` per absorber
  contact, over ``n_b`` contacts.

The power-law models are unit-agnostic: ``scale_c`` is per (height unit)^1.5
in whatever unit the heights are given. Models that depend on level
heights take metres.
"""

from dataclasses import dataclass
import math

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import airy as _airy
from ._validation import (
    check_heights,
    check_positive,
    check_probability,
    check_weights,
)
from .bouncer import LEVEL_LIMIT, PhysicalConstants, eigenstates, grav_scale
from .exceptions import DomainError

__all__ = [
    "BeamSpec",
    "AbsorberModel",
    "TransmissionCurve",
    "survival_probability",
    "count_rate",
    "classical_transmission",
    "stepwise_transmission",
    "mode_tail",
    "mode_tails",
    "modesum_transmission",
    "semiclassical_lowest_level",
]

# Ai(s)^2 < 1e-20 beyond s = 12; tails are cut there
_TAIL_CUT = 12.0
_PANEL = 0.5  # Gauss-Legendre panel width in units of z0
_GL_NODES, _GL_WEIGHTS = leggauss(16)


@dataclass(frozen=True)
class BeamSpec:
    rho: float = 1.0
    v_min: float = 4.0
    v_max: float = 10.0
    theta_max: float = 1e-4
    width: float = 0.1

    def __post_init__(self):
        check_positive(self.rho, "rho", strict=False)
        check_positive(self.v_min, "v_min")
        check_positive(self.theta_max, "theta_max", strict=False)
        check_positive(self.width, "width")
        if not self.v_min < self.v_max:
            raise DomainError(f"need v_min < v_max, got {self.v_min} >= {self.v_max}")

    @property
    def mean_speed(self):
        return 0.5 * (self.v_min + self.v_max)

    @property
    def flux(self):
        return self.rho * self.mean_speed

    def kinetic_energy(self, v, constants=None):
        c = constants or PhysicalConstants()
        return 0.5 * c.m * v ** 2


@dataclass(frozen=True)
class AbsorberModel:
    kappa: float = 1.0
    n_b: float = 15.0
    r_front: float = 0.0
    eff_det: float = 1.0

    def __post_init__(self):
        check_probability(self.kappa, "kappa")
        check_positive(self.n_b, "n_b", strict=False)
        check_probability(self.r_front, "r_front")
        check_probability(self.eff_det, "eff_det")


@dataclass(frozen=True)
class TransmissionCurve:
    z_a_grid: np.ndarray
    counts: np.ndarray
    model_tag: str
    stat_err: np.ndarray = None

    def __post_init__(self):
        z = np.asarray(self.z_a_grid, dtype=float).ravel()
        c = np.asarray(self.counts, dtype=float).ravel()
        if z.size == 0 or z.size != c.size:
            raise DomainError("z_a_grid and counts must be non-empty and of equal length")
        if np.any(np.diff(z) <= 0):
            raise DomainError("z_a_grid must be strictly increasing")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise DomainError("counts must be finite and non-negative")
        object.__setattr__(self, "z_a_grid", z)
        object.__setattr__(self, "counts", c)
        if self.stat_err is not None:
            e = np.asarray(self.stat_err, dtype=float).ravel()
            if e.size != z.size:
                raise DomainError("stat_err must match z_a_grid in length")
            object.__setattr__(self, "stat_err", e)

    def __len__(self):
        return self.z_a_grid.size


def survival_probability(p_a, n_b):
    """Chance of passing ``n_b`` absorber contacts, each absorbing with ``p_a``."""
    p_a = check_probability(p_a, "p_a")
    n_b = check_positive(n_b, "n_b", strict=False)
    if n_b == 0:
        return 1.0
    return (1.0 - p_a) ** n_b


def count_rate(beam, z_a, absorber, p_sur):
    """Detector count rate ``phi * A * (1 - r) * eff * p_sur`` with ``A = width * z_a``."""
    z = check_heights(z_a, allow_zero=False)
    p_sur = np.asarray(p_sur, dtype=float)
    if np.any((p_sur < 0) | (p_sur > 1)):
        raise DomainError("p_sur must lie in [0, 1]")
    area = beam.width * z
    out = beam.flux * area * (1.0 - absorber.r_front) * absorber.eff_det * p_sur
    return _maybe_scalar(out, z_a)


def classical_transmission(z_a, scale_c=1.0):
    z = check_heights(z_a)
    return _maybe_scalar(scale_c * z ** 1.5, z_a)


def semiclassical_lowest_level(z_a, scale_c=1.0, z_cut=None, constants=None):
    """Classical curve minus the phase space of the lowest level.

    ``z_cut`` defaults to the first level height z_1.
    """
    z = check_heights(z_a)
    if z_cut is None:
        z_cut = eigenstates(1, constants=constants)[0].z_n
    z_cut = check_positive(z_cut, "z_cut", strict=False)
    return _maybe_scalar(scale_c * np.maximum(0.0, z ** 1.5 - z_cut ** 1.5), z_a)


def stepwise_transmission(z_a, states, weights=None):
    """Idealised staircase: sum of ``w_n`` over levels with ``z_n < z_a``."""
    if not states:
        raise DomainError("stepwise transmission needs at least one level")
    z = check_heights(z_a)
    w = check_weights(weights, len(states))
    heights = np.array([s.z_n for s in states])
    out = (z[:, None] > heights[None, :]).astype(float) @ w
    return _maybe_scalar(out, z_a)


def mode_tail(state, z_a):
    """Probability weight of level ``state`` above the absorber height ``z_a``.

    Composite 16-point Gauss-Legendre quadrature of ``psi_n^2`` from ``z_a``
    to the point where ``Ai^2`` has dropped below 1e-20.
    """
    z = check_heights(z_a)
    return _maybe_scalar(_tail(state.a_n, z / state.z0), z_a)


def _tail(a_n, xi_a):
    """Tail integral in dimensionless heights ``xi = z / z0``.

    The heights split ``[min xi_a, cut]`` into intervals, each integrated
    once with Gauss-Legendre panels; tails follow by summing from the top.
    """
    xi_a = np.asarray(xi_a, dtype=float)
    xi_end = _TAIL_CUT - a_n
    out = np.zeros(xi_a.shape)
    live = xi_a < xi_end
    if not live.any():
        return out
    knots = np.unique(np.append(xi_a[live], xi_end))
    lengths = np.diff(knots)
    counts = np.maximum(1, np.ceil(lengths / _PANEL).astype(int))
    owner = np.repeat(np.arange(lengths.size), counts)
    offset = np.arange(owner.size) - np.repeat(np.cumsum(counts) - counts, counts)
    width = (lengths / counts)[owner]
    left = knots[:-1][owner] + offset * width
    nodes = left[:, None] + 0.5 * width[:, None] * (_GL_NODES + 1.0)[None, :]
    ai = _airy.airy_ai(nodes.ravel() + a_n).reshape(nodes.shape)
    panel = 0.5 * width * (ai ** 2 @ _GL_WEIGHTS)
    pieces = np.bincount(owner, weights=panel, minlength=lengths.size)
    from_top = np.append(np.cumsum(pieces[::-1])[::-1], 0.0)
    out[live] = from_top[np.searchsorted(knots, xi_a[live])] / _airy.airy_ai_prime(a_n) ** 2
    return np.clip(out, 0.0, 1.0)


def mode_tails(z_a, n_max, constants=None):
    """Tail matrix ``tau[i, n]`` for heights ``z_a[i]`` and levels ``1..n_max``."""
    z = check_heights(z_a)
    c = constants or PhysicalConstants()
    z0 = grav_scale(c).z0
    cols = [_tail(_airy.airy_zero(n, n_max=LEVEL_LIMIT), z / z0)
            for n in range(1, int(n_max) + 1)]
    return np.column_stack(cols)


def _modesum_from_tails(tails, weights, kappa, n_b):
    base = np.maximum(0.0, 1.0 - kappa * tails)
    return (base ** n_b) @ weights


def modesum_transmission(z_a, n_max, weights=None, absorber=None, constants=None):
    """Sum over levels of ``w_n * (1 - kappa * tau_n(z_a))^n_b``."""
    if int(n_max) < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    absorber = absorber or AbsorberModel()
    w = check_weights(weights, int(n_max))
    tails = mode_tails(z_a, n_max, constants)
    out = _modesum_from_tails(tails, w, absorber.kappa, absorber.n_b)
    return _maybe_scalar(out, z_a)


def _maybe_scalar(out, like):
    if np.ndim(like) == 0:
        return float(np.asarray(out).ravel()[0])
    return out
