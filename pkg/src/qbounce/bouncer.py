"""Stationary states of a neutron bouncing on a horizontal mirror.

Lengths are in metres and energies in joules throughout. The natural units
of the problem are the gravitational length ``z0 = (hbar^2 / (2 m^2 g))^(1/3)``
and energy ``e0 = m g z0``; in them the Hamiltonian reads ``-d^2/dxi^2 + xi``
and the n-th level sits at ``xi_n = -a_n``, with ``a_n`` the n-th Airy zero.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import airy as _airy
from ._validation import check_positive, check_weights
from .exceptions import DomainError

__all__ = [
    "PhysicalConstants",
    "GravScale",
    "Eigenstate",
    "DensityProfile",
    "UncertaintyBound",
    "grav_scale",
    "eigenstate",
    "eigenstates",
    "wavefunction",
    "density_profile",
    "classical_density",
    "uncertainty_bound",
    "trapezoid",
    "PEV",
]

PEV = 1.602176634e-31  # joules per pico-electronvolt
LEVEL_LIMIT = 1000  # highest level index the bouncer will construct


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.054571817e-34
    m: float = 1.67492750e-27
    g: float = 9.80665

    def __post_init__(self):
        for name in ("hbar", "m", "g"):
            check_positive(getattr(self, name), name)

    @property
    def h(self):
        return 2.0 * math.pi * self.hbar


@dataclass(frozen=True)
class GravScale:
    z0: float
    e0: float
    p0: float


@dataclass(frozen=True)
class Eigenstate:
    n: int
    a_n: float
    z_n: float
    e_n: float
    norm: float
    z0: float = field(repr=False)


@dataclass(frozen=True)
class DensityProfile:
    z_grid: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    per_state: np.ndarray = field(repr=False)

    def state(self, n):
        """Weighted density of level ``n`` (1-based) alone."""
        return self.per_state[n - 1]


@dataclass(frozen=True)
class UncertaintyBound:
    dp_z: float
    p1: float
    blocked: bool


def grav_scale(constants=None):
    """Length, energy and momentum scales of the gravitational bouncer."""
    c = constants or PhysicalConstants()
    z0 = (c.hbar ** 2 / (2.0 * c.m ** 2 * c.g)) ** (1.0 / 3.0)
    return GravScale(z0=z0, e0=c.m * c.g * z0, p0=c.hbar / z0)


def eigenstate(n, scale=None, constants=None):
    c = constants or PhysicalConstants()
    s = scale or grav_scale(c)
    a_n = _airy.airy_zero(n, n_max=LEVEL_LIMIT)
    z_n = -a_n * s.z0
    norm = 1.0 / (math.sqrt(s.z0) * abs(_airy.airy_ai_prime(a_n)))
    return Eigenstate(n=int(n), a_n=a_n, z_n=z_n, e_n=c.m * c.g * z_n, norm=norm, z0=s.z0)


def eigenstates(n_max, scale=None, constants=None):
    """Levels 1..n_max, lowest first."""
    if int(n_max) < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    c = constants or PhysicalConstants()
    s = scale or grav_scale(c)
    return [eigenstate(n, s, c) for n in range(1, int(n_max) + 1)]


def wavefunction(state, z):
    """psi_n(z) = norm * Ai(z / z0 + a_n); zero below the mirror."""
    z = np.asarray(z, dtype=float)
    arg = z / state.z0 + state.a_n
    psi = state.norm * np.asarray(_airy.airy_ai(np.maximum(arg, state.a_n)))
    psi = np.where(z < 0, 0.0, psi)
    return float(psi) if psi.ndim == 0 else psi


def trapezoid(y, x):
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def density_profile(n_max, z_grid, weights=None, scale=None, constants=None):
    """Weighted sum of squared eigenfunctions on ``z_grid``.

    ``weights=None`` populates every level equally.
    """
    z = np.asarray(z_grid, dtype=float).ravel()
    if z.size == 0:
        raise DomainError("z_grid is empty")
    states = eigenstates(n_max, scale, constants)
    w = check_weights(weights, len(states))
    per_state = np.array([wk * wavefunction(st, z) ** 2 for wk, st in zip(w, states)])
    return DensityProfile(z_grid=z, values=per_state.sum(axis=0), weights=w,
                          per_state=per_state)


def classical_density(h_return, z):
    """Time-fraction density of a classical bouncer with apex ``h_return``.

    Normalised to one on ``[0, h_return)``; the integrable singularity at the
    turning point is excluded.
    """
    h = check_positive(h_return, "h_return")
    z = np.asarray(z, dtype=float)
    if np.any(z < 0) or np.any(z >= h):
        raise DomainError("classical density is defined only for 0 <= z < h_return")
    out = 1.0 / (2.0 * np.sqrt(h * (h - z)))
    return float(out) if out.ndim == 0 else out


def uncertainty_bound(z_a, constants=None):
    """Coarse Heisenberg test for destruction of the ground state by the absorber.

    The momentum spread forced by confinement below ``z_a`` is ``h / z_a``;
    it is compared with the vertical momentum ``m sqrt(2 g z_1)`` a classical
    bouncer needs to reach the first level height.
    """
    z_a = check_positive(z_a, "z_a")
    c = constants or PhysicalConstants()
    z1 = eigenstate(1, grav_scale(c), c).z_n
    dp = c.h / z_a
    p1 = c.m * math.sqrt(2.0 * c.g * z1)
    return UncertaintyBound(dp_z=dp, p1=p1, blocked=bool(dp > p1))
