"""Crank-Nicolson propagation of the vertical wave function in the slit.

The horizontal motion is reduced to a clock, ``t = x / v_x``, so the slit
becomes a 1-D time-dependent problem on ``0 <= z <= z_max``::

    i hbar dpsi/dt = -hbar^2/(2m) psi'' + m g z psi - i Gamma [z >= z_a] psi

with Dirichlet walls at both ends (the lower one is the mirror). Internally
everything runs in gravitational units (length ``z0``, energy ``e0``, time
``hbar / e0``), where the Hamiltonian is ``-d^2/dxi^2 + xi``. The public
API takes and returns SI quantities.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import lapack

from ._validation import check_heights, check_positive, check_weights
from .bouncer import (
    PhysicalConstants,
    eigenstate,
    grav_scale,
    wavefunction,
)
from .exceptions import DomainError, QBounceError
from .slitmodels import BeamSpec, TransmissionCurve, mode_tails

__all__ = [
    "GridSpec",
    "PotentialGrid",
    "Wavepacket",
    "Eigen",
    "Superposition",
    "Gaussian",
    "TransitResult",
    "CrankNicolson",
    "build_potential",
    "init_state",
    "step",
    "propagate_transit",
    "phase_energy",
    "default_transit_time",
    "stiff_step",
    "tdse_transmission_scan",
    "level_survivals",
    "level_sum_scan",
]

MIN_POINTS = 512
DT_FRACTION = 200  # default dt = (hbar / E_1) / DT_FRACTION
GAMMA_FACTOR = 3.0  # default absorber strength in units of E_1; survival minimum vs gamma
DEFAULT_LENGTH = 0.14


@dataclass(frozen=True)
class GridSpec:
    z_max: float
    n_points: int
    dt: float

    def __post_init__(self):
        check_positive(self.z_max, "z_max")
        check_positive(self.dt, "dt")
        if int(self.n_points) < MIN_POINTS:
            raise DomainError(f"n_points must be >= {MIN_POINTS}, got {self.n_points}")

    @property
    def dz(self):
        return self.z_max / (self.n_points - 1)

    @property
    def z(self):
        return np.linspace(0.0, self.z_max, int(self.n_points))

    @classmethod
    def for_levels(cls, n_levels=4, n_points=2048, dt=None, constants=None, z_min=0.0):
        """Grid reaching four times the height of level ``n_levels`` (or ``z_min``)."""
        c = constants or PhysicalConstants()
        top = eigenstate(max(int(n_levels), 1), constants=c).z_n
        e1 = eigenstate(1, constants=c).e_n
        if dt is None:
            dt = c.hbar / e1 / DT_FRACTION
        return cls(z_max=max(4.0 * top, z_min), n_points=int(n_points), dt=dt)

    def refined(self, factor=2):
        """Same domain with ``dz`` and ``dt`` divided by ``factor``."""
        return GridSpec(self.z_max, (self.n_points - 1) * factor + 1, self.dt / factor)


@dataclass(frozen=True)
class PotentialGrid:
    v_real: np.ndarray
    v_imag: np.ndarray
    z_a: float
    gamma: float


@dataclass
class Wavepacket:
    amplitudes: np.ndarray
    time: float = 0.0

    def norm(self, grid):
        return float(np.sum(np.abs(self.amplitudes) ** 2) * grid.dz)

    def density(self):
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class Eigen:
    n: int


@dataclass(frozen=True)
class Superposition:
    weights: tuple


@dataclass(frozen=True)
class Gaussian:
    center: float
    width: float
    k: float = 0.0


@dataclass
class TransitResult:
    survival: float
    final: Wavepacket
    n_steps: int = 0
    norms: np.ndarray = field(default=None, repr=False)


def build_potential(grid, z_a, gamma=None, constants=None):
    """Linear gravity plus ``-i gamma`` above ``z_a``; ``gamma`` defaults to 3 E_1.

    The absorber is cell-averaged: a node within ``dz/2`` of the edge gets
    the share of its cell lying above ``z_a``.

    ``z_a=None`` (or ``gamma=0``) gives the absorber-free potential.
    """
    c = constants or PhysicalConstants()
    if gamma is None:
        gamma = GAMMA_FACTOR * eigenstate(1, constants=c).e_n
    gamma = check_positive(gamma, "gamma", strict=False)
    z = grid.z
    v_real = c.m * c.g * z
    if z_a is None:
        v_imag = np.zeros_like(z)
        z_a = math.inf
    else:
        z_a = check_positive(z_a, "z_a")
        # fraction of each node's cell [z - dz/2, z + dz/2] above z_a; a plain
        # step puts the edge O(dz) off, which the exponential decay amplifies
        frac = np.clip((z - z_a) / grid.dz + 0.5, 0.0, 1.0)
        v_imag = -gamma * frac
    return PotentialGrid(v_real=v_real, v_imag=v_imag, z_a=z_a, gamma=gamma)


def _discrete_normalize(psi, dz):
    nrm = math.sqrt(float(np.sum(np.abs(psi) ** 2) * dz))
    if nrm == 0.0 or not math.isfinite(nrm):
        raise DomainError("initial state is not normalisable")
    return psi / nrm


def _sampled_states(levels, grid, constants):
    """Eigenfunctions sampled on the grid, orthonormalised in the discrete inner product."""
    z = grid.z
    scale = grav_scale(constants)
    phi = np.column_stack([wavefunction(eigenstate(n, scale, constants), z) for n in levels])
    phi[0] = 0.0
    phi[-1] = 0.0
    q, r = np.linalg.qr(phi * math.sqrt(grid.dz))
    q = q * np.sign(np.diag(r))[None, :]
    return q / math.sqrt(grid.dz)


def init_state(spec, grid, constants=None):
    """Normalised initial wave packet from an :class:`Eigen`, :class:`Superposition`
    or :class:`Gaussian` spec (or the equivalent one-key dict)."""
    c = constants or PhysicalConstants()
    if isinstance(spec, dict):
        spec = _spec_from_dict(spec)
    z = grid.z
    if isinstance(spec, Eigen):
        psi = wavefunction(eigenstate(spec.n, constants=c), z).astype(complex)
    elif isinstance(spec, Superposition):
        w = np.asarray(spec.weights, dtype=complex).ravel()
        if w.size == 0 or not np.any(w != 0):
            raise DomainError("superposition weights are all zero")
        basis = _sampled_states(range(1, w.size + 1), grid, c)
        psi = basis @ w
    elif isinstance(spec, Gaussian):
        if spec.width < 4 * grid.dz:
            raise DomainError("gaussian width must be at least 4 grid steps")
        psi = np.exp(-0.5 * ((z - spec.center) / spec.width) ** 2 + 1j * spec.k * z)
    else:
        raise DomainError(f"unknown initial-state spec {spec!r}")
    psi = np.asarray(psi, dtype=complex)
    psi[0] = 0.0
    psi[-1] = 0.0
    return Wavepacket(_discrete_normalize(psi, grid.dz), 0.0)


def _spec_from_dict(d):
    if len(d) != 1:
        raise DomainError("initial-state spec must have exactly one key")
    (kind, value), = d.items()
    if kind == "eigen":
        return Eigen(int(value))
    if kind == "superposition":
        return Superposition(tuple(value))
    if kind == "gaussian":
        return Gaussian(*value)
    raise DomainError(f"unknown initial-state kind {kind!r}")


class CrankNicolson:
    """Factorised Crank-Nicolson propagator for a fixed potential and grid.

    The tridiagonal left-hand matrix is LU-factorised once (LAPACK
    ``zgttrf``); each step is then one banded multiply and one ``zgttrs``
    solve. Several wave functions can be advanced at once as columns.
    """

    def __init__(self, pot, grid, constants=None, dt=None):
        c = constants or PhysicalConstants()
        if pot.v_real.shape != (grid.n_points,):
            raise DomainError("potential and grid sizes differ")
        s = grav_scale(c)
        self.grid = grid
        self.dt = grid.dt if dt is None else dt
        dxi = grid.dz / s.z0
        tau = self.dt * s.e0 / c.hbar
        v = (pot.v_real + 1j * pot.v_imag)[1:-1] / s.e0
        m = v.size
        kin = 1.0 / dxi ** 2
        h_diag = 2.0 * kin + v
        a = 0.5j * tau
        self._b_diag = 1.0 - a * h_diag
        self._b_off = a * kin
        dl = np.full(m - 1, -a * kin, dtype=complex)
        d = (1.0 + a * h_diag).astype(complex)
        du = dl.copy()
        dl, d, du, du2, ipiv, info = lapack.zgttrf(dl, d, du)
        if info != 0:
            raise QBounceError(f"singular Crank-Nicolson matrix (zgttrf info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def apply(self, amplitudes):
        """Advance interior amplitudes (1-D or columns) by one step in place-safe fashion."""
        psi = np.asarray(amplitudes, dtype=complex)
        inner = psi[1:-1]
        rhs = self._b_diag.reshape((-1,) + (1,) * (inner.ndim - 1)) * inner
        rhs[:-1] += self._b_off * inner[1:]
        rhs[1:] += self._b_off * inner[:-1]
        dl, d, du, du2, ipiv = self._lu
        x, info = lapack.zgttrs(dl, d, du, du2, ipiv, rhs)
        if info != 0:
            raise QBounceError(f"tridiagonal solve failed (zgttrs info={info})")
        out = np.zeros_like(psi)
        out[1:-1] = x
        return out

    def step(self, psi):
        return Wavepacket(self.apply(psi.amplitudes), psi.time + self.dt)


def step(psi, pot, grid, constants=None):
    """One Crank-Nicolson step of length ``grid.dt``."""
    if psi.amplitudes.shape != (grid.n_points,):
        raise DomainError("wave packet and grid sizes differ")
    return CrankNicolson(pot, grid, constants).step(psi)


def default_transit_time(length=DEFAULT_LENGTH, v_x=None):
    """Time spent in a slit of ``length`` at horizontal speed ``v_x`` (beam mean by default)."""
    v_x = BeamSpec().mean_speed if v_x is None else check_positive(v_x, "v_x")
    return check_positive(length, "length") / v_x


def stiff_step(dz, constants=None):
    """Time step at which the grid's highest mode has ``E_max * dt = hbar``.

    Crank-Nicolson keeps modes with ``E dt >> hbar`` almost undamped and
    nearly frozen in place, so deep cut-off survivals (< 1e-6) are only
    meaningful for ``dt`` at or below this value.
    """
    c = constants or PhysicalConstants()
    dz = check_positive(dz, "dz")
    return c.m * dz ** 2 / (2.0 * c.hbar)


def _n_steps(t_total, dt):
    n = max(1, int(math.ceil(t_total / dt - 1e-9)))
    return n, t_total / n


def propagate_transit(psi, pot, grid, t_transit, constants=None, record_norms=False):
    """Propagate through the slit for ``t_transit`` seconds.

    The step count is ``ceil(t_transit / grid.dt)`` with the step shortened
    to land exactly on ``t_transit``. ``survival`` is the final norm over the
    initial norm.
    """
    t_transit = check_positive(t_transit, "t_transit")
    n, dt = _n_steps(t_transit, grid.dt)
    prop = CrankNicolson(pot, grid, constants, dt=dt)
    n0 = psi.norm(grid)
    amp = psi.amplitudes
    norms = np.empty(n + 1) if record_norms else None
    if record_norms:
        norms[0] = n0
    for k in range(n):
        amp = prop.apply(amp)
        if record_norms:
            norms[k + 1] = np.sum(np.abs(amp) ** 2) * grid.dz
    final = Wavepacket(amp, psi.time + t_transit)
    return TransitResult(final.norm(grid) / n0, final, n, norms)


def phase_energy(psi0, pot, grid, t_total, n_samples=64, constants=None):
    """Energy (J) from the phase of ``<psi0|psi(t)>``.

    The phase is unwrapped over ``n_samples`` equally spaced times and fitted
    by a straight line through the origin; for an eigenstate the slope is
    ``-E / hbar``.
    """
    c = constants or PhysicalConstants()
    n, dt = _n_steps(t_total, grid.dt)
    prop = CrankNicolson(pot, grid, c, dt=dt)
    every = max(1, n // n_samples)
    amp = psi0.amplitudes
    times, phases = [0.0], [0.0]
    for k in range(1, n + 1):
        amp = prop.apply(amp)
        if k % every == 0:
            overlap = np.vdot(psi0.amplitudes, amp) * grid.dz
            times.append(k * dt)
            phases.append(np.angle(overlap))
    phases = np.unwrap(np.array(phases))
    times = np.array(times)
    slope = float(times @ phases / (times @ times))
    return -slope * c.hbar


def tdse_transmission_scan(z_a_grid, init, grid, t_transit=None, gamma=None, constants=None):
    """Survival of a coherent initial state versus absorber height.

    The grid is extended where needed so that it reaches at least
    ``z_a + 4 z0`` (room for the absorbing layer).
    """
    c = constants or PhysicalConstants()
    z = check_heights(z_a_grid, allow_zero=False)
    t_transit = default_transit_time() if t_transit is None else t_transit
    z0 = grav_scale(c).z0
    survivals = []
    for za in z:
        g = _grid_covering(grid, za + 4.0 * z0)
        psi = init_state(init, g, c)
        pot = build_potential(g, za, gamma, c)
        survivals.append(propagate_transit(psi, pot, g, t_transit, c).survival)
    return TransmissionCurve(z, np.clip(survivals, 0.0, None), "tdse")


def _grid_covering(grid, z_top):
    if grid.z_max >= z_top:
        return grid
    n = int(math.ceil(z_top / grid.dz)) + 1
    return GridSpec(z_max=(n - 1) * grid.dz, n_points=n, dt=grid.dt)


def level_survivals(levels, z_a, grid, t_transit=None, gamma=None, constants=None):
    """Survival of each eigenstate in ``levels`` propagated separately.

    All levels are advanced together as columns of one right-hand side.
    """
    c = constants or PhysicalConstants()
    t_transit = default_transit_time() if t_transit is None else t_transit
    levels = list(levels)
    if not levels:
        return np.zeros(0)
    z = grid.z
    scale = grav_scale(c)
    phi = np.column_stack([wavefunction(eigenstate(n, scale, c), z) for n in levels])
    phi = phi.astype(complex)
    phi[0] = phi[-1] = 0.0
    n0 = np.sum(np.abs(phi) ** 2, axis=0)
    pot = build_potential(grid, z_a, gamma, c)
    n, dt = _n_steps(t_transit, grid.dt)
    prop = CrankNicolson(pot, grid, c, dt=dt)
    for _ in range(n):
        phi = prop.apply(phi)
    return np.sum(np.abs(phi) ** 2, axis=0) / n0


def level_sum_scan(z_a_grid, n_levels, weights=None, dz=None, dt=None, t_transit=None,
                   gamma=None, constants=None, window=10.0, tail_floor=1e-9):
    """Incoherent sum ``sum_n w_n S_n(z_a)`` of single-level survivals.

    Meant for many populated levels, where a coherent scan would need a huge
    grid. Levels whose tail above ``z_a`` is below ``tail_floor`` are counted
    as surviving; levels sitting more than ``window * z0`` above ``z_a`` are
    counted as absorbed; the rest are propagated on a grid reaching
    ``window + 6`` z0 above the absorber. ``dz`` defaults to z0/40.
    """
    c = constants or PhysicalConstants()
    z = check_heights(z_a_grid, allow_zero=False)
    n_levels = int(n_levels)
    if n_levels < 1:
        raise DomainError(f"n_levels must be >= 1, got {n_levels}")
    w = check_weights(weights, n_levels)
    s = grav_scale(c)
    dz = s.z0 / 40.0 if dz is None else check_positive(dz, "dz")
    if dt is None:
        dt = c.hbar / eigenstate(1, s, c).e_n / DT_FRACTION
    t_transit = default_transit_time() if t_transit is None else t_transit
    heights = np.array([eigenstate(n, s, c).z_n for n in range(1, n_levels + 1)])
    tails = mode_tails(z, n_levels, c)
    counts = np.empty(z.size)
    for i, za in enumerate(z):
        surv = np.where(tails[i] < tail_floor, 1.0, 0.0)
        live = (tails[i] >= tail_floor) & (heights <= za + window * s.z0)
        if live.any():
            top = za + (window + 6.0) * s.z0
            n_pts = max(MIN_POINTS, int(math.ceil(top / dz)) + 1)
            g = GridSpec(z_max=top, n_points=n_pts, dt=dt)
            levels = np.flatnonzero(live) + 1
            surv[live] = level_survivals(levels, za, g, t_transit, gamma, c)
        counts[i] = surv @ w
    return TransmissionCurve(z, np.clip(counts, 0.0, None), "tdse")
