"""Classical Monte Carlo transport of neutrons through the absorbing slit.

Flights are parabolic and integrated in closed form. Between stochastic
events (an absorber contact, a diffuse mirror reflection) the motion is
periodic, so a particle is advanced one *segment* at a time rather than one
bounce at a time: a segment is a run of identical arcs with launch speed
``u`` and period ``2u/g``, entered at phase ``tau0``.

Random numbers come from :class:`CounterRNG`, a stateless hash of
``(seed, particle index, draw slot)``. A particle's history therefore does
not depend on how the ensemble is chunked or which worker runs it.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import enum
import math

import numpy as np

from ._validation import check_heights, check_positive, check_probability
from .bouncer import PhysicalConstants
from .exceptions import DomainError
from .slitmodels import AbsorberModel, BeamSpec, TransmissionCurve, count_rate

__all__ = [
    "CounterRNG",
    "Particle",
    "SlitGeometry",
    "MCConfig",
    "MCResult",
    "Outcome",
    "TransportResult",
    "sample_incident",
    "transport_slit",
    "simulate",
    "run_transmission_scan",
    "average_bounce_count",
]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_SLOT_MIX = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

_SLOT_Z, _SLOT_VX, _SLOT_THETA = 0, 1, 2
_SLOTS_PER_SEGMENT = 3

DEFAULT_CHUNK = 1 << 18


def _splitmix64(x):
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


class CounterRNG:
    """Stateless uniform generator keyed by ``(seed, index, slot)``.

    ``u = (splitmix64(splitmix64(seed + index * phi) ^ (slot + 1) * c) >> 11 + 0.5) / 2^53``
    with the SplitMix64 finaliser; values lie strictly inside (0, 1).
    """

    def __init__(self, seed):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def uniform(self, index, slot):
        idx = np.atleast_1d(np.asarray(index, dtype=np.uint64))
        with np.errstate(over="ignore"):
            key = _splitmix64(np.uint64(self.seed) + idx * _GOLDEN)
            x = _splitmix64(key ^ (np.uint64(slot + 1) * _SLOT_MIX))
        return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


@dataclass
class Particle:
    x: float
    z: float
    v_x: float
    v_z: float

    @property
    def apex(self):
        """Return point z_rp of the current parabola."""
        return self.z + self.v_z ** 2 / (2.0 * PhysicalConstants().g)

    def momentum_z(self, constants=None):
        return (constants or PhysicalConstants()).m * self.v_z

    def kinetic_energy(self, constants=None):
        c = constants or PhysicalConstants()
        return 0.5 * c.m * (self.v_x ** 2 + self.v_z ** 2)


@dataclass(frozen=True)
class SlitGeometry:
    length_slit: float = 0.14
    z_a: float = 1.0e-5
    mirror_offset: float = 0.0

    def __post_init__(self):
        check_positive(self.length_slit, "length_slit")
        check_positive(self.z_a, "z_a")
        check_positive(self.mirror_offset, "mirror_offset", strict=False)

    def critical_momentum(self, constants=None):
        """Vertical momentum whose apex just reaches the absorber (z_cr = z_a)."""
        c = constants or PhysicalConstants()
        return c.m * math.sqrt(2.0 * c.g * self.z_a)


@dataclass(frozen=True)
class MCConfig:
    n_particles: int = 100_000
    seed: int = 12345
    geometry: SlitGeometry = field(default_factory=SlitGeometry)
    beam: BeamSpec = field(default_factory=BeamSpec)
    kappa: float = 1.0
    q_diffuse: float = 0.0
    g: float = PhysicalConstants().g

    def __post_init__(self):
        if int(self.n_particles) <= 0:
            raise DomainError("n_particles must be positive")
        check_probability(self.kappa, "kappa")
        check_probability(self.q_diffuse, "q_diffuse")
        check_positive(self.g, "g")


@dataclass(frozen=True)
class MCResult:
    n_transmitted: int
    n_absorbed: int
    n_total: int
    mean_bounces: float
    err_transmission: float

    @property
    def transmission(self):
        return self.n_transmitted / self.n_total


class Outcome(enum.Enum):
    TRANSMITTED = "transmitted"
    ABSORBED = "absorbed"


@dataclass(frozen=True)
class TransportResult:
    outcome: Outcome
    bounces: int
    absorbed_arc: int = 0  # 1-based arc of absorption; 0 when transmitted


def sample_incident(beam, z_a, rng, index):
    """Entry state(s) at x = 0 for particle index (or index array) ``index``.

    Height uniform on (0, z_a), speed uniform on [v_min, v_max], angle
    uniform on [-theta_max, theta_max].
    """
    z_a = check_positive(z_a, "z_a")
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
    z = z_a * rng.uniform(idx, _SLOT_Z)
    vx = beam.v_min + (beam.v_max - beam.v_min) * rng.uniform(idx, _SLOT_VX)
    theta = beam.theta_max * (2.0 * rng.uniform(idx, _SLOT_THETA) - 1.0)
    vz = vx * np.tan(theta)
    if np.ndim(index) == 0:
        return Particle(0.0, float(z[0]), float(vx[0]), float(vz[0]))
    return z, vx, vz


def _geometric(u, p):
    """Trials up to and including the first success, inverse-CDF sampled."""
    if p >= 1.0:
        return np.ones_like(u)
    if p <= 0.0:
        return np.full_like(u, np.inf)
    return 1.0 + np.floor(np.log(u) / math.log1p(-p))


def _transport(idx, z, vx, vz, z_a, length, kappa, q, theta_max, g, rng):
    """Vectorised transport; returns (transmitted, bounces, absorbed_arc)."""
    n = z.size
    transmitted = np.zeros(n, dtype=bool)
    bounces = np.zeros(n, dtype=np.int64)
    arc = np.zeros(n, dtype=np.int64)

    u = np.sqrt(vz ** 2 + 2.0 * g * z)
    tau0 = (u - vz) / g
    remaining = length / vx
    active = np.arange(n)
    segment = 0
    while active.size:
        ua, t0, rem, vxa = u[active], tau0[active], remaining[active], vx[active]
        ia = idx[active]
        base = 3 + _SLOTS_PER_SEGMENT * segment
        period = 2.0 * ua / g
        moving = period > 0
        safe_period = np.where(moving, period, 1.0)
        s_exit = t0 + rem

        # rising crossing of z_a within each arc
        disc = ua ** 2 - 2.0 * g * z_a
        reaches = moving & (disc >= 0)
        t_c = (ua - np.sqrt(np.maximum(disc, 0.0))) / g
        first = np.where(t_c >= t0, 0.0, 1.0)
        n_contact = _geometric(rng.uniform(ia, base), kappa)
        s_abs = np.where(reaches, (first + n_contact - 1.0) * safe_period + t_c, np.inf)

        n_mirror = _geometric(rng.uniform(ia, base + 1), q)
        s_diff = np.where(moving, n_mirror * safe_period, np.inf)

        def hits_before(s, mask):
            return np.where(moving[mask], np.floor(s / safe_period[mask]), 0.0).astype(np.int64)

        absorbed = (s_abs < s_exit) & (s_abs <= s_diff)
        exits = ~absorbed & (s_exit <= s_diff)
        diffuse = ~absorbed & ~exits

        a_idx = active[absorbed]
        arc[a_idx] = bounces[a_idx] + hits_before(s_abs[absorbed], absorbed) + 1

        e_idx = active[exits]
        transmitted[e_idx] = True
        bounces[e_idx] += hits_before(s_exit[exits], exits)
        bounces[a_idx] += hits_before(s_abs[absorbed], absorbed)

        d_idx = active[diffuse]
        if d_idx.size:
            bounces[d_idx] += n_mirror[diffuse].astype(np.int64)
            theta = theta_max * rng.uniform(ia[diffuse], base + 2)
            remaining[d_idx] = rem[diffuse] - (s_diff[diffuse] - t0[diffuse])
            u[d_idx] = vxa[diffuse] * np.tan(theta)
            tau0[d_idx] = 0.0
        active = d_idx
        segment += 1
    return transmitted, bounces, arc


def transport_slit(p, geometry, kappa=1.0, q_diffuse=0.0, rng=None, index=0,
                   theta_max=BeamSpec().theta_max, g=None):
    """Carry one particle through the slit.

    ``rng`` is a :class:`CounterRNG` and ``index`` the particle's stream
    index; ``theta_max`` bounds the angle drawn on a diffuse reflection.
    """
    if p.x != 0.0:
        raise DomainError("particles enter the slit at x = 0")
    if not 0.0 < p.z < geometry.z_a:
        raise DomainError("particle must enter inside the slit opening 0 < z < z_a")
    if p.v_x <= 0:
        raise DomainError("v_x must be positive")
    check_probability(kappa, "kappa")
    check_probability(q_diffuse, "q_diffuse")
    rng = rng or CounterRNG(0)
    g = PhysicalConstants().g if g is None else g
    tr, nb, arc = _transport(np.array([index], dtype=np.int64), np.array([p.z]),
                             np.array([p.v_x]), np.array([p.v_z]), geometry.z_a,
                             geometry.length_slit, kappa, q_diffuse, theta_max, g, rng)
    if tr[0]:
        return TransportResult(Outcome.TRANSMITTED, int(nb[0]))
    return TransportResult(Outcome.ABSORBED, int(nb[0]), int(arc[0]))


def _run_chunk(config, z_a, rng, start, stop):
    idx = np.arange(start, stop, dtype=np.int64)
    z, vx, vz = sample_incident(config.beam, z_a, rng, idx)
    tr, nb, _ = _transport(idx, z, vx, vz, z_a, config.geometry.length_slit,
                           config.kappa, config.q_diffuse, config.beam.theta_max,
                           config.g, rng)
    return int(tr.sum()), int(nb[tr].sum())


def simulate(config, z_a=None, chunk_size=DEFAULT_CHUNK, workers=1):
    """Run ``config.n_particles`` histories at absorber height ``z_a``.

    Histories are processed in chunks of ``chunk_size``, optionally on
    ``workers`` threads; the result does not depend on either setting.
    """
    z_a = config.geometry.z_a if z_a is None else check_positive(z_a, "z_a")
    n = int(config.n_particles)
    rng = CounterRNG(config.seed)
    bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _run_chunk(config, z_a, rng, *b), bounds))
    else:
        parts = [_run_chunk(config, z_a, rng, *b) for b in bounds]
    n_tr = sum(p[0] for p in parts)
    n_bounce = sum(p[1] for p in parts)
    ratio = n_tr / n
    return MCResult(
        n_transmitted=n_tr,
        n_absorbed=n - n_tr,
        n_total=n,
        mean_bounces=n_bounce / n_tr if n_tr else float("nan"),
        err_transmission=math.sqrt(ratio * (1.0 - ratio) / n),
    )


def run_transmission_scan(config, z_a_grid, chunk_size=DEFAULT_CHUNK, workers=1,
                          return_results=False):
    """Transmission curve over ``z_a_grid`` (metres).

    Counts are the count rate with the Monte Carlo survival ratio in place
    of ``p_sur``, so the entry aperture weight ``A ~ z_a`` is included.
    """
    z = check_heights(z_a_grid, allow_zero=False)
    results = [simulate(config, za, chunk_size, workers) for za in z]
    ideal = AbsorberModel()
    ratio = np.array([r.transmission for r in results])
    err = np.array([r.err_transmission for r in results])
    counts = count_rate(config.beam, z, ideal, ratio)
    scale = count_rate(config.beam, z, ideal, np.ones_like(z))
    curve = TransmissionCurve(z, counts, "mc", stat_err=scale * err)
    return (curve, results) if return_results else curve


def average_bounce_count(config):
    """Mean number of mirror bounces among transmitted particles."""
    return simulate(config).mean_bounces
