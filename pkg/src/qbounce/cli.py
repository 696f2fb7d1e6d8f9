"""``qbounce`` command-line tool.

Heights on the command line, in config files and in CSV output are in
micrometres; speeds in m/s; everything is converted to SI before it reaches
the library. Exit codes: 0 success, 2 usage or config error, 3 numerical
non-convergence, 4 I/O error.
"""

import argparse
import copy
from dataclasses import replace
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .airy import airy
from .bouncer import (
    PEV,
    PhysicalConstants,
    density_profile,
    eigenstate,
    eigenstates,
    grav_scale,
)
from .estimators import MODELS, fit_transmission
from .exceptions import ConfigError, ConvergenceError, DomainError, QBounceError
from .fileio import load_config, read_curve_csv, write_csv, write_json, write_manifest
from .montecarlo import MCConfig, SlitGeometry, run_transmission_scan
from .slitmodels import (
    AbsorberModel,
    BeamSpec,
    classical_transmission,
    modesum_transmission,
    semiclassical_lowest_level,
    stepwise_transmission,
)
from .tdse import (
    Eigen,
    Gaussian,
    GridSpec,
    Superposition,
    build_potential,
    default_transit_time,
    init_state,
    level_sum_scan,
    propagate_transit,
    tdse_transmission_scan,
)

UM = 1e-6
OUT_ENV = "QBOUNCE_OUT"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# config sections and their defaults; None means "derived at run time"
DEFAULTS = {
    "constants": {"hbar": PhysicalConstants.hbar, "m": PhysicalConstants.m,
                  "g": PhysicalConstants.g},
    "beam": {"rho": 1.0, "v_min": 4.0, "v_max": 10.0, "theta_max": 1e-4, "width": 0.1},
    "geometry": {"length_slit": 0.14, "z_a_um": 10.0},
    "absorber": {"kappa": 1.0, "n_b": 15.0, "r_front": 0.0, "eff_det": 1.0},
    "grid": {"n_points": 2048, "z_max_um": None, "dt": None, "gamma_e1": None},
    "mc": {"n_particles": 100_000, "q_diffuse": 0.0, "chunk_size": 1 << 18, "workers": 1},
    "scan": {"z_min_um": 10.0, "z_max_um": 600.0, "points": 20},
    "levels": {"n_levels": 4, "weights": None},
    "output_dir": "out",
    "seed": 12345,
}

FIG1_S = (np.arange(2001) - 1500) / 100.0  # s in [-15, 5], exact zero at index 1500
FIG3_LEVELS = 4
FIG4_THETA_MAX = 0.05  # wide enough that the absorber, not the beam, limits acceptance
FIG4_POPULATION_MARGIN = 30.0  # populate levels up to z_max + this many z0
FIG4_TDSE_DZ = 1.0 / 20.0  # in z0
FIG4_TDSE_DT = 50  # dt = (hbar / E_1) / this


class _Run:
    """Resolved configuration plus bookkeeping for one invocation."""

    def __init__(self, cfg, sources, out_dir):
        self.cfg = cfg
        self.sources = sources
        self.out_dir = out_dir
        self.outputs = []
        self.extra = {}

    @property
    def constants(self):
        return _build(PhysicalConstants, "constants", self.cfg["constants"])

    @property
    def beam(self):
        return _build(BeamSpec, "beam", self.cfg["beam"])

    @property
    def absorber(self):
        return _build(AbsorberModel, "absorber", self.cfg["absorber"])

    @property
    def seed(self):
        return self.cfg["seed"]

    def scan_grid(self):
        s = self.cfg["scan"]
        n = _as_int(s["points"], "scan.points")
        if n < 1:
            raise DomainError("scan.points must be >= 1")
        lo, hi = float(s["z_min_um"]), float(s["z_max_um"])
        if not 0 < lo <= hi:
            raise DomainError("need 0 < scan.z_min_um <= scan.z_max_um")
        if n > 1 and lo == hi:
            raise DomainError("scan with several points needs z_min_um < z_max_um")
        return np.linspace(lo, hi, n) * UM

    def weights(self):
        w = self.cfg["levels"]["weights"]
        return None if w is None else np.asarray(w, dtype=float)

    def n_levels(self):
        w = self.weights()
        n = _as_int(self.cfg["levels"]["n_levels"], "levels.n_levels")
        return n if w is None else w.size

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def csv(self, name, header, columns):
        self.outputs.append(write_csv(self.path(name), header, columns))

    def json(self, name, obj):
        self.outputs.append(write_json(self.path(name), obj))


def _build(cls, section, values):
    for key, v in values.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number, got {v!r}")
    return cls(**values)


def _as_int(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not float(v).is_integer():
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(v)


def _parse_floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _parse_init(text):
    kind, _, rest = text.partition(":")
    try:
        if kind == "eigen":
            return Eigen(int(rest))
        if kind == "superposition":
            return Superposition(tuple(_parse_floats(rest)))
        if kind == "gaussian":
            vals = _parse_floats(rest)
            if len(vals) not in (2, 3):
                raise ValueError
            center, width = vals[0] * UM, vals[1] * UM
            k = vals[2] / UM if len(vals) == 3 else 0.0
            return Gaussian(center, width, k)
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(
        f"bad initial state {text!r}; use eigen:N, superposition:w1,w2,... "
        "or gaussian:center_um,width_um[,k_per_um]")


# flag destination -> (section, key)
_FLAG_TARGETS = {
    "z_min_um": ("scan", "z_min_um"),
    "z_max_um": ("scan", "z_max_um"),
    "points": ("scan", "points"),
    "n_levels": ("levels", "n_levels"),
    "weights": ("levels", "weights"),
    "kappa": ("absorber", "kappa"),
    "n_bounces": ("absorber", "n_b"),
    "particles": ("mc", "n_particles"),
    "q_diffuse": ("mc", "q_diffuse"),
    "workers": ("mc", "workers"),
    "theta_max": ("beam", "theta_max"),
    "length_slit": ("geometry", "length_slit"),
    "grid_points": ("grid", "n_points"),
    "dt": ("grid", "dt"),
    "gamma_e1": ("grid", "gamma_e1"),
}


def resolve(args, environ=None):
    """Merge defaults, config file, environment and flags (flag wins)."""
    environ = os.environ if environ is None else environ
    cfg = copy.deepcopy(DEFAULTS)
    sources = {}
    if getattr(args, "config", None):
        loaded = load_config(args.config, DEFAULTS)
        for key, value in loaded.items():
            if isinstance(DEFAULTS[key], dict):
                cfg[key].update(value)
                sources.update({f"{key}.{k}": "file" for k in value})
            else:
                cfg[key] = value
                sources[key] = "file"
    if environ.get(OUT_ENV):
        cfg["output_dir"] = environ[OUT_ENV]
        sources["output_dir"] = "env"
    if getattr(args, "out", None) is not None:
        cfg["output_dir"] = args.out
        sources["output_dir"] = "flag"
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
        sources["seed"] = "flag"
    for dest, (section, key) in _FLAG_TARGETS.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[section][key] = value
            sources[f"{section}.{key}"] = "flag"
    _as_int(cfg["seed"], "seed")
    return _Run(cfg, sources, os.fspath(cfg["output_dir"]))


def cmd_eigen(run, args):
    if args.n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {args.n_max}")
    states = eigenstates(args.n_max, constants=run.constants)
    run.csv("eigen.csv", ["n", "a_n", "z_n_um", "E_n_peV"], [
        [s.n for s in states],
        [s.a_n for s in states],
        [s.z_n / UM for s in states],
        [s.e_n / PEV for s in states],
    ])


def cmd_density(run, args, name="density.csv"):
    n_max = args.n_max if args.n_max is not None else run.n_levels()
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    c = run.constants
    states = eigenstates(n_max, constants=c)
    z_top = args.z_top_um * UM if args.z_top_um else states[-1].z_n + 10 * grav_scale(c).z0
    if args.samples < 2:
        raise DomainError("need at least 2 sample points")
    z = np.linspace(0.0, z_top, args.samples)
    prof = density_profile(n_max, z, weights=run.weights(), constants=c)
    header = ["z_um"] + [f"P_{n}" for n in range(1, n_max + 1)] + ["P_sum"]
    cols = [z / UM] + [p * UM for p in prof.per_state] + [prof.values * UM]
    run.csv(name, header, cols)


def _power_law_scale(args):
    return 1.0 if args.scale is None else args.scale


def _curve(run, args, model, z):
    """Counts for ``model`` on heights ``z`` (metres); returns (counts, err)."""
    c = run.constants
    if model == "classical":
        return classical_transmission(z / UM, _power_law_scale(args)), None
    if model == "semiclassical":
        z1 = eigenstates(1, constants=c)[0].z_n
        return semiclassical_lowest_level(z / UM, _power_law_scale(args), z1 / UM), None
    if model == "stepwise":
        states = eigenstates(run.n_levels(), constants=c)
        return stepwise_transmission(z, states, run.weights()), None
    if model == "modesum":
        return modesum_transmission(z, run.n_levels(), run.weights(), run.absorber, c), None
    if model == "tdse":
        return _tdse_curve(run, args, z)
    if model == "mc":
        curve = run_transmission_scan(_mc_config(run), z, workers=_mc_workers(run),
                                      chunk_size=_as_int(run.cfg["mc"]["chunk_size"],
                                                         "mc.chunk_size"))
        return curve.counts, curve.stat_err
    raise DomainError(f"unknown model {model!r}")


def _mc_config(run, **beam_overrides):
    mc = run.cfg["mc"]
    geo = run.cfg["geometry"]
    return MCConfig(
        n_particles=_as_int(mc["n_particles"], "mc.n_particles"),
        seed=_as_int(run.seed, "seed"),
        geometry=SlitGeometry(length_slit=float(geo["length_slit"]),
                              z_a=float(geo["z_a_um"]) * UM),
        beam=replace(run.beam, **beam_overrides),
        kappa=run.absorber.kappa,
        q_diffuse=float(mc["q_diffuse"]),
        g=run.constants.g,
    )


def _mc_workers(run):
    return max(1, _as_int(run.cfg["mc"]["workers"], "mc.workers"))


def _tdse_grid(run):
    c = run.constants
    g = run.cfg["grid"]
    n_points = _as_int(g["n_points"], "grid.n_points")
    dt = None if g["dt"] is None else float(g["dt"])
    if g["z_max_um"] is None:
        return GridSpec.for_levels(run.n_levels(), n_points=n_points, dt=dt, constants=c)
    base = GridSpec.for_levels(1, n_points=n_points, dt=dt, constants=c)
    return GridSpec(z_max=float(g["z_max_um"]) * UM, n_points=n_points, dt=base.dt)


def _gamma(run):
    factor = run.cfg["grid"]["gamma_e1"]
    if factor is None:
        return None
    return float(factor) * eigenstates(1, constants=run.constants)[0].e_n


def _transit(run):
    return default_transit_time(float(run.cfg["geometry"]["length_slit"]), run.beam.mean_speed)


def _tdse_curve(run, args, z):
    c = run.constants
    grid = _tdse_grid(run)
    init = args.init if getattr(args, "init", None) is not None else \
        Superposition(tuple(run.weights() if run.weights() is not None
                            else np.ones(run.n_levels())))
    curve = tdse_transmission_scan(z, init, grid, _transit(run), _gamma(run), c)
    run.extra["tdse"] = {"grid_z_max_m": grid.z_max, "grid_n_points": grid.n_points,
                         "dt_s": grid.dt, "t_transit_s": _transit(run),
                         "init": repr(init)}
    snap = getattr(args, "snapshot_um", None)
    if snap is not None:
        za = snap * UM
        g = _covering(grid, za, c)
        res = propagate_transit(init_state(init, g, c), build_potential(g, za, _gamma(run), c),
                                g, _transit(run), c)
        run.csv(f"snapshot_{snap:g}um.csv", ["z_um", "density_per_um"],
                [g.z / UM, res.final.density() * UM])
    return curve.counts, None


def _covering(grid, za, c):
    top = za + 4.0 * grav_scale(c).z0
    if grid.z_max >= top:
        return grid
    n = int(math.ceil(top / grid.dz)) + 1
    return GridSpec(z_max=(n - 1) * grid.dz, n_points=n, dt=grid.dt)


def cmd_transmission(run, args):
    z = run.scan_grid()
    counts, err = _curve(run, args, args.model, z)
    header, cols = ["z_a", "counts"], [z / UM, counts]
    if err is not None:
        header.append("err")
        cols.append(err)
    run.csv(f"transmission_{args.model}.csv", header, cols)


def cmd_fit(run, args):
    data = read_curve_csv(args.data)
    model = args.model
    params = {}
    free = tuple(args.free) if args.free else None
    z_unit = "m"
    if model == "classical":
        # power law fitted directly in micrometres
        data = type(data)(data.z_a_grid / UM, data.counts, data.model_tag, data.stat_err)
        z_unit = "um"
    elif model == "semiclassical":
        data = type(data)(data.z_a_grid / UM, data.counts, data.model_tag, data.stat_err)
        params["z_cut"] = eigenstates(1, constants=run.constants)[0].z_n / UM
        z_unit = "um"
    else:
        params.update(n_levels=run.n_levels(), constants=run.constants)
        if run.weights() is not None:
            params["weights"] = run.weights()
        if model == "modesum":
            params.update(kappa=run.absorber.kappa, n_bounces=run.absorber.n_b)
    name = f"fit_{model}.json"
    try:
        res = fit_transmission(data, model, free_params=free, **params)
    except ConvergenceError as exc:
        report = exc.partial.to_dict() if exc.partial is not None else {"model": model}
        report.update(converged=False, z_unit=z_unit, data=os.path.abspath(args.data),
                      message=str(exc))
        run.json(name, report)
        raise
    report = res.to_dict()
    report.update(z_unit=z_unit, data=os.path.abspath(args.data))
    run.json(name, report)


def cmd_scenario(run, args):
    if args.figure == "fig1":
        ai, aip = airy(FIG1_S)
        run.csv("fig1.csv", ["s", "Ai", "Ai_prime"], [FIG1_S, ai, aip])
    elif args.figure == "fig3":
        ns = argparse.Namespace(n_max=FIG3_LEVELS, z_top_um=None, samples=args.samples)
        cmd_density(run, ns, name="fig3.csv")
    else:
        _fig4(run)


def _fig4(run):
    c = run.constants
    s = grav_scale(c)
    z = run.scan_grid()
    n_pop = 1
    while eigenstate(n_pop, s, c).z_n < z[-1] + FIG4_POPULATION_MARGIN * s.z0:
        n_pop += 1
    ground = eigenstate(1, s, c)
    z1, e1 = ground.z_n, ground.e_n
    classical = classical_transmission(z / UM)
    semi = semiclassical_lowest_level(z / UM, 1.0, z1 / UM)
    modesum = modesum_transmission(z, n_pop, None, run.absorber, c)
    tdse = level_sum_scan(z, n_pop, dz=FIG4_TDSE_DZ * s.z0, dt=c.hbar / e1 / FIG4_TDSE_DT,
                          t_transit=_transit(run), gamma=_gamma(run), constants=c).counts
    mc = run_transmission_scan(_mc_config(run, theta_max=FIG4_THETA_MAX), z,
                               workers=_mc_workers(run)).counts
    run.extra["fig4"] = {"populated_levels": n_pop, "mc_theta_max": FIG4_THETA_MAX,
                         "tdse_dz_m": FIG4_TDSE_DZ * s.z0,
                         "tdse_dt_s": c.hbar / e1 / FIG4_TDSE_DT,
                         "tdse": "incoherent sum of single-level survivals"}
    run.csv("fig4.csv", ["z_a", "classical", "semiclassical", "modesum", "tdse", "mc"],
            [z / UM, classical, semi, modesum, tdse, mc])


def _common_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    p.add_argument("--out", default=argparse.SUPPRESS,
                   help=f"output directory (overrides ${OUT_ENV} and the config file)")
    return p


def _scan_flags(p):
    p.add_argument("--z-min-um", type=float, help="lowest absorber height")
    p.add_argument("--z-max-um", type=float, help="highest absorber height")
    p.add_argument("--points", type=int, help="number of absorber heights")


def _level_flags(p):
    p.add_argument("--n-levels", type=int, help="number of populated levels")
    p.add_argument("--weights", type=_parse_floats, help="level populations w1,w2,...")


def build_parser():
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="qbounce", parents=[common],
                                     description="Quantum bouncer and absorbing-slit models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", parents=[common], help="level table")
    p.add_argument("--n-max", type=int, default=4)

    p = sub.add_parser("density", parents=[common], help="squared wave functions")
    p.add_argument("--n-max", type=int)
    p.add_argument("--weights", type=_parse_floats)
    p.add_argument("--z-top-um", type=float, help="upper end of the height grid")
    p.add_argument("--samples", type=int, default=2001)

    p = sub.add_parser("transmission", parents=[common], help="one model curve")
    p.add_argument("--model", required=True,
                   choices=["classical", "semiclassical", "stepwise", "modesum", "tdse", "mc"])
    _scan_flags(p)
    _level_flags(p)
    p.add_argument("--scale", type=float, help="power-law prefactor per um^1.5")
    p.add_argument("--kappa", type=float)
    p.add_argument("--n-bounces", type=float)
    p.add_argument("--particles", type=int)
    p.add_argument("--q-diffuse", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--theta-max", type=float)
    p.add_argument("--length-slit", type=float, help="slit length in metres")
    p.add_argument("--init", type=_parse_init, help="tdse initial state")
    p.add_argument("--grid-points", type=int)
    p.add_argument("--dt", type=float, help="tdse time step in seconds")
    p.add_argument("--gamma-e1", type=float, help="absorber strength in units of E_1")
    p.add_argument("--snapshot-um", type=float,
                   help="also write |psi|^2 after transit at this absorber height")

    p = sub.add_parser("fit", parents=[common], help="least-squares fit of a CSV curve")
    p.add_argument("data", help="CSV with header z_a,counts[,err] (z_a in um)")
    p.add_argument("--model", required=True, choices=sorted(MODELS))
    p.add_argument("--free", type=lambda s: [x for x in s.split(",") if x],
                   help="comma-separated free parameters")
    _level_flags(p)
    p.add_argument("--kappa", type=float)
    p.add_argument("--n-bounces", type=float)

    p = sub.add_parser("scenario", parents=[common], help="figure data sets")
    p.add_argument("figure", choices=["fig1", "fig3", "fig4"])
    _scan_flags(p)
    p.add_argument("--particles", type=int)
    p.add_argument("--samples", type=int, default=2001, help="fig3 height samples")
    return parser


COMMANDS = {
    "eigen": cmd_eigen,
    "density": cmd_density,
    "transmission": cmd_transmission,
    "fit": cmd_fit,
    "scenario": cmd_scenario,
}


def main(argv=None, environ=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    start = time.perf_counter()
    run = None
    try:
        run = resolve(args, environ)
        COMMANDS[args.command](run, args)
        code = EXIT_OK
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QBounceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = dict(run.cfg, sources=run.sources, units={
            "heights": "um in CLI, config and CSV; m internally",
            "speeds": "m/s", "dt": "s", "length_slit": "m"})
        if run.extra:
            config["derived"] = run.extra
        write_manifest(run.out_dir, sys_argv(argv), config, run.seed, __version__,
                       time.perf_counter() - start, run.outputs)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def sys_argv(argv):
    return ["qbounce"] + list(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
