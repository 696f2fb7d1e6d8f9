"""scikit-learn style regressors wrapping the transmission models.

Each estimator maps absorber heights ``X`` (shape ``(n,)`` or ``(n, 1)``) to
count rates. Parameters listed in ``free_params`` are adjusted by
:meth:`fit` with a Levenberg-Marquardt least-squares solve; the rest stay
at their constructor values. Unfitted estimators predict with the
constructor values, so a model can be evaluated without data.

>>> est = ClassicalTransmission(free_params=("scale",)).fit(z, counts)
>>> est.params_["scale"], est.covariance_
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator, RegressorMixin

from ._validation import check_heights, check_targets
from .bouncer import eigenstates
from .exceptions import ConvergenceError, DomainError
from .slitmodels import (
    TransmissionCurve,
    _modesum_from_tails,
    mode_tails,
)

__all__ = [
    "ClassicalTransmission",
    "SemiclassicalTransmission",
    "StepwiseTransmission",
    "ModeSumTransmission",
    "FitResult",
    "fit_transmission",
    "MODELS",
]

XTOL = 1e-8
MAX_ITER = 200


@dataclass
class FitResult:
    model: str
    params: dict
    residual: float
    covariance: np.ndarray
    free_params: tuple
    weighted: bool
    n_points: int
    nfev: int
    converged: bool = True

    def to_dict(self):
        return {
            "model": self.model,
            "params": {k: float(v) for k, v in self.params.items()},
            "free_params": list(self.free_params),
            "residual": float(self.residual),
            "covariance": np.asarray(self.covariance, dtype=float).tolist(),
            "weighted": self.weighted,
            "n_points": self.n_points,
            "nfev": self.nfev,
            "converged": self.converged,
        }


class _TransmissionRegressor(RegressorMixin, BaseEstimator):
    """Shared least-squares machinery; subclasses define the curve."""

    _scalar_params = ()

    def _param_vector_names(self):
        names = []
        for p in self.free_params:
            if p == "weights":
                names.extend(f"w{n}" for n in range(1, self._n_weights() + 1))
            elif p in self._scalar_params:
                names.append(p)
            else:
                raise DomainError(
                    f"{type(self).__name__} has no free parameter {p!r}; "
                    f"choose from {self._scalar_params + self._vector_params()}")
        return names

    def _vector_params(self):
        return ()

    def _n_weights(self):
        return 0

    def _current_params(self):
        if hasattr(self, "params_"):
            return dict(self.params_)
        return self._initial_params()

    def _unpack(self, theta, base):
        params = dict(base)
        i = 0
        for p in self.free_params:
            if p == "weights":
                k = self._n_weights()
                params["weights"] = np.asarray(theta[i:i + k], dtype=float)
                i += k
            else:
                params[p] = float(theta[i])
                i += 1
        return params

    def _pack(self, params):
        theta = []
        for p in self.free_params:
            if p == "weights":
                theta.extend(np.asarray(params["weights"], dtype=float))
            else:
                theta.append(float(params[p]))
        return np.array(theta, dtype=float)

    def _prepare(self, z):
        return z

    def fit(self, X, y, sigma=None):
        """Least-squares fit of the free parameters to ``(X, y)``.

        ``sigma`` (per-point standard errors) switches to weighted least
        squares and makes the covariance absolute rather than rescaled by
        the residual variance.
        """
        z = check_heights(X)
        y = check_targets(y, z.size)
        names = self._param_vector_names()
        p = len(names)
        if p == 0:
            raise DomainError("free_params is empty; nothing to fit")
        if z.size < p + 1:
            raise DomainError(f"need at least {p + 1} points to fit {p} parameters, got {z.size}")
        if np.ptp(z) == 0:
            raise DomainError("degenerate data: all z_a values are equal")
        if sigma is not None:
            sigma = check_targets(sigma, z.size, name="sigma")
            if np.any(sigma <= 0):
                raise DomainError("sigma must be strictly positive")
            inv = 1.0 / sigma
        else:
            inv = np.ones_like(y)

        base = self._initial_params()
        prepared = self._prepare(z)

        def residuals(theta):
            return (self._curve(prepared, self._unpack(theta, base)) - y) * inv

        theta0 = self._pack(base)
        sol = least_squares(residuals, theta0, method="lm", xtol=XTOL, ftol=1e-15,
                            gtol=1e-15, max_nfev=MAX_ITER * (p + 1))
        params = self._unpack(sol.x, base)
        r = sol.fun
        ssr = float(r @ r)
        cov = _covariance(sol.jac, ssr, z.size, weighted=sigma is not None)

        self.params_ = params
        self.residual_ = ssr
        self.covariance_ = cov
        self.param_names_ = names
        self.weighted_ = sigma is not None
        self.nfev_ = int(sol.nfev)
        self.converged_ = sol.status > 0
        if not self.converged_:
            raise ConvergenceError(
                f"least-squares fit did not converge in {sol.nfev} evaluations",
                partial=self.result())
        return self

    def predict(self, X):
        z = check_heights(X)
        return self._curve(self._prepare(z), self._current_params())

    def result(self):
        params = {}
        for k, v in self.params_.items():
            if k == "weights":
                params.update({f"w{n}": float(x) for n, x in enumerate(v, start=1)})
            elif v is not None:
                params[k] = float(v)
        return FitResult(model=self._tag, params=params, residual=self.residual_,
                         covariance=self.covariance_, free_params=tuple(self.param_names_),
                         weighted=self.weighted_, n_points=0, nfev=self.nfev_,
                         converged=self.converged_)


def _covariance(jac, ssr, n, weighted):
    jac = np.atleast_2d(jac)
    p = jac.shape[1]
    jtj = jac.T @ jac
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj)
    if not weighted:
        dof = max(n - p, 1)
        cov = cov * (ssr / dof)
    return cov


class ClassicalTransmission(_TransmissionRegressor):
    """``scale * z_a^(3/2)``."""

    _tag = "classical"
    _scalar_params = ("scale",)

    def __init__(self, scale=1.0, free_params=("scale",)):
        self.scale = scale
        self.free_params = free_params

    def _initial_params(self):
        return {"scale": float(self.scale)}

    def _curve(self, z, params):
        return params["scale"] * z ** 1.5


class SemiclassicalTransmission(_TransmissionRegressor):
    """``scale * max(0, z_a^(3/2) - z_cut^(3/2))``; ``z_cut=None`` means z_1 in metres."""

    _tag = "semiclassical"
    _scalar_params = ("scale", "z_cut")

    def __init__(self, scale=1.0, z_cut=None, free_params=("scale",)):
        self.scale = scale
        self.z_cut = z_cut
        self.free_params = free_params

    def _initial_params(self):
        z_cut = self.z_cut if self.z_cut is not None else eigenstates(1)[0].z_n
        return {"scale": float(self.scale), "z_cut": float(z_cut)}

    def _curve(self, z, params):
        cut = abs(params["z_cut"]) ** 1.5
        return params["scale"] * np.maximum(0.0, z ** 1.5 - cut)


class StepwiseTransmission(_TransmissionRegressor):
    """``scale * sum_n w_n [z_a > z_n]`` over the first ``n_levels`` levels (metres)."""

    _tag = "stepwise"
    _scalar_params = ("scale",)

    def __init__(self, n_levels=4, weights=None, scale=1.0, constants=None,
                 free_params=("scale",)):
        self.n_levels = n_levels
        self.weights = weights
        self.scale = scale
        self.constants = constants
        self.free_params = free_params

    def _vector_params(self):
        return ("weights",)

    def _n_weights(self):
        return int(self.n_levels)

    def _initial_params(self):
        w = np.ones(self._n_weights()) if self.weights is None else np.asarray(self.weights, float)
        return {"scale": float(self.scale), "weights": w}

    def _prepare(self, z):
        heights = np.array([s.z_n for s in eigenstates(self.n_levels, constants=self.constants)])
        return (z[:, None] > heights[None, :]).astype(float)

    def _curve(self, steps, params):
        return params["scale"] * (steps @ params["weights"])


class ModeSumTransmission(_TransmissionRegressor):
    """``scale * sum_n w_n (1 - kappa tau_n(z_a))^n_bounces`` with heights in metres.

    The level tails ``tau_n`` depend only on the heights, so they are
    computed once per ``fit``/``predict`` call.
    """

    _tag = "modesum"
    _scalar_params = ("scale", "kappa", "n_bounces")

    def __init__(self, n_levels=10, weights=None, kappa=1.0, n_bounces=15.0, scale=1.0,
                 constants=None, free_params=("scale", "kappa")):
        self.n_levels = n_levels
        self.weights = weights
        self.kappa = kappa
        self.n_bounces = n_bounces
        self.scale = scale
        self.constants = constants
        self.free_params = free_params

    def _vector_params(self):
        return ("weights",)

    def _n_weights(self):
        return int(self.n_levels)

    def _initial_params(self):
        w = np.ones(self._n_weights()) if self.weights is None else np.asarray(self.weights, float)
        return {"scale": float(self.scale), "kappa": float(self.kappa),
                "n_bounces": float(self.n_bounces), "weights": w}

    def _prepare(self, z):
        return mode_tails(z, self.n_levels, self.constants)

    def _curve(self, tails, params):
        return params["scale"] * _modesum_from_tails(
            tails, params["weights"], params["kappa"], params["n_bounces"])


MODELS = {
    "classical": ClassicalTransmission,
    "semiclassical": SemiclassicalTransmission,
    "stepwise": StepwiseTransmission,
    "modesum": ModeSumTransmission,
}


def fit_transmission(data, model, free_params=None, **model_params):
    """Fit a named model to a :class:`TransmissionCurve`.

    Uses weighted least squares when the curve carries ``stat_err``.
    Raises :class:`ConvergenceError` (with the partial result attached)
    when the iteration budget runs out.
    """
    if not isinstance(data, TransmissionCurve):
        raise DomainError("data must be a TransmissionCurve")
    try:
        cls = MODELS[model]
    except KeyError:
        raise DomainError(f"unknown model {model!r}; choose from {sorted(MODELS)}") from None
    if free_params is not None:
        model_params["free_params"] = tuple(free_params)
    est = cls(**model_params)
    sigma = data.stat_err
    if sigma is not None:
        # binomial errors vanish where the ratio is exactly 0 or 1
        positive = sigma[sigma > 0]
        sigma = np.maximum(sigma, positive.min()) if positive.size else None
    est.fit(data.z_a_grid, data.counts, sigma=sigma)
    res = est.result()
    res.n_points = len(data)
    return res
