"""Two-step GMM for the discretised index dynamics without jumps.

    (S_{t+1} - S_t) / S_t = r dt + gamma eps_{t+1},   E[eps_{t+1}^2] = E[V_t^(2 alpha)] dt

Orthogonality conditions per observation::

    [eps, eps S, eps S^2, eps^2 - phi_t dt, (eps^2 - phi_t dt) S]

with ``phi_t = E[V_{t dt}^(2 alpha) | V_0]``.  The moment matrix multiplies the
first three by ``gamma`` and the last two by ``gamma^2``: the conditions are the
same, but with ``eps`` itself a fixed weighting matrix rewards ``gamma -> inf``
(every moment shrinks to zero).  Levels ``S`` are divided by the first
observation to keep the moment covariance well conditioned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .. import specfun
from ..errors import DomainError, NestingError, OptimizationError, SingularWeightError

__all__ = [
    "phi_second_moment",
    "ReturnSeries",
    "GmmSpec",
    "GmmResult",
    "gmm_objective",
    "moment_matrix",
    "newey_west",
    "moment_jacobian",
    "gmm_estimate",
    "NestedTestResult",
    "nested_test",
    "PARAM_NAMES",
]

PARAM_NAMES = ("kappa", "theta", "sigma", "gamma", "alpha", "v0")
N_MOMENTS = 5


def phi_second_moment(kappa, theta, sigma, alpha, v0, t):
    """``E[V_t^(2 alpha) | V_0 = v0]`` for the square-root variance.

    Gamma-ratio / 1F1 form.  In log space the ``exp(-kappa t (2 alpha + b))``
    prefactor cancels against the ``(kappa/(e^(kappa t)-1))^(-2 alpha - b)``
    factor and ``exp(-w)`` against the growth of ``1F1``, leaving

        Gamma(b + 2a)/Gamma(b) * (sigma^2 (1 - e^(-kappa t)) / (2 kappa))^(2a) * e^(-w) 1F1(b + 2a; b; w)

    with ``b = 2 kappa theta / sigma^2`` and ``w = 2 kappa v0 / (sigma^2 (e^(kappa t) - 1))``.
    ``t`` may be an array; ``t = 0`` returns ``v0^(2 alpha)``.
    """
    if kappa <= 0 or theta <= 0 or sigma == 0 or v0 <= 0:
        raise DomainError("need kappa > 0, theta > 0, sigma != 0, v0 > 0")
    s2 = sigma * sigma
    b = 2.0 * kappa * theta / s2
    p = 2.0 * alpha
    if not b + p > 0:
        raise DomainError(f"E[V^{p}] is infinite: need 2 alpha > -2 kappa theta / sigma^2")
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    out = np.empty(t.shape)
    zero = t == 0
    out[zero] = v0 ** p
    pos = ~zero
    if pos.any():
        kt = kappa * t[pos]
        with np.errstate(over="ignore"):
            w = 2.0 * kappa * v0 / (s2 * np.expm1(kt))
        log_phi = (specfun.log_gamma(b + p) - specfun.log_gamma(b)
                   + p * (math.log(s2 / (2.0 * kappa)) + np.log(-np.expm1(-kt)))
                   + np.log(specfun.kummer_1f1_scaled(b + p, b, w)))
        out[pos] = np.exp(log_phi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ReturnSeries:
    """Index closes on strictly increasing dates; ``dt`` is years per observation."""

    dates: tuple
    closes: np.ndarray
    dt: float = 1.0 / 252.0

    def __post_init__(self):
        closes = np.asarray(self.closes, float)
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "dates", tuple(self.dates))
        if closes.ndim != 1 or closes.size < 2:
            raise DomainError("need at least two closes")
        if len(self.dates) != closes.size:
            raise DomainError("dates and closes differ in length")
        if not np.all(np.isfinite(closes)) or np.any(closes <= 0):
            raise DomainError("closes must be positive and finite")
        if any(b <= a for a, b in zip(self.dates[:-1], self.dates[1:])):
            raise DomainError("dates must be strictly increasing")
        if not self.dt > 0:
            raise DomainError("dt must be positive")

    @property
    def returns(self) -> np.ndarray:
        """Simple returns ``(S_{t+1} - S_t) / S_t``."""
        return np.diff(self.closes) / self.closes[:-1]

    @property
    def n_obs(self) -> int:
        return self.closes.size - 1

    @classmethod
    def from_closes(cls, closes, dt=1.0 / 252.0):
        closes = np.asarray(closes, float)
        return cls(tuple(range(closes.size)), closes, dt)


@dataclass(frozen=True)
class GmmSpec:
    """Which of (kappa, theta, sigma, gamma, alpha, v0) are free; the rest are fixed.

    ``v0`` not free and not fixed means ``v0 = theta``.
    """

    name: str
    free: tuple
    fixed: dict = field(default_factory=dict)
    r: float = 0.0
    nw_lags: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        unknown = set(self.free) | set(self.fixed)
        unknown -= set(PARAM_NAMES)
        if unknown:
            raise DomainError(f"unknown parameters {sorted(unknown)}")
        if set(self.free) & set(self.fixed):
            raise DomainError("a parameter cannot be both free and fixed")
        missing = set(PARAM_NAMES) - set(self.free) - set(self.fixed) - {"v0"}
        if missing:
            raise DomainError(f"parameters neither free nor fixed: {sorted(missing)}")
        if len(self.free) > N_MOMENTS:
            raise DomainError("more free parameters than moments")

    @property
    def df(self) -> int:
        return N_MOMENTS - len(self.free)

    def full(self, values) -> dict:
        d = dict(self.fixed)
        d.update(zip(self.free, values))
        d.setdefault("v0", d["theta"])
        return d

    @classmethod
    def unrestricted(cls, **kw):
        return cls("unrestricted", ("kappa", "theta", "sigma", "gamma", "alpha"), {}, **kw)

    @classmethod
    def heston(cls, **kw):
        return cls("heston", ("kappa", "theta", "sigma"), {"alpha": 0.5, "gamma": 1.0}, **kw)

    @classmethod
    def three_halves(cls, **kw):
        return cls("three-halves", ("kappa", "theta", "sigma"), {"alpha": -0.5, "gamma": 1.0}, **kw)

    @classmethod
    def fsv(cls, **kw):
        return cls("fsv", ("kappa", "theta", "sigma", "alpha"), {"gamma": 1.0}, **kw)

    @classmethod
    def named(cls, name: str, **kw):
        table = {"unrestricted": cls.unrestricted, "heston": cls.heston,
                 "three-halves": cls.three_halves, "fsv": cls.fsv}
        try:
            return table[name](**kw)
        except KeyError:
            raise DomainError(f"unknown GMM spec {name!r}") from None


def moment_matrix(data: ReturnSeries, spec: GmmSpec, values) -> np.ndarray:
    """``T x 5`` matrix of moment contributions (in return units) at ``values``."""
    p = spec.full(values)
    ret = data.returns
    s = data.closes[:-1] / data.closes[0]
    g = p["gamma"]
    eps = (ret - spec.r * data.dt) / g
    t = np.arange(ret.size) * data.dt
    phi = phi_second_moment(p["kappa"], p["theta"], p["sigma"], p["alpha"], p["v0"], t)
    e2 = (eps * eps - phi * data.dt) * g * g
    eps = eps * g
    return np.column_stack([eps, eps * s, eps * s * s, e2, e2 * s])


def newey_west(m: np.ndarray, lags: int) -> np.ndarray:
    """Bartlett-kernel long-run covariance of the (demeaned) rows of ``m``."""
    x = m - m.mean(axis=0)
    n = x.shape[0]
    s = x.T @ x / n
    for lag in range(1, lags + 1):
        g = x[lag:].T @ x[:-lag] / n
        s += (1.0 - lag / (lags + 1.0)) * (g + g.T)
    return s


def _default_lags(n):
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


def gmm_objective(data: ReturnSeries, spec: GmmSpec, values, weight) -> float:
    """``J_T = M_T' W M_T`` with ``M_T`` the sample mean of the moments."""
    mbar = moment_matrix(data, spec, values).mean(axis=0)
    return float(mbar @ weight @ mbar)


# optimisation coordinates: logs for positive parameters, alpha as is
_POSITIVE = {"kappa", "theta", "sigma", "gamma", "v0"}


def _to_z(spec, values):
    return np.array([math.log(v) if n in _POSITIVE else v for n, v in zip(spec.free, values)])


def _from_z(spec, z):
    return np.array([math.exp(min(max(v, -40.0), 40.0)) if n in _POSITIVE else v for n, v in zip(spec.free, z)])


_DEFAULT_START = {"kappa": 2.0, "theta": 0.05, "sigma": 0.5, "gamma": 1.0, "alpha": 0.5, "v0": 0.05}


def _minimise(data, spec, weight, starts):
    def raw(z):
        try:
            val = gmm_objective(data, spec, _from_z(spec, z), weight)
        except (DomainError, ArithmeticError, ValueError):
            return math.inf
        return val if math.isfinite(val) else math.inf

    best = None
    for z0 in starts:
        f0 = raw(z0)
        if not math.isfinite(f0):
            continue
        scale = max(f0, 1e-300)

        def obj(z):
            return min(raw(z) / scale, 1e300)

        res = optimize.minimize(obj, z0, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-12, "maxfev": 6000, "adaptive": True})
        res = optimize.minimize(obj, res.x, method="BFGS", options={"gtol": 1e-10, "maxiter": 500})
        fun = res.fun * scale
        if best is None or fun < best[1]:
            best = (res.x, fun)
    if best is None or not best[1] < 1e300:
        raise OptimizationError("GMM objective could not be evaluated at any start")
    return best


def _starts(spec, data, start, rng, n_starts):
    base = dict(_DEFAULT_START)
    # level start from the realised variance of returns
    rv = float(np.var(data.returns) / data.dt)
    base["theta"] = max(rv, 1e-4)
    base["v0"] = base["theta"]
    if start:
        base.update(start)
    pts = [_to_z(spec, [base[n] for n in spec.free])]
    for _ in range(n_starts - 1):
        jitter = rng.normal(0.0, 0.5, len(spec.free))
        pts.append(pts[0] + jitter)
    return pts


@dataclass(frozen=True)
class GmmResult:
    spec: GmmSpec
    params: dict
    stderrs: dict
    j_stat: float
    p_value: float
    df: int
    n_obs: int
    weight: np.ndarray = field(repr=False)
    objective: float = 0.0

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.name, "params": self.params, "stderrs": self.stderrs,
            "J": self.j_stat, "p_value": self.p_value, "DF": self.df, "n_obs": self.n_obs,
        }


def moment_jacobian(data, spec, values, h=1e-6):
    """Central-difference Jacobian of the mean moments with respect to the free parameters."""
    values = np.asarray(values, float)
    cols = []
    for i in range(values.size):
        # positive parameters get a relative step so the lower point stays admissible
        step = h * abs(values[i]) if spec.free[i] in _POSITIVE else h * max(abs(values[i]), 1e-3)
        up, dn = values.copy(), values.copy()
        up[i] += step
        dn[i] -= step
        cols.append((moment_matrix(data, spec, up).mean(axis=0)
                     - moment_matrix(data, spec, dn).mean(axis=0)) / (2 * step))
    return np.column_stack(cols)


def _invert(s):
    try:
        cond = np.linalg.cond(s)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularWeightError(f"long-run covariance is singular (condition number {cond:.3g})")
    return np.linalg.inv(s)


def gmm_estimate(data: ReturnSeries, spec: GmmSpec, start: dict | None = None, n_starts: int = 3,
                 seed: int = 0, weight: np.ndarray | None = None) -> GmmResult:
    """Two-step efficient GMM with a Newey-West weighting matrix.

    If ``weight`` is given it is used as is (one step); this is how restricted
    models are refitted with the unrestricted weighting matrix.
    """
    if data.n_obs < 50:
        raise DomainError("need at least 50 observations")
    rng = np.random.default_rng(seed)
    lags = spec.nw_lags if spec.nw_lags is not None else _default_lags(data.n_obs)
    starts = _starts(spec, data, start, rng, n_starts)
    if weight is None:
        # first step: identity weight on moments rescaled to comparable size
        m0 = moment_matrix(data, spec, _from_z(spec, starts[0]))
        sd = m0.std(axis=0)
        if not np.all(sd > 0):
            raise SingularWeightError("a moment condition is constant over the sample")
        d = 1.0 / sd
        first_x, _ = _minimise(data, spec, np.diag(d * d), starts)
        s_hat = newey_west(moment_matrix(data, spec, _from_z(spec, first_x)), lags)
        weight = _invert(s_hat)
        starts = [first_x] + starts
    best_x, _ = _minimise(data, spec, weight, starts)
    values = _from_z(spec, best_x)
    j_t = gmm_objective(data, spec, values, weight)
    n = data.n_obs
    s_hat = newey_west(moment_matrix(data, spec, values), lags)
    g = moment_jacobian(data, spec, values)
    bread = np.linalg.pinv(g.T @ weight @ g)
    cov = bread @ (g.T @ weight @ s_hat @ weight @ g) @ bread / n
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    df = spec.df
    j_stat = n * j_t
    p_value = float(stats.chi2.sf(j_stat, df)) if df > 0 else float("nan")
    full = spec.full(values)
    return GmmResult(
        spec=spec, params={k: float(full[k]) for k in PARAM_NAMES},
        stderrs={k: float(v) for k, v in zip(spec.free, se)},
        j_stat=float(j_stat), p_value=p_value, df=df, n_obs=n, weight=weight, objective=j_t,
    )


@dataclass(frozen=True)
class NestedTestResult:
    R: float
    df: int
    p_value: float
    restricted: GmmResult
    unrestricted: GmmResult


def _check_nested(restricted: GmmSpec, unrestricted: GmmSpec):
    if not set(restricted.free) <= set(unrestricted.free):
        raise NestingError("restricted free parameters must be a subset of the unrestricted ones")
    for name, value in unrestricted.fixed.items():
        if restricted.fixed.get(name, value) != value:
            raise NestingError(f"{name} is fixed to different values")
    if ("v0" in unrestricted.free) and ("v0" not in restricted.free) and ("v0" not in restricted.fixed):
        raise NestingError("v0 tied to theta in the restricted model but free in the unrestricted one")


def nested_test(data: ReturnSeries, restricted: GmmSpec, unrestricted: GmmSpec, seed: int = 0,
                unrestricted_fit: GmmResult | None = None) -> NestedTestResult:
    """``R = T [J_T(restricted) - J_T(unrestricted)]`` under the unrestricted weighting matrix."""
    _check_nested(restricted, unrestricted)
    df = len(unrestricted.free) - len(restricted.free)
    fit_u = unrestricted_fit or gmm_estimate(data, unrestricted, seed=seed)
    if df == 0:
        return NestedTestResult(0.0, 0, 1.0, fit_u, fit_u)
    start = {k: fit_u.params[k] for k in restricted.free}
    fit_r = gmm_estimate(data, restricted, start=start, seed=seed, weight=fit_u.weight)
    # the restricted minimum cannot be below the unrestricted one; a negative gap is optimiser noise
    r_stat = max(data.n_obs * (fit_r.objective - fit_u.objective), 0.0)
    return NestedTestResult(R=r_stat, df=df, p_value=float(stats.chi2.sf(r_stat, df)),
                            restricted=fit_r, unrestricted=fit_u)
