"""The square-root (CIR) variance factor ``dV = kappa (theta - V) dt + sigma sqrt(V) dZ``.

Contents: parameter validation and the Feller / non-explosion diagnostics, the
noncentral chi-square transition law (density, CDF, exact sampling and a
quadrature-based expectation operator), the closed-form transform
``E[X^-eta exp(-gamma X_t - eps int X - nu int 1/X)]``, its moment special
case, and the scale/speed-density boundary classification at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import specfun
from .errors import DomainError, ValidityError
from .quadrature import adaptive_gauss_legendre

__all__ = [
    "CirParams",
    "ConditionReport",
    "check_conditions",
    "CirLaw",
    "transition_density",
    "sample_exact",
    "TransformArgs",
    "transform_phi",
    "transform_horizon",
    "negative_moment",
    "conditional_mean",
    "conditional_variance",
    "BoundaryReport",
    "boundary_report",
]


@dataclass(frozen=True)
class CirParams:
    """kappa (1/yr), theta (variance), sigma (1/sqrt(yr), sign kept), v0 (variance)."""

    kappa: float
    theta: float
    sigma: float
    v0: float

    def __post_init__(self):
        for name in ("kappa", "theta", "sigma", "v0"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.kappa <= 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if self.theta <= 0:
            raise DomainError(f"theta must be positive, got {self.theta}")
        if self.sigma == 0:
            raise DomainError("sigma must be nonzero")
        if self.v0 <= 0:
            raise DomainError(f"v0 must be positive, got {self.v0}")

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma

    @property
    def feller_ratio(self) -> float:
        """``2 kappa theta / sigma^2``."""
        return 2.0 * self.kappa * self.theta / self.sigma2

    @property
    def feller(self) -> bool:
        return self.feller_ratio >= 1.0


@dataclass(frozen=True)
class ConditionReport:
    feller: bool
    non_explosion: bool
    martingale: bool
    feller_ratio: float

    @property
    def all_ok(self) -> bool:
        return self.feller and self.non_explosion and self.martingale


def check_conditions(params: CirParams, alpha: float) -> ConditionReport:
    """Feller (ratio >= 1), non-explosion (ratio > 1 - alpha) and martingale (ratio >= 1) flags."""
    ratio = params.feller_ratio
    return ConditionReport(
        feller=ratio >= 1.0,
        non_explosion=ratio > 1.0 - alpha,
        martingale=ratio >= 1.0,
        feller_ratio=ratio,
    )


def conditional_mean(params: CirParams, t, x=None):
    x = params.v0 if x is None else x
    return params.theta + (np.asarray(x, float) - params.theta) * np.exp(-params.kappa * np.asarray(t, float))


def conditional_variance(params: CirParams, t, x=None):
    x = params.v0 if x is None else x
    k, th, s2 = params.kappa, params.theta, params.sigma2
    e = np.exp(-k * np.asarray(t, float))
    return np.asarray(x, float) * s2 / k * (e - e * e) + th * s2 / (2.0 * k) * (1.0 - e) ** 2


@dataclass(frozen=True)
class CirLaw:
    """Law of ``V_{t+horizon}`` given ``V_t = start`` (defaults to ``params.v0``).

    ``2 c V`` is noncentral chi-square with ``2q + 2`` degrees of freedom and
    noncentrality ``2u``.
    """

    params: CirParams
    horizon: float
    start: float | None = None
    x0: float = field(init=False)
    c: float = field(init=False)
    q: float = field(init=False)
    u: float = field(init=False)

    def __post_init__(self):
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        x0 = self.params.v0 if self.start is None else float(self.start)
        if not x0 > 0:
            raise DomainError("start variance must be positive")
        p = self.params
        c = 2.0 * p.kappa / (p.sigma2 * -math.expm1(-p.kappa * self.horizon))
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "q", p.feller_ratio - 1.0)
        object.__setattr__(self, "u", c * x0 * math.exp(-p.kappa * self.horizon))

    @property
    def df(self) -> float:
        return 2.0 * self.q + 2.0

    @property
    def nc(self) -> float:
        return 2.0 * self.u

    @property
    def mean(self) -> float:
        return float(conditional_mean(self.params, self.horizon, self.x0))

    @property
    def variance(self) -> float:
        return float(conditional_variance(self.params, self.horizon, self.x0))

    def pdf(self, y):
        return transition_density(self, y)

    def cdf(self, y):
        return stats.ncx2.cdf(2.0 * self.c * np.asarray(y, float), self.df, self.nc)

    def sf(self, y):
        return stats.ncx2.sf(2.0 * self.c * np.asarray(y, float), self.df, self.nc)

    def ppf(self, p):
        return stats.ncx2.ppf(p, self.df, self.nc) / (2.0 * self.c)

    def isf(self, p):
        return stats.ncx2.isf(p, self.df, self.nc) / (2.0 * self.c)

    def sample(self, rng, n):
        return sample_exact(self, rng, n)

    def expect(self, func, breakpoints=(), rtol=1e-11, tail=1e-13):
        """``E[func(V)]`` by adaptive Gauss-Legendre quadrature against the density.

        The support is truncated to the ``tail`` quantiles.  ``breakpoints``
        (e.g. the kink of a call payoff) start new panels.  When the density
        is unbounded at zero (Feller violated) the first panel is integrated in
        the variable ``s`` with ``y = y1 * s**(1/(q+1))``, which removes the
        ``y**q`` singularity.
        """
        hi = float(self.isf(tail))
        # the lower quantile is kept when the density is singular at zero too: at
        # short horizons the mass sits in a spike far from zero
        lo = max(float(self.ppf(tail)), 0.0)
        cuts = {0.0, lo, hi}
        cuts.update(float(b) for b in breakpoints if lo < b < hi)
        m, sd = self.mean, math.sqrt(self.variance)
        cuts.update(x for x in (m - 3 * sd, m - sd, m, m + sd, m + 3 * sd) if lo < x < hi)
        cuts = sorted(cuts)

        def integrand(y):
            return np.asarray(func(y), float) * transition_density(self, y)

        # body panels first; the panel at zero then gets an absolute tolerance
        # relative to the body so a tiny, singular contribution is not chased
        total = 0.0
        for a, b in zip(cuts[1:-1], cuts[2:]):
            total += adaptive_gauss_legendre(integrand, a, b, rtol=rtol)[0]
        y1 = cuts[1]
        beta = 1.0 / (self.q + 1.0)

        def g(s):
            s = np.maximum(s, 1e-300)
            return integrand(y1 * s ** beta) * y1 * beta * s ** (beta - 1.0)

        total += adaptive_gauss_legendre(g, 0.0, 1.0, rtol=rtol, atol=0.1 * rtol * abs(total))[0]
        return total


def transition_density(law: CirLaw, y):
    """``c exp(-u - c y) (c y / u)^(q/2) I_q(2 sqrt(u c y))``, evaluated in log space."""
    y = np.asarray(y, float)
    if np.any(y <= 0):
        raise DomainError("transition density defined for y > 0 only")
    c, q, u = law.c, law.q, law.u
    cy = c * y
    root_cy = np.sqrt(cy)
    z = 2.0 * math.sqrt(u) * root_cy
    # -u - cy + z == -(sqrt(cy) - sqrt(u))^2; the difference is formed as
    # c (y - x0 e^(-kappa t)) / (sqrt(cy) + sqrt(u)) so it stays exact when c is huge
    shift = law.x0 * math.exp(-law.params.kappa * law.horizon)
    gap = c * (y - shift) / (root_cy + math.sqrt(u))
    with np.errstate(divide="ignore", under="ignore"):
        log_f = (math.log(c) - gap * gap + 0.5 * q * (np.log(cy) - math.log(u))
                 + np.log(specfun.bessel_i_scaled(q, z)))
        out = np.exp(log_f)
    return float(out) if out.ndim == 0 else out


def sample_exact(law: CirLaw, rng, n: int):
    """``n`` i.i.d. draws of the transition law (scaled noncentral chi-square)."""
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.default_rng(rng)
    return rng.noncentral_chisquare(law.df, law.nc, size=n) / (2.0 * law.c)


@dataclass(frozen=True)
class TransformArgs:
    """Exponent ``eta`` on X_t and Laplace coefficients on X_t, int X and int 1/X."""

    eta: float = 0.0
    gamma_t: float = 0.0
    epsilon: float = 0.0
    nu: float = 0.0


def _check_transform_args(params: CirParams, args: TransformArgs):
    k, th, s2 = params.kappa, params.theta, params.sigma2
    if not params.feller:
        raise DomainError("the CIR transform formula requires the Feller condition")
    if not args.epsilon > -k * k / (2.0 * s2):
        raise DomainError("epsilon below -kappa^2 / (2 sigma^2)")
    d = (k * th - 0.5 * s2) ** 2
    if args.nu < -d / (2.0 * s2):
        raise DomainError("nu below -(kappa theta - sigma^2/2)^2 / (2 sigma^2)")
    eta_max = (k * th + 0.5 * s2 + math.sqrt(d + 2.0 * s2 * args.nu)) / s2
    if not args.eta < eta_max:
        raise DomainError(f"eta must be < {eta_max}")


def transform_horizon(params: CirParams, args: TransformArgs) -> float:
    """Largest horizon ``t*`` on which the transform is finite (``inf`` if unbounded)."""
    k, s2 = params.kappa, params.sigma2
    sqrt_a = math.sqrt(k * k + 2.0 * s2 * args.epsilon)
    if args.gamma_t >= -(sqrt_a + k) / s2:
        return math.inf
    return math.log(1.0 - 2.0 * sqrt_a / (k + s2 * args.gamma_t + sqrt_a)) / sqrt_a


def transform_phi(params: CirParams, args: TransformArgs, t, x=None):
    """``E[X_t^-eta exp(-gamma X_t - eps int_0^t X ds - nu int_0^t ds/X)]`` given ``X_0 = x``.

    Closed form in terms of ``m``, ``A``, ``beta(t, x)`` and ``K(t)``; evaluated
    in log space with the exponentially scaled 1F1.
    """
    _check_transform_args(params, args)
    x = params.v0 if x is None else x
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    if np.any(t <= 0) or np.any(x <= 0):
        raise DomainError("transform_phi requires t > 0 and x > 0")
    t_star = transform_horizon(params, args)
    if np.any(t >= t_star):
        raise ValidityError(f"transform undefined for t >= t* = {t_star}")

    k, th, s2 = params.kappa, params.theta, params.sigma2
    eta, gam = args.eta, args.gamma_t
    m = (2.0 / s2) * math.sqrt((k * th - 0.5 * s2) ** 2 + 2.0 * s2 * args.nu)
    sqrt_a = math.sqrt(k * k + 2.0 * s2 * args.epsilon)
    h = 0.5 * sqrt_a * t
    # sinh and coth through expm1 to stay accurate for small t
    em = np.expm1(2.0 * h)
    log_sinh = h + np.log(-np.expm1(-2.0 * h)) - math.log(2.0)
    coth = 1.0 + 2.0 / em
    log_beta = 0.5 * math.log(sqrt_a * sqrt_a) + 0.5 * np.log(x) - math.log(0.5 * s2) - log_sinh
    big_k = (sqrt_a * coth + k) / s2
    gk = gam + big_k
    a1 = 0.5 + 0.5 * m - eta + k * th / s2
    z = np.exp(2.0 * log_beta) / (4.0 * gk)
    log_phi = (
        (m + 1.0) * (log_beta - math.log(2.0))
        - (k * th / s2) * np.log(x)
        - a1 * np.log(gk)
        + (k * k * th * t - sqrt_a * x * coth + k * x) / s2
        + specfun.log_gamma(a1)
        - specfun.log_gamma(m + 1.0)
        + z
        + np.log(specfun.kummer_1f1_scaled(a1, m + 1.0, z))
    )
    out = np.exp(log_phi)
    return float(out) if out.ndim == 0 else out


def negative_moment(params: CirParams, eta, t, x=None):
    """``E[X_t^-eta | X_0 = x]`` for ``eta < 2 kappa theta / sigma^2``.

    Uses the sinh/coth form of the moment; the factor
    ``exp(kappa x (1 - coth(kappa t / 2)) / sigma^2) = exp(-w)`` is merged with
    the ``exp(w)`` growth of ``1F1(b - eta; b; w)`` so only the scaled 1F1 is
    ever formed.  ``eta``, ``t`` and ``x`` broadcast.
    """
    x = params.v0 if x is None else x
    eta, t, x = np.broadcast_arrays(np.asarray(eta, float), np.asarray(t, float), np.asarray(x, float))
    b = params.feller_ratio
    if np.any(eta >= b):
        raise DomainError(f"moment undefined: eta must be < 2 kappa theta / sigma^2 = {b}")
    if np.any(t < 0) or np.any(x <= 0):
        raise DomainError("negative_moment requires t >= 0 and x > 0")
    k, s2 = params.kappa, params.sigma2
    out = np.empty(t.shape)
    at_zero = t == 0
    out[at_zero] = x[at_zero] ** (-eta[at_zero])
    pos = ~at_zero
    if pos.any():
        e_, t_, x_ = eta[pos], t[pos], x[pos]
        kt = k * t_
        em = np.expm1(kt)
        w = 2.0 * k * x_ / (s2 * em)
        log_sinh = 0.5 * kt + np.log(-np.expm1(-kt)) - math.log(2.0)
        log_one_plus_coth = math.log(2.0) + kt - np.log(em)
        log_g = (
            e_ * math.log(k / s2)
            - b * log_sinh
            + b * 0.5 * kt  # kappa^2 theta t / sigma^2
            + (e_ - b) * log_one_plus_coth
            + specfun.log_gamma(b - e_)
            - specfun.log_gamma(b)
            + np.log(specfun.kummer_1f1_scaled(b - e_, b, w))
        )
        out[pos] = np.exp(log_g)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BoundaryReport:
    """Numerical scale/speed diagnostics for the boundary ``V = infinity``.

    ``log_scale`` holds ``log S(c, d)`` and ``speed_integral`` holds
    ``N(c, d) = int_c^d S(c, x) m(x) dx`` at each ``d`` in ``d_grid``.
    """

    c: float
    d_grid: tuple
    log_scale: tuple
    speed_integral: tuple
    scale_divergent: bool
    speed_divergent: bool
    classification: str


def _log_scale_density(params: CirParams, alpha: float, rho: float):
    b = params.feller_ratio
    k, s, s2 = params.kappa, params.sigma, params.sigma2
    p = alpha + 0.5
    if p == 0.0:
        def log_s(v):
            return -(b + 2.0 * rho / s) * np.log(v) + 2.0 * k * v / s2
        def dlog_s(v):
            return -(b + 2.0 * rho / s) / v + 2.0 * k / s2
    else:
        def log_s(v):
            return -b * np.log(v) + 2.0 * k * v / s2 - (2.0 * rho / s) * v ** p / p
        def dlog_s(v):
            return -b / v + 2.0 * k / s2 - (2.0 * rho / s) * v ** (p - 1.0)
    return log_s, dlog_s


def boundary_report(params: CirParams, alpha: float, rho: float, c: float = 1.0,
                    d_grid=(1e1, 1e2, 1e3, 1e4, 1e5, 1e6)) -> BoundaryReport:
    """Classify ``V = infinity`` for the variance under the measure change with drift ``sigma rho V^(alpha+1/2)``.

    Scale density ``s(V) = V^-b exp(2 kappa V / sigma^2 - 2 rho V^(alpha+1/2) / (sigma (alpha+1/2)))``
    and speed density ``m(V) = 1 / (sigma^2 V s(V))``.  ``S(c, d)`` is kept in
    log form; the speed integrand ``S(c, x) m(x)`` is computed through the
    well-conditioned ratio ``int_c^x s(y)/s(x) dy``.
    """
    if not -1.0 <= rho <= 0.0:
        raise DomainError("rho must lie in [-1, 0]")
    d_grid = tuple(float(d) for d in d_grid)
    if not all(d > c for d in d_grid) or list(d_grid) != sorted(d_grid):
        raise DomainError("d_grid must be increasing and above c")
    log_s, dlog_s = _log_scale_density(params, alpha, rho)
    s2 = params.sigma2

    def ratio(x):
        # int_c^x exp(log_s(y) - log_s(x)) dy; mass sits within a few 1/dlog_s(x) of x
        lx = log_s(x)
        slope = dlog_s(x)
        pts = []
        if slope > 0:
            pts = [max(c, x - j / slope) for j in (1.0, 10.0, 50.0) if x - j / slope > c]
        val, _ = integrate.quad(lambda y: math.exp(min(log_s(y) - lx, 700.0)), c, x,
                                points=pts or None, limit=400)
        return val

    def n_integrand_logx(lx):
        x = math.exp(lx)
        return ratio(x) / (s2 * x) * x

    log_scale = []
    speed = []
    acc = 0.0
    prev = c
    for d in d_grid:
        log_scale.append(float(log_s(d) + math.log(ratio(d))))
        part, _ = integrate.quad(n_integrand_logx, math.log(prev), math.log(d), limit=200)
        acc += part
        speed.append(acc)
        prev = d

    inc_s = np.diff(log_scale)
    scale_div = bool(np.all(inc_s > 0) and inc_s[-1] > 1e-3)
    inc_n = np.diff([0.0] + speed)
    speed_div = bool(inc_n[-1] > 0.9 * inc_n[-2]) if len(inc_n) >= 2 else True
    if scale_div:
        cls = "natural" if speed_div else "entrance"
    else:
        cls = "natural" if speed_div else "attainable"
    return BoundaryReport(c=c, d_grid=d_grid, log_scale=tuple(log_scale), speed_integral=tuple(speed),
                          scale_divergent=scale_div, speed_divergent=speed_div, classification=cls)
