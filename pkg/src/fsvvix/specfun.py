"""Real-argument special functions used by the CIR moment and transform formulas.

The confluent hypergeometric function is implemented here directly because the
moment formulas need it in exponentially scaled form over a very wide argument
range (the argument ``2 kappa x / (sigma^2 (exp(kappa u) - 1))`` diverges as
``u -> 0``).  Log-gamma and the modified Bessel function are thin wrappers over
:mod:`scipy.special` with domain checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConvergenceError, DomainError

__all__ = [
    "SpecFunConfig",
    "DEFAULT_CONFIG",
    "kummer_1f1",
    "kummer_1f1_scaled",
    "log_gamma",
    "gamma_ratio",
    "bessel_i",
    "bessel_i_scaled",
]


@dataclass(frozen=True)
class SpecFunConfig:
    """Tolerances for the series and asymptotic expansions.

    ``asymptotic_switch`` is the argument magnitude above which the large-z
    expansion of 1F1 is tried; it is only used where the neglected
    exponentially small part is below ``series_tol``.
    """

    series_tol: float = 1e-15
    max_terms: int = 20000
    asymptotic_switch: float = 30.0

    def __post_init__(self):
        if not 0.0 < self.series_tol <= 1e-6:
            raise DomainError(f"series_tol must lie in (0, 1e-6], got {self.series_tol}")
        if self.max_terms < 200:
            raise DomainError(f"max_terms must be >= 200, got {self.max_terms}")
        if self.asymptotic_switch <= 0:
            raise DomainError("asymptotic_switch must be positive")


DEFAULT_CONFIG = SpecFunConfig()

# The series needs about z + O(sqrt(z)) terms; refuse arguments it cannot finish.
_SERIES_ZMAX_FRACTION = 0.7


def _is_nonpos_int(x):
    return (x <= 0) & (x == np.round(x))


def _series_scaled(a, b, z, cfg):
    """exp(-z) * sum_k (a)_k z^k / ((b)_k k!) on flat arrays.

    Terms are summed relative to a per-element scale ``exp(log_scale)`` that
    is raised whenever the partial sum grows large, so ``exp(-z)`` is never
    formed on its own and large ``z`` neither underflows nor overflows.
    """
    term = np.ones_like(z)
    total = term.copy()
    log_scale = -z.copy()
    out = np.empty_like(z)
    idx = np.arange(z.size)
    a, b, z = a.copy(), b.copy(), z.copy()
    for k in range(cfg.max_terms):
        ratio = (a + k) * z / ((b + k) * (k + 1.0))
        term = term * ratio
        total = total + term
        big = np.abs(total) > 1e150
        if big.any():
            term[big] *= 1e-150
            total[big] *= 1e-150
            log_scale[big] += 150.0 * math.log(10.0)
        done = (np.abs(term) <= cfg.series_tol * np.abs(total)) & (np.abs(ratio) < 1.0)
        done |= term == 0.0
        if done.any():
            with np.errstate(under="ignore"):
                out[idx[done]] = total[done] * np.exp(log_scale[done])
            keep = ~done
            idx, a, b, z = idx[keep], a[keep], b[keep], z[keep]
            term, total, log_scale = term[keep], total[keep], log_scale[keep]
            if idx.size == 0:
                return out
    raise ConvergenceError(
        f"1F1 power series did not converge in {cfg.max_terms} terms "
        f"(e.g. a={a[0]!r}, b={b[0]!r}, z={z[0]!r})"
    )


def _asymptotic_scaled(a, b, z, cfg):
    """Large-z expansion of exp(-z) 1F1(a; b; z).

    Returns (values, ok) where ``ok`` flags elements whose divergent series
    reached ``series_tol`` before its terms started growing.
    """
    log_pref = special.gammaln(b) - special.gammaln(a) + (a - b) * np.log(z)
    sign = special.gammasgn(b) * special.gammasgn(a)
    term = np.ones_like(z)
    total = np.ones_like(z)
    ok = np.zeros(z.shape, dtype=bool)
    live = np.ones(z.shape, dtype=bool)
    for s in range(cfg.max_terms):
        new = term * (1.0 - a + s) * (b - a + s) / ((s + 1.0) * z)
        growing = np.abs(new) > np.abs(term)
        live &= ~growing | (new == 0.0)
        term = np.where(live, new, term)
        total = np.where(live, total + term, total)
        conv = live & ((np.abs(term) <= cfg.series_tol * np.abs(total)) | (term == 0.0))
        ok |= conv
        live &= ~conv
        if not live.any():
            break
    return sign * np.exp(log_pref) * total, ok


def _scaled_nonneg(a, b, z, cfg):
    """exp(-z) 1F1(a; b; z) for z >= 0 (flat float arrays)."""
    out = np.empty_like(z)
    zero = z == 0.0
    out[zero] = 1.0
    use_asym = (z > cfg.asymptotic_switch) & ~_is_nonpos_int(a) & ~zero
    if use_asym.any():
        aa, bb, zz = a[use_asym], b[use_asym], z[use_asym]
        # relative size of the exponentially small companion series
        with np.errstate(divide="ignore", invalid="ignore"):
            sub = np.where(
                _is_nonpos_int(bb - aa),
                -np.inf,
                special.gammaln(aa) - special.gammaln(bb - aa) - zz + (bb - 2.0 * aa) * np.log(zz),
            )
        small = sub < np.log(cfg.series_tol)
        vals, ok = _asymptotic_scaled(aa, bb, zz, cfg)
        good = small & ok
        pos = np.flatnonzero(use_asym)
        out[pos[good]] = vals[good]
        use_asym[pos[~good]] = False
    rest = ~use_asym & ~zero
    if rest.any():
        if np.any(z[rest] > _SERIES_ZMAX_FRACTION * cfg.max_terms):
            raise ConvergenceError("1F1: argument too large for the power series and "
                                   "outside the validity of the asymptotic expansion")
        out[rest] = _series_scaled(a[rest], b[rest], z[rest], cfg)
    return out


def _prepare(a, b, z):
    a, b, z = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(z, float))
    if np.any(_is_nonpos_int(b)):
        raise DomainError("1F1 undefined for b a nonpositive integer")
    if not np.all(np.isfinite(z)) or not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise DomainError("1F1 arguments must be finite")
    return a, b, z


def _scalarize(x, shape):
    return float(x.item()) if shape == () else x.reshape(shape)


def kummer_1f1_scaled(a, b, z, config: SpecFunConfig | None = None):
    """Return ``exp(-max(z, 0)) * 1F1(a; b; z)``.

    For negative ``z`` the Kummer transformation
    ``1F1(a; b; z) = exp(z) 1F1(b - a; b; -z)`` moves the evaluation to a
    positive argument, so no alternating series is ever summed with large
    arguments.  Works elementwise on broadcastable arrays.
    """
    cfg = config or DEFAULT_CONFIG
    a, b, z = _prepare(a, b, z)
    shape = z.shape
    a, b, z = a.ravel(), b.ravel(), z.ravel()
    out = np.empty_like(z)
    neg = z < 0
    if neg.any():
        # exp(z) 1F1(b-a; b; -z) = exp(-|z|) 1F1(b-a; b; |z|) * exp(|z|) * exp(z) ...
        # which, relative to the scaling exp(-max(z,0)) = 1, is the scaled value at |z|.
        out[neg] = _scaled_nonneg(b[neg] - a[neg], b[neg], -z[neg], cfg)
    if (~neg).any():
        out[~neg] = _scaled_nonneg(a[~neg], b[~neg], z[~neg], cfg)
    return _scalarize(out, shape)


def kummer_1f1(a, b, z, config: SpecFunConfig | None = None):
    """Kummer's confluent hypergeometric function ``1F1(a; b; z)`` for real arguments.

    Raises
    ------
    DomainError
        If ``b`` is zero or a negative integer.
    ConvergenceError
        If neither the power series nor the asymptotic expansion converges.
    """
    scaled = np.asarray(kummer_1f1_scaled(a, b, z, config))
    z = np.broadcast_to(np.asarray(z, float), scaled.shape)
    with np.errstate(over="ignore"):
        out = scaled * np.exp(np.maximum(z, 0.0))
    return float(out) if out.shape == () else out


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    x = np.asarray(x, float)
    if np.any(~(x > 0)):
        raise DomainError("log_gamma requires x > 0")
    out = special.gammaln(x)
    return float(out) if out.shape == () else out


def gamma_ratio(p, q):
    """``Gamma(p) / Gamma(q)`` evaluated as ``exp(lgamma(p) - lgamma(q))``."""
    return np.exp(log_gamma(p) - log_gamma(q))


def _check_bessel(order, z):
    order = np.asarray(order, float)
    z = np.asarray(z, float)
    if np.any(order < -1):
        raise DomainError("bessel_i requires order >= -1")
    if np.any(z < 0):
        raise DomainError("bessel_i requires z >= 0")
    return order, z


def bessel_i(order, z):
    """Modified Bessel function of the first kind ``I_order(z)``."""
    order, z = _check_bessel(order, z)
    out = special.iv(order, z)
    if np.any(np.isnan(out)):
        raise ConvergenceError("bessel_i evaluation failed")
    return float(out) if np.ndim(out) == 0 else out


def bessel_i_scaled(order, z):
    """Exponentially scaled ``exp(-z) I_order(z)``, safe for large ``z``."""
    order, z = _check_bessel(order, z)
    order, z = np.broadcast_arrays(order, z)
    out = np.asarray(special.ive(order, z), float)
    # scipy returns nan for z beyond ~1e10; the large-argument series is exact to rounding there
    big = z > _IVE_ASYMPTOTIC_Z
    if np.any(big):
        out = out.copy()
        out[big] = _ive_large(order[big], z[big])
    if np.any(np.isnan(out)):
        raise ConvergenceError("bessel_i_scaled evaluation failed")
    return float(out) if np.ndim(out) == 0 else out


_IVE_ASYMPTOTIC_Z = 1e8


def _ive_large(order, z):
    """``exp(-z) I_order(z) ~ (2 pi z)^(-1/2) sum_k (-1)^k prod_j (4 order^2 - (2j-1)^2) / (k! (8z)^k)``."""
    mu = 4.0 * order * order
    term = np.ones_like(z)
    total = np.ones_like(z)
    for k in range(1, 4):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        total = total + term
    return total / np.sqrt(2.0 * np.pi * z)
