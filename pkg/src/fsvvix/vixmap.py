"""Model parameters and the deterministic map from the variance state to VIX^2.

For every model the squared index over the window ``tau = 30/365`` is

    VIX^2 = 100^2 * (h1 + (1/tau) int_0^tau E[V_u^(2 alpha) | V_0 = v] du)

where ``h1`` is the jump offset.  The Heston case has an affine closed form;
the 3/2 case uses ``E[V^-1]``; the free-power case uses ``E[V^(2 alpha)]``.
The inner moments come from :func:`fsvvix.cir.negative_moment`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev

from .cir import CirParams, ConditionReport, check_conditions, negative_moment
from .errors import DomainError, ModelKindError
from .quadrature import mapped_nodes

__all__ = [
    "TAU",
    "ModelKind",
    "ModelParams",
    "JumpCompensation",
    "jump_offset",
    "vix_squared_hsv",
    "vix_squared_svj32",
    "vix_squared_fsv",
    "vix_squared",
    "vix_level",
    "VixSquaredMap",
    "vix_map",
]

TAU = 30.0 / 365.0
_SCALE = 100.0 ** 2


class ModelKind(str, enum.Enum):
    HSV = "hsv"
    SVJ32 = "svj32"
    FSV_AJ = "fsv-aj"
    FSV_DJ = "fsv-dj"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"heston": "hsv", "3/2-svj": "svj32", "svj-32": "svj32", "three-halves": "svj32"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ModelKindError(f"unknown model kind {value!r}") from None

    @property
    def is_fsv(self) -> bool:
        return self in (ModelKind.FSV_AJ, ModelKind.FSV_DJ)


@dataclass(frozen=True)
class ModelParams:
    """Full parameter vector with the model-kind tag.

    Jump means: ``mu1`` in (0, 1) for upward jumps, ``mu2 < 0`` for downward
    jumps; a mean may be left at 0 only when its intensity is 0.  The Feller
    and non-explosion conditions are reported by :meth:`conditions` but not
    enforced here, since published parameter sets violate them.
    """

    cir: CirParams
    alpha: float
    kind: ModelKind
    rho: float = 0.0
    gamma_diff: float = 1.0
    r: float = 0.0005
    lambda1: float = 0.0
    mu1: float = 0.0
    lambda2: float = 0.0
    mu2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        for name in ("alpha", "rho", "gamma_diff", "r", "lambda1", "mu1", "lambda2", "mu2"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        kind = self.kind
        if kind is ModelKind.HSV and (self.alpha != 0.5 or self.lambda1 != 0 or self.lambda2 != 0):
            raise ModelKindError("HSV requires alpha = 1/2 and no jumps")
        if kind is ModelKind.SVJ32 and self.alpha != -0.5:
            raise ModelKindError("SVJ32 requires alpha = -1/2")
        if kind is ModelKind.FSV_DJ and self.lambda1 != 0:
            raise ModelKindError("FSV_DJ has no upward jumps (lambda1 = 0)")
        if not -0.5 <= self.alpha <= 1.5:
            raise DomainError(f"alpha must lie in [-1/2, 3/2], got {self.alpha}")
        if not -1.0 <= self.rho <= 0.0:
            raise DomainError(f"rho must lie in [-1, 0], got {self.rho}")
        if self.gamma_diff <= 0:
            raise DomainError("gamma_diff must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise DomainError("jump intensities must be nonnegative")
        if self.lambda1 > 0 and not 0.0 < self.mu1 < 1.0:
            raise DomainError(f"mu1 must lie in (0, 1), got {self.mu1}")
        if self.lambda1 == 0 and not 0.0 <= self.mu1 < 1.0:
            raise DomainError(f"mu1 must lie in [0, 1), got {self.mu1}")
        if self.lambda2 > 0 and not self.mu2 < 0.0:
            raise DomainError(f"mu2 must be negative, got {self.mu2}")
        if self.lambda2 == 0 and self.mu2 > 0.0:
            raise DomainError(f"mu2 must be nonpositive, got {self.mu2}")

    @property
    def has_jumps(self) -> bool:
        return self.lambda1 > 0 or self.lambda2 > 0

    def conditions(self) -> ConditionReport:
        return check_conditions(self.cir, self.alpha)

    def with_v0(self, v0: float) -> "ModelParams":
        return replace(self, cir=replace(self.cir, v0=v0))

    def replace(self, **changes) -> "ModelParams":
        """Copy with changed fields; CIR fields (kappa, theta, sigma, v0) may be given directly."""
        cir_changes = {k: changes.pop(k) for k in ("kappa", "theta", "sigma", "v0") if k in changes}
        cir = replace(self.cir, **cir_changes) if cir_changes else self.cir
        return replace(self, cir=cir, **changes)

    def to_dict(self) -> dict:
        c = self.cir
        return {
            "kind": self.kind.value, "kappa": c.kappa, "theta": c.theta, "sigma": c.sigma,
            "alpha": self.alpha, "rho": self.rho, "r": self.r, "v0": c.v0,
            "lambda1": self.lambda1, "mu1": self.mu1, "lambda2": self.lambda2, "mu2": self.mu2,
            "gamma_diff": self.gamma_diff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        kind = ModelKind.parse(d["kind"])
        alpha = {ModelKind.HSV: 0.5, ModelKind.SVJ32: -0.5}.get(kind)
        alpha = float(d["alpha"]) if d.get("alpha") is not None else alpha
        if alpha is None:
            raise DomainError("alpha is required for FSV models")
        return cls(
            cir=CirParams(float(d["kappa"]), float(d["theta"]), float(d["sigma"]), float(d["v0"])),
            alpha=alpha,
            kind=kind,
            rho=float(d.get("rho", 0.0)),
            gamma_diff=float(d.get("gamma_diff", 1.0)),
            r=float(d.get("r", 0.0005)),
            lambda1=float(d.get("lambda1", 0.0)),
            mu1=float(d.get("mu1", 0.0)),
            lambda2=float(d.get("lambda2", 0.0)),
            mu2=float(d.get("mu2", 0.0)),
        )


@dataclass(frozen=True)
class JumpCompensation:
    mu_tilde1: float
    mu_tilde2: float
    h1: float


def _compensator(mu):
    # 1/(1-mu) - 1 = mu/(1-mu)
    return mu / (1.0 - mu)


def jump_offset(params: ModelParams) -> JumpCompensation:
    """Compensator means ``1/(1-mu) - 1`` and ``h1 = 2[l1 (mt1 - mu1) + l2 (mt2 - mu2)]``."""
    if params.lambda1 > 0 and not 0.0 < params.mu1 < 1.0:
        raise DomainError(f"mu1 must lie in (0, 1), got {params.mu1}")
    mt1 = _compensator(params.mu1)
    mt2 = _compensator(params.mu2)
    # mt - mu = mu^2/(1-mu), written so that mu -> 0 loses nothing
    h1 = 2.0 * (params.lambda1 * params.mu1 ** 2 / (1.0 - params.mu1)
                + params.lambda2 * params.mu2 ** 2 / (1.0 - params.mu2))
    return JumpCompensation(mu_tilde1=mt1, mu_tilde2=mt2, h1=h1)


def _require(params: ModelParams, kinds, name):
    if params.kind not in kinds:
        raise ModelKindError(f"{name} called with a {params.kind.value} parameter set")


def _as_state(v):
    v = np.asarray(v, float)
    if np.any(~(v > 0)):
        raise DomainError("variance state must be positive")
    return v


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def vix_squared_hsv(params: ModelParams, v, tau: float = TAU):
    """``100^2 (a v + theta (1 - a))`` with ``a = (1 - exp(-kappa tau)) / (kappa tau)``."""
    _require(params, (ModelKind.HSV,), "vix_squared_hsv")
    v = _as_state(v)
    kt = params.cir.kappa * tau
    a = -math.expm1(-kt) / kt
    return _out(_SCALE * (a * v + params.cir.theta * (1.0 - a)))


def _mean_moment(cir: CirParams, power: float, v, tau: float, n: int):
    """``(1/tau) int_0^tau E[V_u^power | V_0 = v] du`` by an n-point Gauss-Legendre rule."""
    if not -power < cir.feller_ratio:
        raise DomainError(
            f"E[V^{power}] is infinite: need {-power} < 2 kappa theta / sigma^2 = {cir.feller_ratio}")
    v = _as_state(v)
    nodes, weights = mapped_nodes(0.0, tau, n)
    # Gauss nodes are interior, so the u = 0 endpoint (where E[V_0^p] = v^p) is never evaluated
    g = negative_moment(cir, -power, nodes, v[..., None])
    return _out((g @ weights) / tau)


def vix_squared_svj32(params: ModelParams, v, n: int = 64, tau: float = TAU):
    """3/2 model: ``100^2 (h1 + (1/tau) int E[V_u^-1] du)``."""
    _require(params, (ModelKind.SVJ32,), "vix_squared_svj32")
    h1 = jump_offset(params).h1
    return _out(_SCALE * (h1 + np.asarray(_mean_moment(params.cir, -1.0, v, tau, n))))


def vix_squared_fsv(params: ModelParams, v, n: int = 64, tau: float = TAU):
    """Free-power model: ``100^2 (h1 + (1/tau) int E[V_u^(2 alpha)] du)``."""
    _require(params, (ModelKind.FSV_AJ, ModelKind.FSV_DJ), "vix_squared_fsv")
    h1 = jump_offset(params).h1
    return _out(_SCALE * (h1 + np.asarray(_mean_moment(params.cir, 2.0 * params.alpha, v, tau, n))))


def vix_squared(params: ModelParams, v, n: int = 64, tau: float = TAU):
    """Dispatch on the model kind."""
    if params.kind is ModelKind.HSV:
        return vix_squared_hsv(params, v, tau)
    if params.kind is ModelKind.SVJ32:
        return vix_squared_svj32(params, v, n, tau)
    return vix_squared_fsv(params, v, n, tau)


def vix_level(params: ModelParams, v, n: int = 64, tau: float = TAU):
    """Model VIX in index points."""
    return _out(np.sqrt(np.asarray(vix_squared(params, v, n, tau))))


@dataclass(eq=False)
class VixSquaredMap:
    """VIX^2 as a function of the variance state for one parameter set.

    Calling the object evaluates the exact map.  :meth:`fast` evaluates a
    Chebyshev interpolant of ``log(VIX^2/100^2 - h1)`` in ``log v`` over
    ``[v_lo, v_hi]``; the degree is doubled until interpolation error at the
    midpoints between nodes is below ``interp_tol``.  States outside the
    interval fall back to the exact map.
    """

    params: ModelParams
    n: int = 64
    tau: float = TAU
    interp_tol: float = 1e-12
    v_lo: float | None = None
    v_hi: float | None = None
    h1: float = field(init=False)
    _cheb: object = field(init=False, default=None, repr=False)

    def __post_init__(self):
        self.h1 = jump_offset(self.params).h1
        c = self.params.cir
        if self.v_lo is None:
            self.v_lo = min(c.theta, c.v0) * 1e-7
        if self.v_hi is None:
            self.v_hi = max(c.theta, c.v0) * 1e3
        if not 0 < self.v_lo < self.v_hi:
            raise DomainError("need 0 < v_lo < v_hi")

    @property
    def power(self) -> float:
        return 2.0 * self.params.alpha

    def __call__(self, v):
        return vix_squared(self.params, v, self.n, self.tau)

    def level(self, v):
        return _out(np.sqrt(np.asarray(self(v))))

    def _diffusion(self, v):
        if self.params.kind is ModelKind.HSV:
            return np.asarray(self(v)) / _SCALE
        return np.asarray(_mean_moment(self.params.cir, self.power, v, self.tau, self.n))

    def _build(self):
        domain = [math.log(self.v_lo), math.log(self.v_hi)]

        def f(s):
            return np.log(self._diffusion(np.exp(s)))

        deg = 64
        while True:
            cheb = chebyshev.Chebyshev.interpolate(f, deg, domain=domain)
            # check between the Chebyshev nodes, where the error of an interpolant peaks
            k = np.arange(2 * deg + 2)
            x = np.cos(np.pi * (k + 0.5) / (2 * deg + 2))
            s = domain[0] + 0.5 * (x + 1.0) * (domain[1] - domain[0])
            err = np.max(np.abs(cheb(s) - f(s)))
            if err < self.interp_tol or deg >= 1024:
                return cheb
            deg *= 2

    def fast(self, v):
        """Interpolated VIX^2 (index points squared)."""
        if self.params.kind is ModelKind.HSV:
            return self(v)
        v = _as_state(v)
        if self._cheb is None:
            self._cheb = self._build()
        inside = (v >= self.v_lo) & (v <= self.v_hi)
        out = np.empty(v.shape)
        if np.all(inside):
            out[...] = _SCALE * (self.h1 + np.exp(self._cheb(np.log(v))))
        else:
            out[inside] = _SCALE * (self.h1 + np.exp(self._cheb(np.log(v[inside]))))
            out[~inside] = self(v[~inside])
        return _out(out)

    def fast_level(self, v):
        return _out(np.sqrt(np.asarray(self.fast(v))))


@lru_cache(maxsize=256)
def vix_map(params: ModelParams, n: int = 64, tau: float = TAU) -> VixSquaredMap:
    """Shared :class:`VixSquaredMap` per parameter set (the interpolant is built once)."""
    return VixSquaredMap(params, n=n, tau=tau)
