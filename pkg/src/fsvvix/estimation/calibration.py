"""Risk-neutral calibration to the VIX index, VIX futures and VIX calls.

Two stages.  Stage 1 fits the VIX index and futures (relative absolute
errors) from ``n_restarts`` random starts.  Stage 2 fits call prices starting
from the best stage-1 optima.  Both stages run BFGS with central-difference
gradients in unconstrained coordinates; the Feller and non-explosion
conditions are kept by a log-barrier.  ``|e|`` is replaced by the
pseudo-Huber ``d (sqrt(1 + (e/d)^2) - 1)`` so the objective is smooth; the
reported losses are the exact means of ``|e|`` in percent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..cir import CirParams, check_conditions
from ..errors import DomainError, FsvError, InfeasibleStartError, NonConvergence
from ..gridpricing import GridConfig, GridPricer
from ..pricing import Contract, ContractKind, PriceQuote
from ..vixmap import ModelKind, ModelParams, vix_squared

__all__ = [
    "FREE_PARAMS",
    "DEFAULT_BOXES",
    "Instruments",
    "CalibSpec",
    "CalibrationResult",
    "calibrate",
    "vix_loss",
    "option_loss",
    "invert_vix_index",
    "synthetic_instruments",
]

SCHEMA_VERSION = 1

FREE_PARAMS = {
    ModelKind.HSV: ("kappa", "theta", "sigma", "v0"),
    ModelKind.SVJ32: ("kappa", "theta", "sigma", "v0", "lambda1", "mu1", "lambda2", "mu2"),
    ModelKind.FSV_AJ: ("kappa", "theta", "sigma", "alpha", "v0", "lambda1", "mu1", "lambda2", "mu2"),
    ModelKind.FSV_DJ: ("kappa", "theta", "sigma", "alpha", "v0", "lambda2", "mu2"),
}

DEFAULT_BOXES = {
    "kappa": (0.1, 10.0), "theta": (0.005, 1.0), "sigma": (0.05, 3.0), "alpha": (-0.5, 1.5),
    "lambda1": (0.0, 1.0), "mu1": (0.0, 0.5), "lambda2": (0.0, 1.0), "mu2": (-0.5, 0.0),
}
# the 3/2 model's CIR factor is the inverse variance, so its level and volatility live on another scale
SVJ32_BOXES = dict(DEFAULT_BOXES, theta=(5.0, 100.0), sigma=(1.0, 20.0))

_ALPHA_LO, _ALPHA_HI = -0.5, 1.5


@dataclass(frozen=True)
class Instruments:
    """Quotes observed at one valuation time.

    ``vix`` is the VIX index level (or None).  ``contracts[i]`` is quoted by
    ``quotes[i]``; futures and calls may be mixed.
    """

    vix: float | None
    contracts: tuple
    quotes: tuple

    def __post_init__(self):
        object.__setattr__(self, "contracts", tuple(self.contracts))
        object.__setattr__(self, "quotes", tuple(self.quotes))
        if len(self.contracts) != len(self.quotes):
            raise DomainError("contracts and quotes differ in length")
        if self.vix is not None and not self.vix > 0:
            raise DomainError("VIX index must be positive")
        for q in self.quotes:
            if not q.mid > 0:
                raise DomainError("quote mids must be positive")

    def _select(self, kind):
        idx = [i for i, c in enumerate(self.contracts) if c.kind is kind]
        return [self.contracts[i] for i in idx], np.array([self.quotes[i].mid for i in idx])

    @property
    def futures(self):
        return self._select(ContractKind.FUTURE)

    @property
    def calls(self):
        return self._select(ContractKind.CALL)


@dataclass(frozen=True)
class CalibSpec:
    kind: ModelKind
    n_restarts: int = 40
    seed: int = 0
    top_k: int = 3
    boxes: dict | None = None
    constraints: tuple = ("feller", "non_explosion")
    stage1_maxiter: int = 40
    stage2_maxiter: int = 300
    huber_delta: float = 1e-3
    barrier: float = 1e-8
    fd_step: float = 1e-6
    rate: float = 0.0005
    fixed: dict = field(default_factory=dict)
    require_convergence: bool = False
    grid: GridConfig = field(default_factory=GridConfig)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.n_restarts < 1:
            raise DomainError("n_restarts must be >= 1")
        if self.top_k < 1:
            raise DomainError("top_k must be >= 1")
        unknown = set(self.constraints) - {"feller", "non_explosion"}
        if unknown:
            raise DomainError(f"unknown constraints {sorted(unknown)}")

    @property
    def free(self) -> tuple:
        return tuple(n for n in FREE_PARAMS[self.kind] if n not in self.fixed)

    def box(self, name):
        boxes = dict(SVJ32_BOXES if self.kind is ModelKind.SVJ32 else DEFAULT_BOXES)
        boxes.update(self.boxes or {})
        return boxes[name]


@dataclass(frozen=True)
class CalibrationResult:
    model: ModelKind
    params: ModelParams
    stderrs: dict
    vix_loss_pct: float
    option_loss_pct: float
    constraint_report: dict
    seed: int
    n_restarts: int
    converged: bool
    stage1_losses: tuple = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model.value,
            "params": self.params.to_dict(),
            "stderrs": self.stderrs,
            "vix_loss_pct": self.vix_loss_pct,
            "option_loss_pct": self.option_loss_pct,
            "constraint_report": self.constraint_report,
            "seed": self.seed,
            "n_restarts": self.n_restarts,
            "converged": self.converged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---- coordinates -------------------------------------------------------------

def _to_z(name, value):
    if name == "alpha":
        u = (value - _ALPHA_LO) / (_ALPHA_HI - _ALPHA_LO)
        u = min(max(u, 1e-12), 1 - 1e-12)
        return math.log(u / (1.0 - u))
    if name == "mu1":
        return math.log(value / (1.0 - value))
    if name == "mu2":
        return math.log(-value)
    if name == "sigma":
        return math.log(abs(value))
    return math.log(value)


def _from_z(name, z):
    z = min(max(z, -50.0), 50.0)
    if name == "alpha":
        return _ALPHA_LO + (_ALPHA_HI - _ALPHA_LO) / (1.0 + math.exp(-z))
    if name == "mu1":
        return 1.0 / (1.0 + math.exp(-z))
    if name == "mu2":
        return -math.exp(z)
    return math.exp(z)


def _dvalue_dz(name, value):
    if name == "alpha":
        u = (value - _ALPHA_LO) / (_ALPHA_HI - _ALPHA_LO)
        return (_ALPHA_HI - _ALPHA_LO) * u * (1.0 - u)
    if name == "mu1":
        return value * (1.0 - value)
    return value


def _base_params(spec: CalibSpec) -> dict:
    base = {"kappa": 1.0, "theta": 0.04, "sigma": 0.2, "v0": 0.04,
            "alpha": {ModelKind.HSV: 0.5, ModelKind.SVJ32: -0.5}.get(spec.kind, 0.5),
            "lambda1": 0.0, "mu1": 0.0, "lambda2": 0.0, "mu2": 0.0}
    base.update(spec.fixed)
    return base


def _make_params(spec: CalibSpec, values: dict) -> ModelParams:
    v = _base_params(spec)
    v.update(values)
    return ModelParams(
        cir=CirParams(v["kappa"], v["theta"], v["sigma"], v["v0"]), alpha=v["alpha"], kind=spec.kind,
        r=spec.rate, lambda1=v["lambda1"], mu1=v["mu1"], lambda2=v["lambda2"], mu2=v["mu2"],
    )


def _params_from_z(spec, z) -> ModelParams:
    return _make_params(spec, {n: _from_z(n, zi) for n, zi in zip(spec.free, z)})


def _values(spec, params: ModelParams) -> dict:
    d = params.to_dict()
    return {n: d[n] for n in spec.free}


# ---- losses --------------------------------------------------------------------

def _model_vix(params):
    return math.sqrt(float(vix_squared(params, params.cir.v0)))


def _relative_errors(model, market):
    return (np.asarray(model, float) - market) / market


def _vix_errors(params, inst: Instruments, grid: GridConfig):
    errs = []
    if inst.vix is not None:
        errs.append(_relative_errors([_model_vix(params)], np.array([inst.vix])))
    contracts, mids = inst.futures
    if contracts:
        model = GridPricer(params, params.cir.v0, contracts, grid).prices()
        errs.append(_relative_errors(model, mids))
    if not errs:
        raise DomainError("VIX loss needs the VIX index or futures quotes")
    return np.concatenate(errs)


def _option_errors(params, inst: Instruments, grid: GridConfig):
    contracts, mids = inst.calls
    if not contracts:
        raise DomainError("option loss needs call quotes")
    model = GridPricer(params, params.cir.v0, contracts, grid).prices()
    return _relative_errors(model, mids)


def vix_loss(params: ModelParams, inst: Instruments, grid: GridConfig | None = None) -> float:
    """Mean absolute relative error over the VIX index and futures, in percent."""
    return 100.0 * float(np.mean(np.abs(_vix_errors(params, inst, grid or GridConfig()))))


def option_loss(params: ModelParams, inst: Instruments, grid: GridConfig | None = None) -> float:
    """Mean absolute relative error over the calls, in percent."""
    return 100.0 * float(np.mean(np.abs(_option_errors(params, inst, grid or GridConfig()))))


def _constraint_margins(spec, params):
    b = params.cir.feller_ratio
    out = []
    if "feller" in spec.constraints:
        out.append(b - 1.0)
    if "non_explosion" in spec.constraints:
        out.append(b - (1.0 - params.alpha))
    return out


_PENALTY = 1e10


class _Objective:
    def __init__(self, spec: CalibSpec, inst: Instruments, errors):
        self.spec = spec
        self.inst = inst
        self.errors = errors

    def __call__(self, z):
        spec = self.spec
        try:
            params = _params_from_z(spec, z)
        except FsvError:
            return _PENALTY
        margins = _constraint_margins(spec, params)
        if any(not m > 0 for m in margins):
            return _PENALTY
        try:
            e = self.errors(params, self.inst, spec.grid)
        except (FsvError, ArithmeticError, ValueError):
            return _PENALTY
        if not np.all(np.isfinite(e)):
            return _PENALTY
        d = spec.huber_delta
        smooth = float(np.mean(d * (np.sqrt(1.0 + (e / d) ** 2) - 1.0)))
        return smooth - spec.barrier * sum(math.log(m) for m in margins)

    def value_and_grad(self, z):
        z = np.asarray(z, float)
        f0 = self(z)
        g = np.empty(z.size)
        for i in range(z.size):
            h = self.spec.fd_step * max(1.0, abs(z[i]))
            up, dn = z.copy(), z.copy()
            up[i] += h
            dn[i] -= h
            fu, fd = self(up), self(dn)
            if fu >= _PENALTY or fd >= _PENALTY:
                # one-sided difference next to the feasibility boundary
                g[i] = (fu - f0) / h if fu < _PENALTY else (f0 - fd) / h if fd < _PENALTY else 0.0
            else:
                g[i] = (fu - fd) / (2.0 * h)
        return f0, g


def _bfgs(obj: _Objective, z0, maxiter):
    return optimize.minimize(obj.value_and_grad, z0, jac=True, method="BFGS",
                             options={"maxiter": maxiter, "gtol": 1e-9})


def _bfgs_restarted(obj: _Objective, z0, maxiter, max_restarts=8):
    """BFGS that restarts from a fresh Hessian when the line search stalls.

    A stalled line search ("precision loss") usually means the secant
    Hessian has gone stale, not that the point is a minimum; restarting
    continues while each pass still lowers the objective by a relative 1e-6.
    The iteration budget is shared across passes.
    """
    res = _bfgs(obj, z0, maxiter)
    used = res.nit
    for _ in range(max_restarts):
        if res.success or used >= maxiter:
            break
        nxt = _bfgs(obj, res.x, maxiter - used)
        used += max(nxt.nit, 1)
        improved = nxt.fun < res.fun - 1e-6 * abs(res.fun)
        if nxt.fun <= res.fun:
            res = nxt
        if not improved:
            break
    res.nit = used
    return res


# ---- starts --------------------------------------------------------------------

def invert_vix_index(params: ModelParams, vix: float) -> float:
    """State ``v`` with model VIX equal to ``vix`` (bisection in log state)."""
    target = vix * vix

    def g(s):
        return float(vix_squared(params, math.exp(s))) - target

    lo, hi = math.log(params.cir.theta) - 12.0, math.log(params.cir.theta) + 12.0
    glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        raise DomainError("VIX index level is not attainable under these parameters")
    return math.exp(optimize.brentq(g, lo, hi, xtol=1e-14, rtol=1e-15))


def _draw_start(spec: CalibSpec, inst: Instruments, rng, max_tries=2000):
    free = spec.free
    for _ in range(max_tries):
        vals = {}
        for name in free:
            if name == "v0":
                continue
            lo, hi = spec.box(name)
            if name in ("kappa", "theta", "sigma"):
                vals[name] = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            else:
                # open ends: jump means and intensities stay off the boundary
                eps = 1e-3 * (hi - lo)
                vals[name] = rng.uniform(lo + eps, hi - eps)
        try:
            params = _make_params(spec, dict(vals, v0=vals.get("theta", _base_params(spec)["theta"])))
        except FsvError:
            continue
        if any(not m > 0 for m in _constraint_margins(spec, params)):
            continue
        if "v0" in free:
            if inst.vix is not None:
                try:
                    vals["v0"] = invert_vix_index(params, inst.vix)
                except (FsvError, ValueError):
                    continue
            else:
                vals["v0"] = params.cir.theta * math.exp(rng.uniform(math.log(0.2), math.log(5.0)))
        return np.array([_to_z(n, vals[n]) for n in free])
    raise InfeasibleStartError(f"no feasible start in {max_tries} draws from the prior boxes")


def _project(spec: CalibSpec, params: ModelParams) -> ModelParams:
    """Raise theta just enough that every constraint holds strictly."""
    bounds = {"feller": 1.0, "non_explosion": 1.0 - params.alpha}
    need = max([bounds[c] for c in spec.constraints], default=-math.inf)
    need = need * (1.0 + 1e-9) if need > 0 else need
    if params.cir.feller_ratio > need:
        return params
    c = params.cir
    theta = need * c.sigma2 / (2.0 * c.kappa)
    return params.replace(theta=theta)


def _key(loss, z):
    return (loss, tuple(float(x) for x in z))


def calibrate(inst: Instruments, spec: CalibSpec) -> CalibrationResult:
    """Two-stage multi-start calibration; deterministic given ``spec.seed``."""
    free = spec.free
    n_calls = len(inst.calls[0])
    n_vix = len(inst.futures[0]) + (inst.vix is not None)
    if n_calls + n_vix < len(free):
        raise DomainError(f"{n_calls + n_vix} quotes cannot identify {len(free)} parameters")
    rng = np.random.default_rng(spec.seed)
    starts = [_draw_start(spec, inst, rng) for _ in range(spec.n_restarts)]

    stage1 = _Objective(spec, inst, _vix_errors)
    s1 = []
    for z0 in starts:
        res = _bfgs(stage1, z0, spec.stage1_maxiter) if n_vix else None
        z = res.x if res is not None else z0
        f = float(res.fun) if res is not None else 0.0
        s1.append(_key(f, z))
    s1.sort()

    if n_calls:
        stage2 = _Objective(spec, inst, _option_errors)
        # the index and futures leave a family of near-exact stage-1 fits, so
        # the stage-1 optima are ranked by their option objective before
        # the top_k of them seed stage 2
        ranked = sorted(_key(stage2(np.array(z1)), z1) for _, z1 in s1)
        finals = []
        for _, z1 in ranked[: spec.top_k]:
            res = _bfgs_restarted(stage2, np.array(z1), spec.stage2_maxiter)
            finals.append((_key(float(res.fun), res.x), res))
        finals.sort(key=lambda t: t[0])
        (_, zbest), best_res = finals[0]
    else:
        zbest = s1[0][1]
        best_res = _bfgs_restarted(stage1, np.array(zbest), spec.stage2_maxiter)
        zbest = tuple(best_res.x)
    zbest = np.array(zbest)

    params = _project(spec, _params_from_z(spec, zbest))
    values = _values(spec, params)
    hinv = np.asarray(best_res.hess_inv)
    jac = np.array([_dvalue_dz(n, values[n]) for n in free])
    cov = hinv * np.outer(jac, jac)
    stderrs = {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(free)}
    vl = vix_loss(params, inst, spec.grid) if n_vix else float("nan")
    ol = option_loss(params, inst, spec.grid) if n_calls else float("nan")
    report = check_conditions(params.cir, params.alpha)
    result = CalibrationResult(
        model=spec.kind, params=params, stderrs=stderrs, vix_loss_pct=vl, option_loss_pct=ol,
        constraint_report={"feller": report.feller, "non_explosion": report.non_explosion,
                           "feller_ratio": report.feller_ratio},
        seed=spec.seed, n_restarts=spec.n_restarts, converged=bool(best_res.success),
        stage1_losses=tuple(k[0] for k in s1),
    )
    if spec.require_convergence and not best_res.success:
        raise NonConvergence(f"calibration did not converge: {best_res.message}", best=result)
    return result


def synthetic_instruments(params: ModelParams, maturities_days, strikes, include_vix=True,
                          spread=0.0, min_mid=0.0, rate=None) -> Instruments:
    """Noise-free quotes from the adaptive pricer (for round-trip studies)."""
    from ..pricing import price_many

    rate = params.r if rate is None else rate
    contracts = []
    for d in maturities_days:
        t = d / 365.0
        contracts.append(Contract.future(t, rate=rate))
        contracts.extend(Contract.call(k, t, rate=rate) for k in strikes)
    prices = price_many(params, params.cir.v0, contracts)
    keep = [(c, p) for c, p in zip(contracts, prices)
            if c.kind is ContractKind.FUTURE or p >= min_mid]
    quotes = tuple(PriceQuote(max(p - spread / 2, 0.0), p + spread / 2) for _, p in keep)
    vix = _model_vix(params) if include_vix else None
    return Instruments(vix, tuple(c for c, _ in keep), quotes)
