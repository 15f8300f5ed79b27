"""VIX futures and call prices by quadrature against the CIR transition density.

Futures are undiscounted risk-neutral expectations ``E[VIX_T]``; calls are
``exp(-r (T - t)) E[(VIX_T - K)^+]``.  The variance-space integrand is
``payoff(VIX(y)) f(y)``, with a panel break at the state where ``VIX(y) = K``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .cir import CirLaw, transition_density
from .errors import ArbitrageError, DomainError, ModelKindError, NoConvergence
from .quadrature import adaptive_gauss_legendre
from .vixmap import TAU, ModelKind, ModelParams, VixSquaredMap, vix_map

__all__ = [
    "ContractKind",
    "Contract",
    "PriceQuote",
    "price_future",
    "price_call",
    "price_call_hsv_density",
    "price",
    "price_many",
    "black76_call",
    "black76_vega",
    "implied_vol",
    "error_metrics",
]

_SCALE = 100.0 ** 2


class ContractKind(str, enum.Enum):
    FUTURE = "future"
    CALL = "call"


@dataclass(frozen=True)
class Contract:
    kind: ContractKind
    maturity: float
    strike: float | None = None
    t: float = 0.0
    rate: float = 0.0005

    def __post_init__(self):
        object.__setattr__(self, "kind", ContractKind(self.kind))
        if not self.maturity > self.t >= 0:
            raise DomainError(f"need maturity > t >= 0, got t={self.t}, T={self.maturity}")
        if self.kind is ContractKind.CALL:
            if self.strike is None or not self.strike > 0:
                raise DomainError("calls need a positive strike")

    @property
    def tau(self) -> float:
        return self.maturity - self.t

    @classmethod
    def future(cls, maturity, t=0.0, rate=0.0005):
        return cls(ContractKind.FUTURE, maturity, None, t, rate)

    @classmethod
    def call(cls, strike, maturity, t=0.0, rate=0.0005):
        return cls(ContractKind.CALL, maturity, strike, t, rate)


@dataclass(frozen=True)
class PriceQuote:
    bid: float
    ask: float

    def __post_init__(self):
        if not 0 <= self.bid <= self.ask:
            raise DomainError(f"need 0 <= bid <= ask, got {self.bid}, {self.ask}")

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)


def _map_for(params: ModelParams, vmap):
    return vmap if vmap is not None else vix_map(params)


def _state_where_vix_equals(vmap: VixSquaredMap, law: CirLaw, level: float, lo: float, hi: float):
    """State ``y`` in ``(lo, hi)`` with ``VIX(y) = level``, or None if the level is not crossed.

    VIX is monotone in the state: increasing for alpha > 0, decreasing for alpha < 0.
    """
    target = level * level

    def g(s):
        return float(vmap.fast(math.exp(s))) - target

    a, b = math.log(max(lo, 1e-300)), math.log(hi)
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return math.exp(a)
    if ga * gb > 0:
        return None
    s = optimize.brentq(g, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return math.exp(s)


def _support(law: CirLaw, tail: float):
    lo = float(law.ppf(tail)) if law.q >= 0 else 0.0
    return lo, float(law.isf(tail))


def price_future(params: ModelParams, v_t: float, contract: Contract, vmap=None,
                 rtol: float = 1e-11, tail: float = 1e-13) -> float:
    """``E[VIX_T | V_t = v_t]`` (undiscounted)."""
    if contract.kind is not ContractKind.FUTURE:
        raise DomainError("price_future needs a future contract")
    vmap = _map_for(params, vmap)
    law = CirLaw(params.cir, contract.tau, start=v_t)
    return law.expect(lambda y: np.sqrt(vmap.fast(y)), rtol=rtol, tail=tail)


def price_call(params: ModelParams, v_t: float, contract: Contract, vmap=None,
               rtol: float = 1e-11, tail: float = 1e-13) -> float:
    """``exp(-r tau) E[(VIX_T - K)^+ | V_t = v_t]``."""
    if contract.kind is not ContractKind.CALL:
        raise DomainError("price_call needs a call contract")
    vmap = _map_for(params, vmap)
    law = CirLaw(params.cir, contract.tau, start=v_t)
    k = contract.strike
    lo, hi = _support(law, tail)
    kink = _state_where_vix_equals(vmap, law, k, max(lo, 1e-12 * hi), hi)
    breaks = () if kink is None else (kink,)
    value = law.expect(lambda y: np.maximum(np.sqrt(vmap.fast(y)) - k, 0.0),
                       breakpoints=breaks, rtol=rtol, tail=tail)
    return math.exp(-contract.rate * contract.tau) * value


def price_call_hsv_density(params: ModelParams, v_t: float, contract: Contract,
                           rtol: float = 1e-11, tail: float = 1e-13, tau_window: float = TAU) -> float:
    """Heston call priced against the density of VIX itself.

    With ``VIX^2 = 100^2 (a V + b)`` the index has density
    ``f_VIX(z) = 2 z / (a 100^2) f_V((z^2/100^2 - b)/a)`` on ``z >= 100 sqrt(b)``.
    Near the lower end the density behaves like ``(z - z_min)^q``; that panel is
    integrated after the substitution ``z - z_min = w1 s^(1/(q+1))``.
    """
    if params.kind is not ModelKind.HSV:
        raise ModelKindError("the VIX-density path exists for HSV only")
    if contract.kind is not ContractKind.CALL:
        raise DomainError("price_call_hsv_density needs a call contract")
    cir = params.cir
    kt = cir.kappa * tau_window
    a = -math.expm1(-kt) / kt
    b = cir.theta * (1.0 - a)
    law = CirLaw(cir, contract.tau, start=v_t)
    k = contract.strike
    z_min = 100.0 * math.sqrt(b)
    z_max = 100.0 * math.sqrt(a * float(law.isf(tail)) + b)

    def integrand_w(w):
        # w = z - z_min, so z^2 - z_min^2 = w (2 z_min + w) without cancellation
        z = z_min + w
        y = w * (2.0 * z_min + w) / (a * _SCALE)
        return np.maximum(z - k, 0.0) * 2.0 * z / (a * _SCALE) * transition_density(law, y)

    def integrand(z):
        return integrand_w(z - z_min)

    cuts = sorted({z_min, z_max} | ({k} if z_min < k < z_max else set()))
    z1 = cuts[1]
    total = 0.0
    for lo, hi in zip(cuts[1:-1], cuts[2:]):
        total += adaptive_gauss_legendre(integrand, lo, hi, rtol=rtol)[0]
    beta = 1.0 / (law.q + 1.0)
    w1 = z1 - z_min

    def g(s):
        s = np.maximum(s, 1e-300)
        return integrand_w(w1 * s ** beta) * w1 * beta * s ** (beta - 1.0)

    total += adaptive_gauss_legendre(g, 0.0, 1.0, rtol=rtol, atol=0.1 * rtol * abs(total))[0]
    return math.exp(-contract.rate * contract.tau) * total


def price(params: ModelParams, v_t: float, contract: Contract, vmap=None, **kw) -> float:
    if contract.kind is ContractKind.FUTURE:
        return price_future(params, v_t, contract, vmap, **kw)
    return price_call(params, v_t, contract, vmap, **kw)


def price_many(params: ModelParams, v_t: float, contracts, vmap=None, **kw) -> np.ndarray:
    """Price a list of contracts sharing one VIX^2 map."""
    vmap = _map_for(params, vmap)
    return np.array([price(params, v_t, c, vmap, **kw) for c in contracts])


def black76_call(forward, strike, tau, sigma, rate=0.0):
    """Black-76 call on a futures price."""
    forward, strike, sigma = (np.asarray(x, float) for x in (forward, strike, sigma))
    sd = sigma * math.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(forward / strike) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    out = math.exp(-rate * tau) * (forward * stats.norm.cdf(d1) - strike * stats.norm.cdf(d2))
    out = np.where(sd > 0, out, math.exp(-rate * tau) * np.maximum(forward - strike, 0.0))
    return float(out) if out.ndim == 0 else out


def black76_vega(forward, strike, tau, sigma, rate=0.0):
    sd = sigma * math.sqrt(tau)
    d1 = (math.log(forward / strike) + 0.5 * sd * sd) / sd
    return math.exp(-rate * tau) * forward * stats.norm.pdf(d1) * math.sqrt(tau)


def implied_vol(option_price: float, forward: float, strike: float, tau: float, rate: float = 0.0,
                tol: float = 1e-10, max_iter: int = 100) -> float:
    """Black-76 implied volatility by Newton's method safeguarded with bisection."""
    if not (tau > 0 and forward > 0 and strike > 0):
        raise DomainError("implied_vol needs positive forward, strike and tau")
    disc = math.exp(-rate * tau)
    lower = disc * max(forward - strike, 0.0)
    upper = disc * forward
    if not lower < option_price < upper:
        raise ArbitrageError(f"price {option_price} outside ({lower}, {upper})")
    lo, hi = 0.0, 1.0
    while black76_call(forward, strike, tau, hi, rate) < option_price:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise NoConvergence("implied volatility above 1e4")
    # Brenner-Subrahmanyam start, kept inside the bracket
    sigma = option_price / disc * math.sqrt(2.0 * math.pi / tau) / forward
    sigma = min(max(sigma, lo + 0.01 * (hi - lo)), hi)
    for _ in range(max_iter):
        diff = black76_call(forward, strike, tau, sigma, rate) - option_price
        if abs(diff) < tol:
            return sigma
        if diff > 0:
            hi = sigma
        else:
            lo = sigma
        vega = black76_vega(forward, strike, tau, sigma, rate) if sigma > 0 else 0.0
        step = sigma - diff / vega if vega > 0 else -1.0
        sigma = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, hi):
            return sigma
    raise NoConvergence(f"implied_vol did not converge in {max_iter} iterations")


def error_metrics(model_prices, quotes) -> dict:
    """ARPE and ARBAE in percent, MAE in index points."""
    model = np.asarray(model_prices, float)
    quotes = list(quotes)
    if model.shape != (len(quotes),):
        raise DomainError("model_prices and quotes must have equal length")
    if not quotes:
        raise DomainError("need at least one quote")
    bid = np.array([q.bid for q in quotes])
    ask = np.array([q.ask for q in quotes])
    mid = np.array([q.mid for q in quotes])
    if np.any(mid <= 0):
        raise DomainError("mid prices must be positive")
    outside = np.maximum(np.maximum(model - ask, 0.0), np.maximum(bid - model, 0.0))
    return {
        "arpe": 100.0 * float(np.mean(np.abs(mid - model) / mid)),
        "mae": float(np.mean(np.abs(model - mid))),
        "arbae": 100.0 * float(np.mean(outside / mid)),
    }
