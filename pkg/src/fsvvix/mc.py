"""Monte Carlo simulation of the jump-diffusion and estimators used as oracles.

Dynamics under the pricing measure::

    dS/S = (r - l1 mt1 - l2 mt2) dt + V^alpha dW + (e^J1 - 1) dN1 + (e^J2 - 1) dN2
    dV   = kappa (theta - V) dt + sigma sqrt(V) dZ,     d<W, Z> = rho dt

``J1 ~ Exp(mean mu1)`` and ``-J2 ~ Exp(mean |mu2|)`` are log jump sizes.  The log
price is accumulated in its integrated form: the drift and ``V^alpha dW`` use
the left end of every step, which makes the discrete discounted price an exact
martingale given the variance path.  Work is done in blocks of paths, each with
its own child seed, so memory stays bounded for 10^6 paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cir import CirLaw, CirParams, TransformArgs
from .errors import DomainError
from .vixmap import TAU, ModelParams, jump_offset, vix_map

__all__ = [
    "SimConfig",
    "PathBundle",
    "simulate",
    "MartingaleResult",
    "martingale_check",
    "VixEstimate",
    "vix_from_log_contract",
    "MomentEstimate",
    "mean_power_integral_mc",
    "transform_mc",
    "price_mc",
    "simulate_index_closes",
    "summary_json",
]

SCHEMES = ("full_truncation_euler", "exact_terminal")
_NEG_POWER_FLOOR = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """``n_steps`` is steps per year; a run over ``horizon`` uses ``ceil(horizon * n_steps)`` steps.

    ``exact_terminal`` draws the variance exactly (noncentral chi-square) on the
    time grid; ``full_truncation_euler`` uses ``max(V, 0)`` in drift and diffusion.
    """

    n_paths: int
    n_steps: int
    horizon: float
    seed: int = 0
    scheme: str = "full_truncation_euler"
    antithetic: bool = False
    block_size: int = 50_000

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if self.n_steps < 16:
            raise DomainError("n_steps must be >= 16 per year")
        if not self.horizon > 0:
            raise DomainError("horizon must be positive")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even n_paths")
        if self.block_size < 2:
            raise DomainError("block_size must be >= 2")

    @property
    def steps(self) -> int:
        return max(1, math.ceil(self.horizon * self.n_steps - 1e-9))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass
class PathBundle:
    """Simulated paths.

    ``log_return`` is ``log(S_T / S_0)``; ``int_var`` is the left-point sum
    of ``V^(2 alpha) dt``; ``ito`` is the left-point ``sum V^alpha dW``.
    Jump marks are flat arrays of (path index, time, sign, log size).
    """

    times: np.ndarray
    variance: np.ndarray | None
    log_return: np.ndarray
    int_var: np.ndarray
    int_var_trapezoid: np.ndarray
    ito: np.ndarray
    jump_count: np.ndarray  # shape (n_paths, 2): up, down
    jump_sum: np.ndarray  # shape (n_paths, 2)
    mark_path: np.ndarray = field(default_factory=lambda: np.empty(0, int))
    mark_time: np.ndarray = field(default_factory=lambda: np.empty(0))
    mark_sign: np.ndarray = field(default_factory=lambda: np.empty(0, int))
    mark_size: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def terminal_variance(self):
        return None if self.variance is None else self.variance[:, -1]


def _power(v, p):
    if p == 0:
        return np.ones_like(v)
    if p < 0:
        return np.maximum(v, _NEG_POWER_FLOOR) ** p
    return np.maximum(v, 0.0) ** p


def _jumps(rng, n, dt, lam, mean, record, step_time, sign):
    """Per-path jump count and summed log size over one step."""
    if lam == 0:
        return np.zeros(n, int), np.zeros(n), None
    counts = rng.poisson(lam * dt, n)
    total = int(counts.sum())
    sums = np.zeros(n)
    marks = None
    if total:
        sizes = rng.exponential(abs(mean), total) * sign
        owner = np.repeat(np.arange(n), counts)
        np.add.at(sums, owner, sizes)
        if record:
            times = step_time + dt * rng.random(total)
            marks = (owner, times, np.full(total, sign), sizes)
    return counts, sums, marks


def _block(params: ModelParams, cfg: SimConfig, n: int, v0: float, rng, record: bool):
    """Simulate ``n`` paths (``n`` even when antithetic); returns a PathBundle."""
    cir = params.cir
    k, th, sg = cir.kappa, cir.theta, cir.sigma
    a, rho = params.alpha, params.rho
    comp = jump_offset(params)
    drift = params.r - params.lambda1 * comp.mu_tilde1 - params.lambda2 * comp.mu_tilde2
    steps, dt = cfg.steps, cfg.dt
    sq = math.sqrt(dt)
    rho_perp = math.sqrt(1.0 - rho * rho)
    half = n // 2 if cfg.antithetic else n

    def normals():
        z = rng.standard_normal(half)
        return np.concatenate([z, -z]) if cfg.antithetic else z

    v = np.full(n, float(v0))
    path = np.empty((n, steps + 1)) if record else None
    if record:
        path[:, 0] = v
    log_ret = np.zeros(n)
    int_var = np.zeros(n)
    int_trap = np.zeros(n)
    ito = np.zeros(n)
    counts = np.zeros((n, 2), int)
    sums = np.zeros((n, 2))
    marks = []
    law = CirLaw(cir, dt) if cfg.scheme == "exact_terminal" else None
    for i in range(steps):
        va = _power(v, a)
        va2 = va * va
        z_perp = normals()
        if law is None:
            z = normals()
            vp = np.maximum(v, 0.0)
            v_new = v + k * (th - vp) * dt + sg * np.sqrt(vp) * sq * z
            dz_term = va * sq * z
        else:
            # exact transition; the sqrt(V) dZ integral is recovered from the
            # variance equation with a trapezoidal int V ds
            nc = 2.0 * law.c * math.exp(-k * dt) * v
            v_new = rng.noncentral_chisquare(law.df, nc) / (2.0 * law.c)
            root_int = (v_new - v - k * th * dt + k * 0.5 * (v + v_new) * dt) / sg
            dz_term = _power(v, a - 0.5) * root_int
        dw = rho * dz_term + rho_perp * va * sq * z_perp
        t_i = i * dt
        c1, s1, m1 = _jumps(rng, n, dt, params.lambda1, params.mu1, record, t_i, 1)
        c2, s2, m2 = _jumps(rng, n, dt, params.lambda2, params.mu2, record, t_i, -1)
        counts[:, 0] += c1
        counts[:, 1] += c2
        sums[:, 0] += s1
        sums[:, 1] += s2
        if record:
            marks.extend(m for m in (m1, m2) if m is not None)
        log_ret += (drift - 0.5 * va2) * dt + dw + s1 + s2
        int_var += va2 * dt
        int_trap += 0.5 * (va2 + _power(v_new, 2 * a)) * dt
        ito += dw
        v = v_new
        if record:
            path[:, i + 1] = v
    bundle = PathBundle(
        times=np.linspace(0.0, cfg.horizon, steps + 1), variance=path, log_return=log_ret,
        int_var=int_var, int_var_trapezoid=int_trap, ito=ito, jump_count=counts, jump_sum=sums,
    )
    if marks:
        bundle.mark_path = np.concatenate([m[0] for m in marks])
        bundle.mark_time = np.concatenate([m[1] for m in marks])
        bundle.mark_sign = np.concatenate([m[2] for m in marks])
        bundle.mark_size = np.concatenate([m[3] for m in marks])
    return bundle


def _block_sizes(cfg: SimConfig):
    size = cfg.block_size - (cfg.block_size % 2 if cfg.antithetic else 0)
    full, rest = divmod(cfg.n_paths, size)
    return [size] * full + ([rest] if rest else [])


def _streams(cfg: SimConfig, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(count)]


def simulate(params: ModelParams, config: SimConfig, rng=None, v0: float | None = None,
             record_paths: bool = True) -> PathBundle:
    """Simulate ``config.n_paths`` paths in one block (keep ``n_paths`` moderate when recording)."""
    if not -1.0 <= params.rho <= 0.0:
        raise DomainError("rho must lie in [-1, 0]")
    rng = np.random.default_rng(config.seed if rng is None else rng)
    v0 = params.cir.v0 if v0 is None else v0
    return _block(params, config, config.n_paths, v0, rng, record_paths)


def _stream_blocks(params, cfg, v0, reducer):
    """Run all blocks without recording; ``reducer(bundle)`` returns per-path (or per-pair) samples."""
    sizes = _block_sizes(cfg)
    out = []
    for n, rng in zip(sizes, _streams(cfg, len(sizes))):
        out.append(reducer(_block(params, cfg, n, v0, rng, False)))
    return np.concatenate(out, axis=0)


def _mean_se(x):
    x = np.asarray(x, float)
    return float(x.mean(axis=0)), float(x.std(axis=0, ddof=1) / math.sqrt(x.shape[0]))


def _reduce(bundle_values, antithetic):
    if not antithetic:
        return bundle_values
    h = bundle_values.shape[0] // 2
    return 0.5 * (bundle_values[:h] + bundle_values[h:])


@dataclass(frozen=True)
class MartingaleResult:
    ratio: float
    stderr: float
    n_paths: int

    @property
    def passed(self) -> bool:
        return abs(self.ratio - 1.0) < 4.0 * self.stderr


def martingale_check(params: ModelParams, config: SimConfig) -> MartingaleResult:
    """Sample mean of ``exp(-rT) S_T / S_0`` with its standard error."""
    r, t = params.r, config.horizon

    def reducer(b):
        return _reduce(np.exp(b.log_return - r * t), config.antithetic)

    x = _stream_blocks(params, config, params.cir.v0, reducer)
    m, se = _mean_se(x)
    return MartingaleResult(ratio=m, stderr=se, n_paths=config.n_paths)


@dataclass(frozen=True)
class VixEstimate:
    """MC estimate of ``VIX^2`` (index points squared) from the log contract."""

    vix2: float
    vix2_se: float
    jump_part: float
    jump_part_se: float
    h1: float
    n_paths: int
    control_variate: bool

    @property
    def vix(self) -> float:
        return math.sqrt(self.vix2)

    @property
    def vix_se(self) -> float:
        return self.vix2_se / (2.0 * self.vix)


def vix_from_log_contract(params: ModelParams, v0: float, config: SimConfig, tau: float = TAU,
                          control_variate: bool = False) -> VixEstimate:
    """``-(2/tau) E[log(S_tau / (S_0 e^(r tau)))] * 100^2`` over ``tau = 30/365``.

    ``control_variate`` subtracts the zero-mean stochastic integral
    ``sum V^alpha dW`` from every sample, which removes most of the variance.
    ``jump_part`` estimates ``-(2/tau) E[sum J] + 2 (l1 mt1 + l2 mt2)``, whose
    expectation is the jump offset ``h1``.
    """
    cfg = SimConfig(config.n_paths, config.n_steps, tau, config.seed, config.scheme,
                    config.antithetic, config.block_size)
    comp = jump_offset(params)
    jump_comp = 2.0 * (params.lambda1 * comp.mu_tilde1 + params.lambda2 * comp.mu_tilde2)

    def reducer(b):
        lr = b.log_return - params.r * tau
        if control_variate:
            lr = lr - b.ito
        sample = -(2.0 / tau) * lr * 1e4
        jumps = -(2.0 / tau) * b.jump_sum.sum(axis=1) + jump_comp
        return _reduce(np.column_stack([sample, jumps]), config.antithetic)

    x = _stream_blocks(params, cfg, v0, reducer)
    m, se = x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    return VixEstimate(vix2=float(m[0]), vix2_se=float(se[0]), jump_part=float(m[1]),
                       jump_part_se=float(se[1]), h1=comp.h1, n_paths=config.n_paths,
                       control_variate=control_variate)


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    n_paths: int


def _exact_cir_paths(cir: CirParams, v0, horizon, steps, n, rng):
    law = CirLaw(cir, horizon / steps)
    v = np.full(n, float(v0))
    yield v
    decay = math.exp(-cir.kappa * law.horizon)
    for _ in range(steps):
        v = rng.noncentral_chisquare(law.df, 2.0 * law.c * decay * v) / (2.0 * law.c)
        yield v


def mean_power_integral_mc(cir: CirParams, power: float, v0: float, horizon: float = TAU,
                           n_paths: int = 100_000, steps: int = 64, seed: int = 0) -> MomentEstimate:
    """``(1/horizon) E[int_0^horizon V^power ds]`` on exactly sampled CIR paths (trapezoid in time)."""
    rng = np.random.default_rng(seed)
    acc = np.zeros(n_paths)
    prev = None
    dt = horizon / steps
    for v in _exact_cir_paths(cir, v0, horizon, steps, n_paths, rng):
        cur = _power(v, power)
        if prev is not None:
            acc += 0.5 * (prev + cur) * dt
        prev = cur
    m, se = _mean_se(acc / horizon)
    return MomentEstimate(m, se, n_paths)


def transform_mc(cir: CirParams, args: TransformArgs, t: float, v0: float | None = None,
                 n_paths: int = 100_000, steps: int = 200, seed: int = 0) -> MomentEstimate:
    """MC estimate of ``E[X_t^-eta exp(-gamma X_t - eps int X - nu int 1/X)]`` on exact CIR paths."""
    rng = np.random.default_rng(seed)
    v0 = cir.v0 if v0 is None else v0
    dt = t / steps
    int_x = np.zeros(n_paths)
    int_inv = np.zeros(n_paths)
    prev = None
    for v in _exact_cir_paths(cir, v0, t, steps, n_paths, rng):
        if prev is not None:
            int_x += 0.5 * (prev + v) * dt
            if args.nu:
                int_inv += 0.5 * (1.0 / prev + 1.0 / v) * dt
        prev = v
    x_t = prev
    sample = x_t ** (-args.eta) * np.exp(-args.gamma_t * x_t - args.epsilon * int_x - args.nu * int_inv)
    m, se = _mean_se(sample)
    return MomentEstimate(m, se, n_paths)


def price_mc(params: ModelParams, v_t: float, contracts, n_paths: int = 1_000_000, seed: int = 0):
    """Futures and call prices from exact terminal variance draws.

    Returns arrays ``(price, stderr)``; contracts sharing a maturity share draws.
    """
    from .pricing import ContractKind

    vmap = vix_map(params)
    by_tau = {}
    for i, c in enumerate(contracts):
        by_tau.setdefault(round(c.tau, 14), []).append(i)
    prices = np.empty(len(contracts))
    errs = np.empty(len(contracts))
    seeds = np.random.SeedSequence(seed).spawn(len(by_tau))
    for (tau, idx), ss in zip(sorted(by_tau.items()), seeds):
        law = CirLaw(params.cir, tau, start=v_t)
        y = law.sample(np.random.default_rng(ss), n_paths)
        vix = np.sqrt(vmap.fast(y))
        for i in idx:
            c = contracts[i]
            if c.kind is ContractKind.FUTURE:
                sample = vix
            else:
                sample = math.exp(-c.rate * c.tau) * np.maximum(vix - c.strike, 0.0)
            prices[i], errs[i] = _mean_se(sample)
    return prices, errs


def simulate_index_closes(cir: CirParams, alpha: float, gamma: float = 1.0, n_obs: int = 10_000,
                          dt: float = 1.0 / 252.0, r: float = 0.0, s0: float = 1000.0, seed: int = 0):
    """Closes from the discretised index ``S_{t+1} = S_t (1 + r dt + gamma V_t^alpha sqrt(dt) Z)``.

    ``V`` is sampled exactly on the observation grid starting from ``cir.v0``;
    return and variance shocks are independent.
    """
    rng = np.random.default_rng(seed)
    v = np.fromiter((x[0] for x in _exact_cir_paths(cir, cir.v0, n_obs * dt, n_obs, 1, rng)), float, n_obs + 1)
    z = rng.standard_normal(n_obs)
    growth = 1.0 + r * dt + gamma * _power(v[:-1], alpha) * math.sqrt(dt) * z
    if np.any(growth <= 0):
        raise DomainError("simulated close became nonpositive; reduce dt or volatility")
    return s0 * np.concatenate([[1.0], np.cumprod(growth)])


def summary_json(result, config: SimConfig | None = None, **extra) -> str:
    """JSON document with an estimate, its standard error and the config echo."""
    doc = {"result": asdict(result) if hasattr(result, "__dataclass_fields__") else result}
    if config is not None:
        doc["config"] = asdict(config)
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True, default=float)
