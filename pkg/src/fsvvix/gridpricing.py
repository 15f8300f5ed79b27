"""Fixed-grid pricer for repeated evaluation inside calibration loops.

The adaptive pricer in :mod:`fsvvix.pricing` is accurate but spends most of
its time choosing panels.  Here every maturity gets a fixed composite
Gauss-Legendre grid whose panel edges sit at multiples of the transition
standard deviation around the mean; the first panel is integrated in
``s = (y/y1)^(q+1)`` so the ``y^q`` behaviour at zero is absorbed.  VIX^2 is
evaluated through one Chebyshev interpolant in ``log y`` spanning all nodes.
A call adds one panel from the state where ``VIX = K`` to the next grid edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev
from scipy import stats

from .cir import CirLaw, transition_density
from .pricing import ContractKind
from .quadrature import gauss_legendre_nodes
from .vixmap import TAU, ModelKind, ModelParams, jump_offset, vix_squared

__all__ = ["GridConfig", "GridPricer", "grid_prices"]

_SCALE = 100.0 ** 2


@dataclass(frozen=True)
class GridConfig:
    order: int = 24
    sd_edges: tuple = (-3.0, -2.0, -1.25, -0.5, 0.0, 0.5, 1.25, 2.0, 3.0, 4.5, 6.5, 9.0, 13.0)
    tail: float = 1e-13
    cheb_degree: int = 64
    time_nodes: int = 64


class _MapInterp:
    """Chebyshev interpolant of ``log(VIX^2/100^2 - h1)`` on ``[lo, hi]`` in log state."""

    def __init__(self, params: ModelParams, lo: float, hi: float, cfg: GridConfig):
        self.params = params
        self.h1 = jump_offset(params).h1
        self.affine = params.kind is ModelKind.HSV
        if self.affine:
            return
        self.domain = (math.log(lo), math.log(hi))
        x = np.cos(np.pi * (np.arange(cfg.cheb_degree + 1) + 0.5) / (cfg.cheb_degree + 1))
        s = self.domain[0] + 0.5 * (x + 1.0) * (self.domain[1] - self.domain[0])
        vals = np.log(np.asarray(vix_squared(params, np.exp(s), cfg.time_nodes)) / _SCALE - self.h1)
        self.coef = chebyshev.chebfit(x, vals, cfg.cheb_degree)
        self.dcoef = chebyshev.chebder(self.coef)
        self.time_nodes = cfg.time_nodes

    def solve(self, target, lo, hi, start):
        """States with ``VIX^2 = target`` inside brackets ``[lo, hi]`` (vectorised).

        Newton in log state from ``start``, falling back to bisection whenever a
        step leaves the bracket.
        """
        target, lo, hi = (np.asarray(x, float) for x in (target, lo, hi))
        if self.affine:
            kt = self.params.cir.kappa * TAU
            a = -math.expm1(-kt) / kt
            return np.clip((target / _SCALE - self.params.cir.theta * (1.0 - a)) / a, lo, hi)
        sign = np.sign(np.log(self(hi)) - np.log(self(lo)))
        a_, b_ = self.domain
        slo, shi = np.log(lo), np.log(hi)
        s = np.clip(np.log(start), slo, shi)
        goal = np.log(target / _SCALE - self.h1)
        for _ in range(60):
            x = (2.0 * s - (a_ + b_)) / (b_ - a_)
            g = chebyshev.chebval(x, self.coef) - goal
            dg = chebyshev.chebval(x, self.dcoef) * 2.0 / (b_ - a_)
            # g increases in s where sign > 0
            up = g * sign < 0
            slo = np.where(up, s, slo)
            shi = np.where(up, shi, s)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = s - g / dg
            ok = (step >= slo) & (step <= shi) & np.isfinite(step)
            new = np.where(ok, step, 0.5 * (slo + shi))
            done = np.all((np.abs(new - s) < 1e-11) | (np.abs(g) < 1e-14))
            s = new
            if done:
                break
        return np.exp(s)

    def __call__(self, y):
        y = np.asarray(y, float)
        if self.affine:
            return np.asarray(vix_squared(self.params, y))
        a, b = self.domain
        s = np.log(y)
        inside = (s >= a - 1e-12) & (s <= b + 1e-12)
        out = np.empty(y.shape)
        x = (2.0 * s[inside] - (a + b)) / (b - a)
        out[inside] = _SCALE * (self.h1 + np.exp(chebyshev.chebval(x, self.coef)))
        if not np.all(inside):
            out[~inside] = vix_squared(self.params, y[~inside], self.time_nodes)
        return out


def _edges(law: CirLaw, cfg: GridConfig):
    m = law.mean
    sd = math.sqrt(law.variance)
    hi = float(stats.ncx2.isf(cfg.tail, law.df, law.nc)) / (2.0 * law.c)
    inner = [m + k * sd for k in cfg.sd_edges]
    inner = [e for e in inner if 0.0 < e < hi]
    if not inner:
        inner = [0.5 * hi]
    return np.array([0.0] + inner + [hi])


def _panel_nodes(a, b, order):
    x, w = gauss_legendre_nodes(order)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


_S_SPLITS = (0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0)


def _first_panel_nodes(y1, beta, order):
    # y = y1 s^beta on s in (0, 1); dy = y1 beta s^(beta-1) ds.  Geometric
    # sub-panels in s resolve payoffs that blow up logarithmically at y = 0.
    parts = [_panel_nodes(a, b, order) for a, b in zip(_S_SPLITS[:-1], _S_SPLITS[1:])]
    s = np.concatenate([p[0] for p in parts])
    w = np.concatenate([p[1] for p in parts])
    return y1 * s ** beta, w * y1 * beta * s ** (beta - 1.0)


class GridPricer:
    """Prices a fixed list of contracts for one parameter set and start state."""

    def __init__(self, params: ModelParams, v_t: float, contracts, cfg: GridConfig | None = None):
        self.cfg = cfg or GridConfig()
        self.params = params
        self.v_t = float(v_t)
        self.contracts = list(contracts)
        self._groups = {}
        for i, c in enumerate(self.contracts):
            self._groups.setdefault(c.tau, []).append(i)

    def prices(self) -> np.ndarray:
        cfg = self.cfg
        beta_cache = {}
        grids = []
        for tau in sorted(self._groups):
            law = CirLaw(self.params.cir, tau, start=self.v_t)
            edges = _edges(law, cfg)
            beta = 1.0 / (law.q + 1.0)
            beta_cache[tau] = beta
            ys, ws, pid = [], [], []
            y0, w0 = _first_panel_nodes(edges[1], beta, cfg.order)
            ys.append(y0)
            ws.append(w0)
            pid.append(np.zeros(y0.size, int))
            for j, (a, b) in enumerate(zip(edges[1:-1], edges[2:]), start=1):
                y, w = _panel_nodes(a, b, cfg.order)
                ys.append(y)
                ws.append(w)
                pid.append(np.full(cfg.order, j))
            grids.append((tau, law, edges, np.concatenate(ys), np.concatenate(ws), np.concatenate(pid)))
        y_all = np.concatenate([g[3] for g in grids])
        y_all = y_all[y_all > 0]
        vmap = _MapInterp(self.params, y_all.min(), y_all.max(), cfg)
        out = np.empty(len(self.contracts))
        for tau, law, edges, y, w, pid in grids:
            y = np.maximum(y, 1e-300)
            dens = transition_density(law, y)
            vix = np.sqrt(vmap(y))
            fw = dens * w
            idx = self._groups[tau]
            calls = [i for i in idx if self.contracts[i].kind is ContractKind.CALL]
            for i in idx:
                if self.contracts[i].kind is ContractKind.FUTURE:
                    out[i] = float(vix @ fw)
            if calls:
                strikes = np.array([self.contracts[i].strike for i in calls])
                vals = self._calls(law, edges, y, vix, fw, pid, strikes, vmap, beta_cache[tau])
                for i, v in zip(calls, vals):
                    c = self.contracts[i]
                    out[i] = math.exp(-c.rate * c.tau) * v
        return out

    def _calls(self, law, edges, y, vix, fw, pid, strikes, vmap, beta):
        order = self.cfg.order
        increasing = self.params.kind is ModelKind.HSV or self.params.alpha > 0
        # VIX at the panel edges decides which panels are fully in the money
        ye = edges.copy()
        ye[0] = min(float(y.min()), edges[1] * 1e-12)
        vix_e = np.sqrt(vmap(ye))
        lo_e, hi_e = (vix_e[:-1], vix_e[1:]) if increasing else (vix_e[1:], vix_e[:-1])
        # bracket and starting state for every strike from the monotone node values
        order_y = np.argsort(y)
        ys, vs = y[order_y], vix[order_y]
        kink_panel = np.full(strikes.size, -1)
        for n, k in enumerate(strikes):
            kinks = np.nonzero((lo_e < k) & (k < hi_e))[0]
            if kinks.size:
                kink_panel[n] = kinks[0]
        has = kink_panel >= 0
        yk = np.empty(strikes.size)
        if has.any():
            j = kink_panel[has]
            ks = strikes[has]
            xs, fs = (vs, ys) if increasing else (vs[::-1], ys[::-1])
            start = np.exp(np.interp(ks, xs, np.log(fs)))
            yk[has] = vmap.solve(ks * ks, ye[j], edges[j + 1], start)
        # fully in-the-money panels: sum over panel of (VIX - K) f w = S_vix - K S_w
        n_panels = edges.size - 1
        s_vix = np.bincount(pid, weights=vix * fw, minlength=n_panels)
        s_w = np.bincount(pid, weights=fw, minlength=n_panels)
        full = lo_e[None, :] >= strikes[:, None]
        out = np.where(full, s_vix[None, :] - strikes[:, None] * s_w[None, :], 0.0).sum(axis=1)
        if has.any():
            # partial panel from the kink to the panel edge, all strikes at once
            rows = []
            for n in np.nonzero(has)[0]:
                j = kink_panel[n]
                if increasing:
                    rows.append(_panel_nodes(yk[n], edges[j + 1], order))
                elif j == 0:
                    rows.append(_first_panel_nodes(yk[n], beta, order))
                else:
                    rows.append(_panel_nodes(edges[j], yk[n], order))
            sizes = [r[0].size for r in rows]
            yy = np.maximum(np.concatenate([r[0] for r in rows]), 1e-300)
            ww = np.concatenate([r[1] for r in rows])
            kk = np.repeat(strikes[has], sizes)
            contrib = np.maximum(np.sqrt(vmap(yy)) - kk, 0.0) * transition_density(law, yy) * ww
            out[has] += np.add.reduceat(contrib, np.cumsum([0] + sizes[:-1]))
        return out


def grid_prices(params: ModelParams, v_t: float, contracts, cfg: GridConfig | None = None) -> np.ndarray:
    return GridPricer(params, v_t, contracts, cfg).prices()

