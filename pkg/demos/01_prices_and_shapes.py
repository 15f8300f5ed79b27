"""Futures term structures and call strike profiles for the four model kinds.

Prices come from quadrature against the exact variance transition law; a
Monte Carlo run on exact terminal draws checks a few of them.
"""

import numpy as np

from fsvvix import Contract, price, vix_squared
from fsvvix.dataio import strike_profile, term_structure
from fsvvix.mc import price_mc
from reference import SETS

print("VIX today and the futures curve (v0 = theta)")
for name, p in SETS.items():
    rows = term_structure(p)
    vix = float(np.sqrt(vix_squared(p, p.cir.v0)))
    curve = " ".join(f"{r['future']:6.2f}" for r in rows[:-1])
    print(f"  {name:7s} VIX {vix:6.2f} | {curve} | stationary {rows[-1]['future']:.2f}")

print("\nEvery curve moves toward its stationary level; the start state sets the direction:")
p = SETS["fsv-aj"]
for scale in (0.5, 3.0):
    rows = term_structure(p, v0=scale * p.cir.theta)
    print(f"  v0 = {scale} theta: " + " ".join(f"{r['future']:.2f}" for r in rows))

print("\n28-day calls across strikes 10..70 are decreasing and convex:")
for name, q in SETS.items():
    c = np.array([r["call"] for r in strike_profile(q)])
    print(f"  {name:7s} C(10) {c[0]:6.3f}  C(40) {c[18]:6.4f}  C(70) {c[-1]:.2e}  "
          f"max dC {np.diff(c).max():.1e}  min d2C {np.diff(c, 2).min():.1e}")

print("\nQuadrature against Monte Carlo (400k exact draws), FSV-AJ, 28 days:")
p = SETS["fsv-aj"]
tau = 28 / 365
contracts = [Contract.future(tau, rate=p.r)] + [Contract.call(k, tau, rate=p.r) for k in (15.0, 20.0, 25.0)]
mc, se = price_mc(p, p.cir.v0, contracts, n_paths=400_000, seed=1)
for c, m, s in zip(contracts, mc, se):
    a = price(p, p.cir.v0, c)
    label = "future" if c.strike is None else f"call K={c.strike:.0f}"
    print(f"  {label:10s} quadrature {a:8.5f}   MC {m:8.5f} +- {s:.5f}   z {(m - a) / s:+.2f}")
