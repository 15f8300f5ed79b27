"""Calibration round trip on noise-free quotes.

Quotes are generated from the FSV-AJ set; the two-stage fit first matches the
index and futures, then the calls.  The diffusion block comes back to many
digits.  The jump block does not: the index depends on the four jump
parameters only through one offset, so many jump vectors price every quote
identically.  Pass the restart count as the first argument (40 for the full run,
about ten minutes on one core).
"""

import sys
import time

import numpy as np

from fsvvix.estimation.calibration import CalibSpec, calibrate, synthetic_instruments
from fsvvix.vixmap import ModelKind, jump_offset
from reference import SETS

restarts = int(sys.argv[1]) if len(sys.argv) > 1 else 8
truth = SETS["fsv-aj"]
inst = synthetic_instruments(truth, (14, 28, 49, 77, 112), np.arange(10.0, 31.0, 1.0), min_mid=2.0)
print(f"{len(inst.contracts)} quotes ({len(inst.calls[0])} calls with mid >= 2), VIX {inst.vix:.3f}")

t0 = time.perf_counter()
res = calibrate(inst, CalibSpec(ModelKind.FSV_AJ, n_restarts=restarts, seed=0))
print(f"{restarts} restarts in {time.perf_counter() - t0:.0f} s: VIXLoss {res.vix_loss_pct:.2e}%  "
      f"OptionLoss {res.option_loss_pct:.2e}%")

fit, ref = res.params.to_dict(), truth.to_dict()
print(f"\n{'param':8s} {'true':>9s} {'fitted':>9s} {'rel err':>9s}")
for k in ("kappa", "theta", "sigma", "alpha", "v0", "lambda1", "mu1", "lambda2", "mu2"):
    print(f"{k:8s} {ref[k]:9.4f} {fit[k]:9.4f} {fit[k] / ref[k] - 1:9.1e}")
print(f"\njump offset h1: true {jump_offset(truth).h1:.6f}, fitted {jump_offset(res.params).h1:.6f}")
