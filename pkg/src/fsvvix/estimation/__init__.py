"""GMM estimation under the physical measure and calibration under the pricing measure."""

from .calibration import CalibrationResult, CalibSpec, Instruments, calibrate, option_loss, vix_loss
from .gmm import GmmResult, GmmSpec, ReturnSeries, gmm_estimate, nested_test, phi_second_moment

__all__ = [
    "CalibSpec", "CalibrationResult", "GmmResult", "GmmSpec", "Instruments", "ReturnSeries",
    "calibrate", "gmm_estimate", "nested_test", "option_loss", "phi_second_moment", "vix_loss",
]
