"""Calibrated reference parameter sets shared by the demos (v0 set to theta)."""

from fsvvix import CirParams, ModelKind, ModelParams

SETS = {
    "fsv-aj": ModelParams(CirParams(3.8943, 0.2121, 0.9115, 0.2121), 1.2156, ModelKind.FSV_AJ,
                          lambda1=0.0574, mu1=0.1125, lambda2=0.0648, mu2=-0.1232),
    "fsv-dj": ModelParams(CirParams(3.7029, 0.2036, 0.8662, 0.2036), 1.1575, ModelKind.FSV_DJ,
                          lambda2=0.0668, mu2=-0.1233),
    "svj32": ModelParams(CirParams(2.4614, 47.313, -11.075, 47.313), -0.5, ModelKind.SVJ32,
                         lambda1=0.0722, mu1=0.1518, lambda2=0.1203, mu2=-0.1896),
    "hsv": ModelParams(CirParams(3.1490, 0.0372, 1.0880, 0.0372), 0.5, ModelKind.HSV),
}
