"""VIX futures and options under square-root variance with a free diffusion power."""

from .cir import CirParams
from .pricing import Contract, PriceQuote, price, price_many
from .vixmap import ModelKind, ModelParams, vix_map, vix_squared

__all__ = ["CirParams", "Contract", "ModelKind", "ModelParams", "PriceQuote", "price", "price_many",
           "vix_map", "vix_squared"]
