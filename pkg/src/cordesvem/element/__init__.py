from .basis import ScaledMonomials, dim_p, monomial_exponents
from .local import SUPPORTED_ORDERS, DofLayout, ElementError, LocalElement

__all__ = [
    "DofLayout",
    "ElementError",
    "LocalElement",
    "SUPPORTED_ORDERS",
    "ScaledMonomials",
    "dim_p",
    "monomial_exponents",
]
