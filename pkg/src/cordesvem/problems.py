"""Built-in problems: three benchmark examples and polynomial patch tests.

All evaluators are vectorised over points of shape ``(n, 2)``; matrix-valued
ones return ``(n, 2, 2)`` and gradients ``(n, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cordes import CoefficientField, admissible_scaling

Box = tuple[float, float, float, float]


@dataclass(frozen=True)
class ProblemDefinition:
    """Data for ``A : D^2 u = f`` in the box with ``u = g`` on the boundary.

    ``gamma`` is the scaling used by the scheme; ``None`` means the canonical
    ``tr A / |A|^2``.  ``u``, ``grad_u`` and ``hess_u`` are optional.
    """

    name: str
    A: CoefficientField
    f: Callable
    g: Callable
    grad_g: Callable
    mu: float
    box: Box = (-1.0, 1.0, -1.0, 1.0)
    gamma: Callable | None = None
    u: Callable | None = None
    grad_u: Callable | None = None
    hess_u: Callable | None = None
    description: str = ""

    @property
    def has_exact(self) -> bool:
        return self.u is not None and self.grad_u is not None and self.hess_u is not None

    def scaling(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.gamma is not None:
            return np.broadcast_to(np.asarray(self.gamma(x), dtype=float), (len(x),))
        return np.atleast_1d(admissible_scaling(self.A(x)))

    def residual(self, x) -> np.ndarray:
        """``A : D^2 u - f`` at ``x`` (needs the exact solution)."""
        if not self.has_exact:
            raise ValueError(f"problem {self.name!r} has no exact solution")
        x = np.atleast_2d(x)
        return np.einsum("nij,nij->n", self.A(x), self.hess_u(x)) - self.f(x)


def sgn_plus(t):
    """1 for t >= 0, -1 otherwise."""
    return np.where(np.asarray(t) >= 0, 1.0, -1.0)


def _axes_coefficient(x) -> np.ndarray:
    x = np.atleast_2d(x)
    s = sgn_plus(x[:, 0]) * sgn_plus(x[:, 1])
    A = np.empty((len(x), 2, 2))
    A[:, 0, 0] = A[:, 1, 1] = 2.0
    A[:, 0, 1] = A[:, 1, 0] = s
    return A


def _axes_field() -> CoefficientField:
    # jumps across the coordinate axes
    return CoefficientField(_axes_coefficient, continuous=False, name="sign-coupled")


def _hess(uxx, uxy, uyy) -> np.ndarray:
    return np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)


# phi(t) = t e^{1-|t|} - t and derivatives
def _phi(t):
    return t * np.exp(1.0 - np.abs(t)) - t


def _dphi(t):
    a = np.abs(t)
    return np.exp(1.0 - a) * (1.0 - a) - 1.0


def _d2phi(t):
    a = np.abs(t)
    return -np.sign(t) * np.exp(1.0 - a) * (2.0 - a)


def example1() -> ProblemDefinition:
    """Sign-coupled coefficient, solution ``phi(x) phi(y)`` with a kink in D^2 u on the axes."""

    def u(x):
        x = np.atleast_2d(x)
        return _phi(x[:, 0]) * _phi(x[:, 1])

    def grad_u(x):
        x = np.atleast_2d(x)
        return np.column_stack([_dphi(x[:, 0]) * _phi(x[:, 1]), _phi(x[:, 0]) * _dphi(x[:, 1])])

    def hess_u(x):
        x = np.atleast_2d(x)
        a, b = x[:, 0], x[:, 1]
        return _hess(_d2phi(a) * _phi(b), _dphi(a) * _dphi(b), _phi(a) * _d2phi(b))

    def f(x):
        x = np.atleast_2d(x)
        a, b = x[:, 0], x[:, 1]
        s = sgn_plus(a) * sgn_plus(b)
        return 2.0 * _d2phi(a) * _phi(b) + 2.0 * s * _dphi(a) * _dphi(b) + 2.0 * _phi(a) * _d2phi(b)

    return ProblemDefinition(
        name="example1", A=_axes_field(), f=f, g=lambda x: np.zeros(len(np.atleast_2d(x))),
        grad_g=lambda x: np.zeros((len(np.atleast_2d(x)), 2)), mu=float(np.sqrt(0.4)),
        u=u, grad_u=grad_u, hess_u=hess_u,
        description="discontinuous coefficient, nonsmooth solution on (-1,1)^2")


def example2() -> ProblemDefinition:
    """Same coefficient as :func:`example1` with ``u = sin(pi x) sin(pi y)``."""
    pi = np.pi

    def u(x):
        x = np.atleast_2d(x)
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad_u(x):
        x = np.atleast_2d(x)
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return pi * np.column_stack([cx * sy, sx * cy])

    def hess_u(x):
        x = np.atleast_2d(x)
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return pi**2 * _hess(-sx * sy, cx * cy, -sx * sy)

    def f(x):
        x = np.atleast_2d(x)
        s = sgn_plus(x[:, 0]) * sgn_plus(x[:, 1])
        cc = np.cos(pi * x[:, 0]) * np.cos(pi * x[:, 1])
        return -4.0 * pi**2 * u(x) + 2.0 * pi**2 * s * cc

    return ProblemDefinition(
        name="example2", A=_axes_field(), f=f, g=u, grad_g=grad_u, mu=float(np.sqrt(0.4)),
        u=u, grad_u=grad_u, hess_u=hess_u,
        description="discontinuous coefficient, smooth solution on (-1,1)^2")


_E_DIAG = np.array([1.0, 1.0]) / np.sqrt(2.0)


def _radial_coefficient(x) -> np.ndarray:
    x = np.atleast_2d(x)
    r2 = np.sum(x * x, axis=1)
    e = np.where(r2[:, None] > 0, x / np.sqrt(np.where(r2 > 0, r2, 1.0))[:, None], _E_DIAG)
    return np.eye(2)[None] + e[:, :, None] * e[:, None, :]


def example3() -> ProblemDefinition:
    """``A = I + x x^T / |x|^2`` on (0,1)^2 with ``u = |x|^1.6``."""

    def r(x):
        return np.hypot(x[:, 0], x[:, 1])

    def u(x):
        x = np.atleast_2d(x)
        return r(x) ** 1.6

    def grad_u(x):
        x = np.atleast_2d(x)
        rr = r(x)
        safe = np.where(rr > 0, rr, 1.0)
        return np.where(rr[:, None] > 0, 1.6 * safe[:, None] ** -0.4 * x, 0.0)

    def hess_u(x):
        x = np.atleast_2d(x)
        rr = r(x)
        H = 1.6 * rr[:, None, None] ** -0.4 * np.eye(2)[None]
        return H - 0.64 * rr[:, None, None] ** -2.4 * x[:, :, None] * x[:, None, :]

    def f(x):
        x = np.atleast_2d(x)
        return 3.52 * r(x) ** -0.4

    return ProblemDefinition(
        name="example3", A=CoefficientField(_radial_coefficient, continuous=True, name="radial"),
        f=f, g=u, grad_g=grad_u, mu=float(1.0 / np.sqrt(5.0)), box=(0.0, 1.0, 0.0, 1.0),
        u=u, grad_u=grad_u, hess_u=hess_u,
        description="coefficient discontinuous at the origin, u in W^{2.6-eps}")


def _poly_eval(poly: dict, x, dx: int = 0, dy: int = 0) -> np.ndarray:
    x = np.atleast_2d(x)
    out = np.zeros(len(x))
    for (a, b), c in poly.items():
        if a < dx or b < dy:
            continue
        fa = np.prod(range(a - dx + 1, a + 1)) if dx else 1
        fb = np.prod(range(b - dy + 1, b + 1)) if dy else 1
        out += c * fa * fb * x[:, 0] ** (a - dx) * x[:, 1] ** (b - dy)
    return out


def parse_polynomial(text: str) -> dict[tuple[int, int], float]:
    """Parse sums like ``"x^2+3xy-y^2"`` into ``{(a, b): c}``."""
    import re

    s = text.replace(" ", "").replace("*", "")
    if not s:
        raise ValueError("empty polynomial")
    terms = re.findall(r"[+-]?[^+-]+", s)
    if "".join(terms) != s:
        raise ValueError(f"cannot parse polynomial {text!r}")
    poly: dict[tuple[int, int], float] = {}
    for t in terms:
        m = re.fullmatch(r"([+-]?)(\d*\.?\d*)((?:[xy](?:\^\d+)?)*)", t)
        if m is None or (m.group(2) in ("", ".") and not m.group(3)):
            raise ValueError(f"cannot parse term {t!r}")
        c = float(m.group(2)) if m.group(2) not in ("", ".") else 1.0
        if m.group(1) == "-":
            c = -c
        a = b = 0
        for var, p in re.findall(r"([xy])(?:\^(\d+))?", m.group(3)):
            k = int(p) if p else 1
            if var == "x":
                a += k
            else:
                b += k
        poly[(a, b)] = poly.get((a, b), 0.0) + c
    return poly


def patch_problem(p=None, A=None, box: Box = (-1.0, 1.0, -1.0, 1.0)) -> ProblemDefinition:
    """Polynomial solution ``p`` with constant ``A``; ``f = A : D^2 p``, ``g = p``.

    ``p`` is ``{(a, b): c}`` or a string such as ``"x^2+3xy"``; defaults to ``x^2``.
    """
    if p is None:
        p = {(2, 0): 1.0}
    elif isinstance(p, str):
        p = parse_polynomial(p)
    A = np.eye(2) if A is None else np.asarray(A, dtype=float)
    field = CoefficientField.constant(A)
    from .cordes import cordes_residual

    def u(x):
        return _poly_eval(p, x)

    def grad_u(x):
        return np.column_stack([_poly_eval(p, x, 1, 0), _poly_eval(p, x, 0, 1)])

    def hess_u(x):
        return _hess(_poly_eval(p, x, 2, 0), _poly_eval(p, x, 1, 1), _poly_eval(p, x, 0, 2))

    def f(x):
        return np.einsum("ij,nij->n", A, hess_u(x))

    return ProblemDefinition(
        name="patch", A=field, f=f, g=u, grad_g=grad_u, mu=float(cordes_residual(A)), box=box,
        u=u, grad_u=grad_u, hess_u=hess_u, description=f"polynomial patch test {p}")


PROBLEMS: dict[str, Callable[[], ProblemDefinition]] = {
    "example1": example1,
    "example2": example2,
    "example3": example3,
    "patch": patch_problem,
}


def get_problem(name: str, **kw) -> ProblemDefinition:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**kw)
