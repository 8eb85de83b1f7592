"""Model problems ``div(-kappa grad p + b p) + gamma p = f``, ``p = g`` on the boundary.

Coefficient fields take coordinate arrays ``x, y`` of shape ``(n,)`` and
return ``kappa`` as ``(n, 2, 2)``, ``b`` as ``(n, 2)`` and scalars as ``(n,)``.
A field left as ``None`` means identity (``kappa``) or zero (``b``, ``gamma``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .polynomials import multi_indices

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ModelError(ValueError):
    pass


@dataclass
class ModelProblem:
    name: str
    f: Field
    g: Field
    kappa: Optional[Field] = None
    b: Optional[Field] = None
    gamma: Optional[Field] = None
    exact: Optional[Field] = None
    exact_grad: Optional[Field] = None

    def kappa_at(self, x, y) -> np.ndarray:
        if self.kappa is None:
            return np.broadcast_to(np.eye(2), (len(x), 2, 2))
        K = np.asarray(self.kappa(x, y), float)
        if not np.allclose(K, np.swapaxes(K, 1, 2)) or np.any(np.linalg.eigvalsh(K)[:, 0] <= 0):
            raise ModelError(f"kappa is not symmetric positive definite in problem {self.name}")
        return K

    @property
    def has_exact(self) -> bool:
        return self.exact is not None


def _const(value):
    return lambda x, y: np.full(np.shape(x), float(value))


def problem_poisson_quintic() -> ModelProblem:
    """Poisson problem with exact solution ``x^3+5y^2-10y^3+y^4+x^5+x^4 y``."""

    def exact(x, y):
        return x**3 + 5 * y**2 - 10 * y**3 + y**4 + x**5 + x**4 * y

    def grad(x, y):
        return np.stack([3 * x**2 + 5 * x**4 + 4 * x**3 * y,
                         10 * y - 30 * y**2 + 4 * y**3 + x**4], axis=-1)

    def f(x, y):
        return -(6 * x + 20 * x**3 + 12 * x**2 * y + 10 - 60 * y + 12 * y**2)

    return ModelProblem("poisson-quintic", f=f, g=exact, exact=exact, exact_grad=grad)


def problem_variable_coeff() -> ModelProblem:
    """Full convection-diffusion-reaction problem on the unit square.

    ``kappa = [[y^2+1, -xy], [-xy, x^2+1]]``, ``b = (x, y)``,
    ``gamma = x^2 + y^3`` and ``p = x^2 y + sin(2 pi x) sin(2 pi y) + 2``.
    """
    tp = 2 * np.pi

    def kappa(x, y):
        K = np.empty(np.shape(x) + (2, 2))
        K[..., 0, 0] = y**2 + 1
        K[..., 0, 1] = K[..., 1, 0] = -x * y
        K[..., 1, 1] = x**2 + 1
        return K

    def b(x, y):
        return np.stack([x, y], axis=-1)

    def gamma(x, y):
        return x**2 + y**3

    def exact(x, y):
        return x**2 * y + np.sin(tp * x) * np.sin(tp * y) + 2

    def grad(x, y):
        return np.stack([2 * x * y + tp * np.cos(tp * x) * np.sin(tp * y),
                         x**2 + tp * np.sin(tp * x) * np.cos(tp * y)], axis=-1)

    def f(x, y):
        ss = np.sin(tp * x) * np.sin(tp * y)
        cc = np.cos(tp * x) * np.cos(tp * y)
        px, py = grad(x, y)[..., 0], grad(x, y)[..., 1]
        pxx = 2 * y - tp**2 * ss
        pyy = -tp**2 * ss
        pxy = 2 * x + tp**2 * cc
        return (-(y**2 + 1) * pxx - (x**2 + 1) * pyy + 2 * x * y * pxy
                + 2 * x * px + 2 * y * py + (2 + gamma(x, y)) * exact(x, y))

    return ModelProblem("variable-coeff", f=f, g=exact, kappa=kappa, b=b, gamma=gamma,
                        exact=exact, exact_grad=grad)


def problem_polynomial(coeffs: dict, kappa=None) -> ModelProblem:
    """Diffusion problem whose exact solution is a polynomial.

    ``coeffs`` maps exponent pairs ``(ax, ay)`` to coefficients; ``kappa``
    is an optional constant symmetric 2x2 matrix.
    """
    K = np.eye(2) if kappa is None else np.asarray(kappa, float)
    terms = [(int(ax), int(ay), float(c)) for (ax, ay), c in coeffs.items()]

    def exact(x, y):
        return sum(c * x**ax * y**ay for ax, ay, c in terms) + 0 * x

    def grad(x, y):
        gx = sum(c * ax * x**max(ax - 1, 0) * y**ay for ax, ay, c in terms) + 0 * x
        gy = sum(c * ay * x**ax * y**max(ay - 1, 0) for ax, ay, c in terms) + 0 * x
        return np.stack([gx, gy], axis=-1)

    def f(x, y):
        dxx = sum(c * ax * (ax - 1) * x**max(ax - 2, 0) * y**ay for ax, ay, c in terms) + 0 * x
        dyy = sum(c * ay * (ay - 1) * x**ax * y**max(ay - 2, 0) for ax, ay, c in terms) + 0 * x
        dxy = sum(c * ax * ay * x**max(ax - 1, 0) * y**max(ay - 1, 0) for ax, ay, c in terms) + 0 * x
        return -(K[0, 0] * dxx + 2 * K[0, 1] * dxy + K[1, 1] * dyy)

    kfield = None if kappa is None else (lambda x, y: np.broadcast_to(K, np.shape(x) + (2, 2)))
    return ModelProblem("polynomial", f=f, g=exact, kappa=kfield, exact=exact, exact_grad=grad)


def random_polynomial(k: int, rng) -> dict:
    return {a: float(rng.uniform(-1, 1)) for a in multi_indices(k)}


def problem_zero() -> ModelProblem:
    return ModelProblem("zero", f=_const(0.0), g=_const(0.0))


def problem_from_dict(data: dict) -> ModelProblem:
    """Problem from string expressions in ``x`` and ``y``.

    Keys: ``exact`` (required) plus optional ``kappa`` (2x2 nested list),
    ``b`` (pair) and ``gamma``. ``f`` and the gradient are derived
    symbolically.
    """
    import sympy as sp

    x, y = sp.symbols("x y")
    ns = {"x": x, "y": y}
    try:
        p = sp.sympify(data["exact"], locals=ns)
        K = sp.Matrix(data.get("kappa", [[1, 0], [0, 1]])).applyfunc(lambda e: sp.sympify(e, locals=ns))
        bv = sp.Matrix(data.get("b", [0, 0])).applyfunc(lambda e: sp.sympify(e, locals=ns))
        gam = sp.sympify(data.get("gamma", 0), locals=ns)
    except (KeyError, sp.SympifyError, TypeError) as exc:
        raise ModelError(f"bad coefficient description: {exc}") from exc
    grad = sp.Matrix([sp.diff(p, x), sp.diff(p, y)])
    flux = -K * grad + bv * p
    f = sp.diff(flux[0], x) + sp.diff(flux[1], y) + gam * p

    def lam(expr):
        fn = sp.lambdify((x, y), expr, "numpy")
        return lambda X, Y: np.asarray(fn(X, Y), float) + 0 * X

    def kappa(X, Y):
        out = np.empty(np.shape(X) + (2, 2))
        for i in range(2):
            for j in range(2):
                out[..., i, j] = lam(K[i, j])(X, Y)
        return out

    gfun = [lam(grad[0]), lam(grad[1])]
    bfun = [lam(bv[0]), lam(bv[1])]
    return ModelProblem(
        data.get("name", "custom"), f=lam(f), g=lam(p),
        kappa=kappa, b=(lambda X, Y: np.stack([bfun[0](X, Y), bfun[1](X, Y)], -1)) if any(bv) else None,
        gamma=lam(gam) if gam != 0 else None, exact=lam(p),
        exact_grad=lambda X, Y: np.stack([gfun[0](X, Y), gfun[1](X, Y)], -1))


def load_problem_file(path) -> ModelProblem:
    return problem_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


PROBLEMS = {
    "poisson-quintic": problem_poisson_quintic,
    "variable-coeff": problem_variable_coeff,
    "zero": problem_zero,
}


def get_problem(name: str) -> ModelProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ModelError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
