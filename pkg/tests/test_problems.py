import json

import numpy as np
import pytest
import sympy as sp

from servem.problems import (
    ModelError,
    ModelProblem,
    get_problem,
    load_problem_file,
    problem_from_dict,
    problem_poisson_quintic,
    problem_polynomial,
    problem_variable_coeff,
)

x, y = sp.symbols("x y")


def _operator(p, K, b, gamma):
    grad = sp.Matrix([sp.diff(p, x), sp.diff(p, y)])
    flux = -K * grad + b * p
    return sp.diff(flux[0], x) + sp.diff(flux[1], y) + gamma * p


def test_quintic_values():
    prob = problem_poisson_quintic()
    assert prob.exact(np.array([0.0]), np.array([0.0]))[0] == 0.0
    assert prob.exact(np.array([1.0]), np.array([1.0]))[0] == -1.0
    assert prob.kappa is None and prob.b is None and prob.gamma is None


def test_quintic_f_symbolic_oracle():
    prob = problem_poisson_quintic()
    p = x**3 + 5 * y**2 - 10 * y**3 + y**4 + x**5 + x**4 * y
    f = sp.lambdify((x, y), -sp.diff(p, x, 2) - sp.diff(p, y, 2))
    gx = sp.lambdify((x, y), sp.diff(p, x))
    pts = np.random.default_rng(0).uniform(size=(20, 2))
    X, Y = pts.T
    np.testing.assert_allclose(prob.f(X, Y), f(X, Y), rtol=1e-13, atol=1e-12)
    np.testing.assert_allclose(prob.exact_grad(X, Y)[:, 0], gx(X, Y), rtol=1e-13)


def test_variable_coeff_values():
    prob = problem_variable_coeff()
    np.testing.assert_array_equal(prob.kappa_at(np.array([0.0]), np.array([0.0]))[0], np.eye(2))
    assert prob.exact(np.array([0.5]), np.array([0.5]))[0] == pytest.approx(2.125, abs=1e-15)


def test_variable_coeff_f_symbolic_oracle():
    prob = problem_variable_coeff()
    p = x**2 * y + sp.sin(2 * sp.pi * x) * sp.sin(2 * sp.pi * y) + 2
    K = sp.Matrix([[y**2 + 1, -x * y], [-x * y, x**2 + 1]])
    f = sp.lambdify((x, y), _operator(p, K, sp.Matrix([x, y]), x**2 + y**3))
    assert prob.f(np.array([0.3]), np.array([0.7]))[0] == pytest.approx(f(0.3, 0.7), abs=1e-10)
    pts = np.random.default_rng(1).uniform(size=(50, 2))
    np.testing.assert_allclose(prob.f(*pts.T), f(*pts.T), atol=1e-10)
    gx = sp.lambdify((x, y), sp.diff(p, y))
    np.testing.assert_allclose(prob.exact_grad(*pts.T)[:, 1], gx(*pts.T), atol=1e-12)


def test_polynomial_problem_with_anisotropic_kappa():
    K = [[2.0, 0.3], [0.3, 1.0]]
    prob = problem_polynomial({(2, 1): 1.0, (0, 3): -2.0, (1, 0): 0.5}, kappa=K)
    p = x**2 * y - 2 * y**3 + 0.5 * x
    f = sp.lambdify((x, y), _operator(p, sp.Matrix(K), sp.zeros(2, 1), 0))
    pts = np.random.default_rng(2).uniform(size=(10, 2))
    np.testing.assert_allclose(prob.f(*pts.T), f(*pts.T), atol=1e-12)


def test_problem_from_dict(tmp_path):
    data = {"name": "demo", "exact": "x*y + exp(x)", "kappa": [["2", "0"], ["0", "1 + x**2"]],
            "b": ["1", "y"], "gamma": "3"}
    path = tmp_path / "prob.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    prob = load_problem_file(path)
    assert prob.name == "demo"
    p = x * y + sp.exp(x)
    K = sp.Matrix([[2, 0], [0, 1 + x**2]])
    f = sp.lambdify((x, y), _operator(p, K, sp.Matrix([1, y]), 3))
    X, Y = np.array([0.2, 0.8]), np.array([0.4, 0.1])
    np.testing.assert_allclose(prob.f(X, Y), f(X, Y), rtol=1e-13)
    assert prob.kappa_at(X, Y).shape == (2, 2, 2)
    assert prob.b(X, Y).shape == (2, 2)


def test_problem_from_dict_errors():
    with pytest.raises(ModelError):
        problem_from_dict({"kappa": [[1, 0], [0, 1]]})
    with pytest.raises(ModelError):
        problem_from_dict({"exact": "x +* y"})


def test_kappa_must_be_spd():
    bad = ModelProblem("bad", f=lambda x, y: 0 * x, g=lambda x, y: 0 * x,
                       kappa=lambda x, y: np.broadcast_to([[1.0, 2.0], [2.0, 1.0]], (len(x), 2, 2)))
    with pytest.raises(ModelError):
        bad.kappa_at(np.zeros(3), np.zeros(3))


def test_unknown_problem():
    with pytest.raises(ModelError):
        get_problem("heat")
    assert get_problem("zero").has_exact is False
