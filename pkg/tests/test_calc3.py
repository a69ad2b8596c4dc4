from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from biham3d.calc3 import (
    DiffConfig,
    FormField,
    contract,
    curl,
    div,
    ext_deriv,
    flat,
    grad,
    hodge,
    jacobian,
    sharp,
    volume_form,
    wedge,
)
from biham3d.errors import DomainError

X, Y, Z = sp.symbols("x y z")
COORDS = (X, Y, Z)


# --------------------------------------------------------------------------
# tensor oracle: a k-form is a fully antisymmetric array w[i1..ik] of sympy expressions


def _perm_sign(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


def tensor_from_components(k, comps):
    """Antisymmetric tensor from the package's component convention."""
    if k == 0:
        return comps
    if k == 1:
        return {(i,): comps[i] for i in range(3)}
    if k == 2:
        pairs = {(1, 2): comps[0], (2, 0): comps[1], (0, 1): comps[2]}
        out = {}
        for (i, j), c in pairs.items():
            out[(i, j)] = c
            out[(j, i)] = -c
        for i in range(3):
            out[(i, i)] = 0
        return out
    out = {}
    for idx in itertools.product(range(3), repeat=3):
        out[idx] = comps * _perm_sign(idx) if len(set(idx)) == 3 else 0
    return out


def components_from_tensor(k, t):
    if k == 0:
        return t
    if k == 1:
        return [t[(i,)] for i in range(3)]
    if k == 2:
        return [t[(1, 2)], t[(2, 0)], t[(0, 1)]]
    return t[(0, 1, 2)]


def tensor_wedge(k, a, l, b):
    """(a^b)_{I} = 1/(k! l!) sum_sigma sgn(sigma) a_{sigma(I[:k])} b_{sigma(I[k:])}."""
    if k == 0:
        return {i: a * v for i, v in b.items()} if l else a * b
    if l == 0:
        return {i: b * v for i, v in a.items()}
    n = k + l
    out = {}
    for idx in itertools.product(range(3), repeat=n):
        total = 0
        for perm in itertools.permutations(range(n)):
            q = tuple(idx[p] for p in perm)
            total += _perm_sign(perm) * a[q[:k]] * b[q[k:]]
        out[idx] = sp.expand(total / (math.factorial(k) * math.factorial(l)))
    return out


def tensor_d(k, w):
    out = {}
    for idx in itertools.product(range(3), repeat=k + 1):
        if k == 0:
            out[idx] = sp.diff(w, COORDS[idx[0]])
            continue
        total = 0
        for j in range(k + 1):
            rest = idx[:j] + idx[j + 1:]
            total += (-1) ** j * sp.diff(w[rest], COORDS[idx[j]])
        out[idx] = total
    return out


def tensor_contract(V, k, w):
    if k == 1:
        return sum(V[j] * w[(j,)] for j in range(3))
    out = {}
    for idx in itertools.product(range(3), repeat=k - 1):
        out[idx] = sum(V[j] * w[(j,) + idx] for j in range(3))
    return out


def numeric(k, comps):
    """Sympy components -> vectorised numpy callable in the package layout."""
    if k in (0, 3):
        f = sp.lambdify(COORDS, comps, "numpy")
        return lambda x: np.asarray(f(x[..., 0], x[..., 1], x[..., 2]), dtype=float) + 0 * x[..., 0]
    fs = [sp.lambdify(COORDS, c, "numpy") for c in comps]
    return lambda x: np.stack([np.asarray(f(x[..., 0], x[..., 1], x[..., 2]), float) + 0 * x[..., 0]
                               for f in fs], axis=-1)


SAMPLE_FORMS = {
    0: sp.sin(X) * Y + Z ** 2,
    1: [sp.cos(Y * Z), X * Z, sp.exp(X / 3) * Y],
    2: [X * Y, sp.sin(Z + X), Y ** 2 - Z],
    3: X * Y * Z + sp.cos(X),
}
OTHER_FORMS = {
    0: X ** 2 - Y * Z,
    1: [Y, sp.sin(X), Z * X],
    2: [sp.cos(Z), X - Y, X * Z],
    3: Y - Z ** 2,
}
POINTS = np.array([[0.3, -0.2, 0.5], [1.1, 0.4, -0.7], [-0.6, 0.9, 0.2]])


def _form(k, comps):
    return FormField(k, numeric(k, comps))


@pytest.mark.parametrize("k,l", [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2), (2, 1), (0, 3), (2, 0)])
def test_wedge_matches_tensor_oracle(k, l):
    a, b = SAMPLE_FORMS[k], OTHER_FORMS[l]
    ref = components_from_tensor(k + l, tensor_wedge(k, tensor_from_components(k, a), l,
                                                     tensor_from_components(l, b)))
    got = wedge(_form(k, a), _form(l, b))(POINTS)
    assert got.shape == (3, 3) if (k + l) in (1, 2) else got.shape == (3,)
    np.testing.assert_allclose(got, numeric(k + l, ref)(POINTS), atol=1e-13)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_ext_deriv_matches_tensor_oracle(k):
    comps = SAMPLE_FORMS[k]
    ref = components_from_tensor(k + 1, tensor_d(k, tensor_from_components(k, comps)))
    want = numeric(k + 1, ref)(POINTS)
    got = ext_deriv(_form(k, comps), DiffConfig(h=1e-3, order=4))(POINTS)
    np.testing.assert_allclose(got, want, atol=1e-9)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_contract_matches_tensor_oracle(k):
    V = [Y, -X, sp.Integer(1)]
    comps = SAMPLE_FORMS[k]
    ref = components_from_tensor(k - 1, tensor_contract(V, k, tensor_from_components(k, comps)))
    got = contract(numeric(1, V), _form(k, comps))(POINTS)
    np.testing.assert_allclose(got, numeric(k - 1, ref)(POINTS), atol=1e-13)


def test_hodge_is_an_involution_on_every_grade():
    for k, comps in SAMPLE_FORMS.items():
        w = _form(k, comps)
        twice = hodge(hodge(w))
        assert twice.grade == k
        np.testing.assert_array_equal(twice(POINTS), w(POINTS))


def test_hodge_of_one_is_volume_form():
    one = FormField.constant(0, 1.0)
    np.testing.assert_array_equal(hodge(one)(POINTS), volume_form()(POINTS))


def test_d_squared_vanishes():
    cfg = DiffConfig(h=1e-3, order=4)
    for k in (0, 1):
        dd = ext_deriv(ext_deriv(_form(k, SAMPLE_FORMS[k]), cfg), cfg)(POINTS)
        assert np.max(np.abs(dd)) < 1e-6


def test_wedge_graded_antisymmetry():
    a, b = _form(1, SAMPLE_FORMS[1]), _form(1, OTHER_FORMS[1])
    np.testing.assert_allclose(wedge(a, b)(POINTS), -wedge(b, a)(POINTS))
    c = _form(2, SAMPLE_FORMS[2])
    np.testing.assert_allclose(wedge(a, c)(POINTS), wedge(c, a)(POINTS))


def test_wedge_grade_overflow_rejected():
    with pytest.raises(ValueError):
        wedge(_form(2, SAMPLE_FORMS[2]), _form(2, OTHER_FORMS[2]))
    with pytest.raises(ValueError):
        ext_deriv(_form(3, SAMPLE_FORMS[3]))


def test_flat_sharp_roundtrip():
    V = numeric(1, SAMPLE_FORMS[1])
    np.testing.assert_array_equal(sharp(flat(V))(POINTS), V(POINTS))


def test_form_arithmetic():
    a, b = _form(1, SAMPLE_FORMS[1]), _form(1, OTHER_FORMS[1])
    np.testing.assert_allclose((a + b)(POINTS) - (a - b)(POINTS), 2 * b(POINTS))
    np.testing.assert_allclose((-a)(POINTS), -a(POINTS))
    np.testing.assert_allclose(a.scale(2.0)(POINTS), 2 * a(POINTS))
    f = numeric(0, SAMPLE_FORMS[0])
    np.testing.assert_allclose(a.scale(f)(POINTS), f(POINTS)[:, None] * a(POINTS))
    with pytest.raises(ValueError):
        a + _form(2, SAMPLE_FORMS[2])


# --------------------------------------------------------------------------
# vector calculus


def test_grad_curl_div_against_sympy():
    f = SAMPLE_FORMS[0]
    V = SAMPLE_FORMS[1]
    cfg = DiffConfig(h=1e-3, order=4)
    want_grad = numeric(1, [sp.diff(f, c) for c in COORDS])(POINTS)
    want_curl = numeric(1, [sp.diff(V[2], Y) - sp.diff(V[1], Z), sp.diff(V[0], Z) - sp.diff(V[2], X),
                            sp.diff(V[1], X) - sp.diff(V[0], Y)])(POINTS)
    want_div = numeric(0, sum(sp.diff(V[i], COORDS[i]) for i in range(3)))(POINTS)
    np.testing.assert_allclose(grad(numeric(0, f), POINTS, cfg), want_grad, atol=1e-9)
    np.testing.assert_allclose(curl(numeric(1, V), POINTS, cfg), want_curl, atol=1e-9)
    np.testing.assert_allclose(div(numeric(1, V), POINTS, cfg), want_div, atol=1e-9)


def test_exact_backend_uses_supplied_jacobian():
    def V(x):
        return np.stack([x[..., 1], -x[..., 0], 0 * x[..., 2]], axis=-1)

    def jac(x):
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -1.0
        return J

    V.jacobian = jac
    cfg = DiffConfig(backend="exact")
    np.testing.assert_array_equal(curl(V, POINTS, cfg), np.tile([0.0, 0.0, -2.0], (3, 1)))
    np.testing.assert_array_equal(jacobian(V, POINTS, cfg), jac(POINTS))


def test_exact_backend_without_derivatives_is_an_error():
    with pytest.raises(Exception):
        jacobian(lambda x: x, POINTS, DiffConfig(backend="exact"))


def test_stencil_leaving_domain_raises():
    def V(x):
        return x

    V.contains = lambda x: x[..., 0] > 0.0
    with pytest.raises(DomainError):
        jacobian(V, np.array([[1e-6, 0.0, 0.0]]), DiffConfig(h=1e-4))


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        DiffConfig(order=3)
    with pytest.raises(ValueError):
        DiffConfig(h=0.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=30, max_size=30), st.sampled_from([2, 4]))
def test_fd_exact_on_quadratic_fields(coeffs, order):
    """Central differences of either order are exact on quadratics up to rounding."""
    c = np.array(coeffs).reshape(3, 10)

    def V(x):
        x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
        basis = np.stack([np.ones_like(x0), x0, x1, x2, x0 * x0, x1 * x1, x2 * x2, x0 * x1, x1 * x2, x0 * x2], -1)
        return basis @ c.T

    def exact(x):
        x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
        one = np.ones_like(x0)
        zero = np.zeros_like(x0)
        dbasis = np.stack(
            [
                np.stack([zero, one, zero, zero, 2 * x0, zero, zero, x1, zero, x2], -1),
                np.stack([zero, zero, one, zero, zero, 2 * x1, zero, x0, x2, zero], -1),
                np.stack([zero, zero, zero, one, zero, zero, 2 * x2, zero, x1, x0], -1),
            ],
            -1,
        )  # (..., 10, 3)
        return np.einsum("rb,...bj->...rj", c, dbasis)

    got = jacobian(V, POINTS, DiffConfig(h=1e-2, order=order))
    np.testing.assert_allclose(got, exact(POINTS), atol=1e-10)


@pytest.mark.parametrize("order,expected", [(2, 2.0), (4, 4.0)])
def test_fd_convergence_order(order, expected):
    f = lambda x: np.sin(x[..., 0]) * np.exp(x[..., 1]) + np.cos(x[..., 2])
    p = np.array([[0.4, 0.3, -0.2]])
    exact = np.array([np.cos(0.4) * np.exp(0.3), np.sin(0.4) * np.exp(0.3), -np.sin(-0.2)])
    hs = np.array([0.04, 0.02, 0.01])
    errs = [np.max(np.abs(grad(f, p, DiffConfig(h=h, order=order))[0] - exact)) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - expected) < 0.1
