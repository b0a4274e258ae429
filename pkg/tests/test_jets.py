import numpy as np
import pytest

from apfos import adtape as ad
from apfos import jets as jt
from apfos import problem as P
from apfos.gradcheck import rel_error

PI = np.pi


def xz(x, z, order=2):
    return jt.coordinate_jets(np.array([[x, z]]), order)


def val(c):
    return np.asarray(ad.value_of(c), dtype=float).reshape(-1)[0] if not isinstance(c, float) else c


def test_seed_order2():
    j = jt.seed_coordinate(0, 0.3, 2, 2)
    assert float(j.value) == 0.3
    assert j.grad == (1.0, 0.0)
    assert all(h == 0.0 for row in j.hess for h in row)


def test_seed_3d_order1():
    j = jt.seed_coordinate(2, 1.0, 3, 1)
    assert j.grad == (0.0, 0.0, 1.0)
    assert j.hess is None


@pytest.mark.parametrize("k,dim,order", [(3, 2, 1), (-1, 2, 1), (0, 4, 1), (0, 2, 3)])
def test_seed_rejects_bad_arguments(k, dim, order):
    with pytest.raises(ValueError):
        jt.seed_coordinate(k, 0.0, dim, order)


def test_sin_at_half_pi():
    X, Z = xz(PI / 2, 0.4)
    s = jt.sin(X)
    assert val(s.value) == pytest.approx(1.0)
    assert [val(g) for g in s.grad] == pytest.approx([0.0, 0.0], abs=1e-15)
    assert val(s.hess[0][0]) == pytest.approx(-1.0)
    assert val(s.hess[0][1]) == 0.0 and val(s.hess[1][1]) == 0.0


def test_product_rule():
    X, Z = xz(2.0, 3.0)
    p = X * Z
    assert [val(g) for g in p.grad] == [3.0, 2.0]
    assert val(p.hess[0][1]) == 1.0


def test_hessian_is_mirrored():
    X, Z = xz(0.2, 0.7)
    u = jt.exp(jt.sin(X) * Z)
    assert u.hess[0][1] is u.hess[1][0]


def test_order_mismatch():
    a = jt.seed_coordinate(0, 0.1, 2, 1)
    b = jt.seed_coordinate(1, 0.1, 2, 2)
    with pytest.raises(ValueError, match="order"):
        a + b


def test_dim_mismatch():
    a = jt.seed_coordinate(0, 0.1, 2, 1)
    b = jt.seed_coordinate(0, 0.1, 3, 1)
    with pytest.raises(ValueError, match="dimension"):
        a * b


def _fd_grad_hess(f, x, h=1e-4):
    x = np.asarray(x, float)
    d = len(x)
    g = np.zeros(d)
    H = np.zeros((d, d))
    for i in range(d):
        e = np.zeros(d); e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
        for j in range(d):
            e2 = np.zeros(d); e2[j] = h
            H[i, j] = (f(x + e + e2) - f(x + e - e2) - f(x - e + e2) + f(x - e - e2)) / (4 * h * h)
    return g, H


def test_composite_matches_finite_differences():
    x0 = np.array([0.3, 0.8])
    X, Z = xz(*x0)
    u = jt.exp(jt.sin(X) + X * Z)
    f = lambda p: np.exp(np.sin(p[0]) + p[0] * p[1])
    g, H = _fd_grad_hess(f, x0)
    assert rel_error([val(c) for c in u.grad], g) < 1e-5
    assert rel_error([[val(c) for c in r] for r in u.hess], H) < 1e-5


def test_remaining_unaries_match_finite_differences():
    x0 = np.array([0.4, 0.6, 0.2])
    X, Y, Z = jt.coordinate_jets(x0[None, :], 2)
    u = jt.sqrt(X * X + Y + 1.0) * jt.cos(Z) / (jt.tanh(Y) + 2.0) - 3.0
    f = lambda p: np.sqrt(p[0] ** 2 + p[1] + 1) * np.cos(p[2]) / (np.tanh(p[1]) + 2) - 3
    g, H = _fd_grad_hess(f, x0)
    assert rel_error([val(c) for c in u.grad], g) < 1e-5
    assert rel_error([[val(c) for c in r] for r in u.hess], H) < 1e-4


@pytest.mark.parametrize(
    "field,expected",
    [
        (lambda X, Z: (X, Z), 2.0),
        (lambda X, Z: (-Z, X), 0.0),
        (lambda X, Z: (X * X, X * Z), 3.0),
    ],
)
def test_divergence_examples(field, expected):
    X, Z = xz(1.0, 2.0, order=1)
    assert val(jt.divergence(list(field(X, Z)))) == pytest.approx(expected)


def test_divergence_dim_mismatch():
    X, Z = xz(0.1, 0.2, order=1)
    with pytest.raises(ValueError):
        jt.divergence([X])


def _const_field(b, n=1):
    return [jt.constant(np.full(n, c), len(b), 1) for c in b]


def test_aligned_operators_square():
    X, Z = xz(0.3, 0.6)
    ops = jt.anisotropic_operators(X * X + Z * Z, _const_field((0.0, 1.0)))
    assert val(ops["lap_par"]) == pytest.approx(2.0)
    assert val(ops["lap_perp"]) == pytest.approx(2.0)


def test_aligned_operators_bilinear():
    X, Z = xz(0.3, 0.6)
    ops = jt.anisotropic_operators(X * Z, _const_field((0.0, 1.0)))
    assert val(ops["lap_par"]) == pytest.approx(0.0, abs=1e-15)
    assert val(ops["lap_perp"]) == pytest.approx(0.0, abs=1e-15)


def test_operators_need_frame_derivatives():
    X, Z = xz(0.3, 0.6)
    with pytest.raises(ValueError):
        jt.anisotropic_operators(X * Z, [0.0, 1.0])
    with pytest.raises(ValueError):
        jt.anisotropic_operators(X.with_order(1), _const_field((0.0, 1.0)))


def test_parallel_laplacian_case2_matches_finite_differences():
    inst = P.ProblemInstance.from_case("I", 2, 1.0)
    x0 = np.array([0.3, 0.7])
    X, Z = jt.coordinate_jets(x0[None, :], 2)
    psi = jt.sin(X * PI) * jt.cos(Z * (2 * PI))
    fr = P.frame_at(inst, x0[None, :])
    lap_par = val(jt.anisotropic_operators(psi, fr.b)["lap_par"])

    def b_of(p):
        return np.array([float(np.asarray(c.value)[0]) for c in P.frame_at(inst, p[None, :]).b])

    def flux(p):  # b (b . grad psi)
        grad = np.array([PI * np.cos(PI * p[0]) * np.cos(2 * PI * p[1]),
                         -2 * PI * np.sin(PI * p[0]) * np.sin(2 * PI * p[1])])
        b = b_of(p)
        return b * (b @ grad)

    h = 1e-5
    div = sum((flux(x0 + h * e)[i] - flux(x0 - h * e)[i]) / (2 * h) for i, e in enumerate(np.eye(2)))
    assert lap_par == pytest.approx(div, rel=1e-5)


def test_tracked_components_stay_differentiable():
    tape = ad.Tape([0.7])
    w = tape.params[0]
    X, Z = xz(0.2, 0.5)
    u = jt.tanh(X * w + Z)
    g = tape.backward(ad.sum(u.hess[0][0]))
    # d/dw of w^2 tanh''(w x + z)
    def f(wv):
        t = np.tanh(wv * 0.2 + 0.5)
        return wv**2 * (-2 * t * (1 - t * t))
    h = 1e-6
    assert g[0] == pytest.approx((f(0.7 + h) - f(0.7 - h)) / (2 * h), rel=1e-6)
