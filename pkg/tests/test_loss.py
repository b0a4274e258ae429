from dataclasses import replace

import numpy as np
import pytest

from apfos import adtape as ad
from apfos import jets as jt
from apfos import loss as L
from apfos import network as N
from apfos import problem as P


class FnModel:
    """Model whose outputs are closed-form functions of the coordinate jets."""

    def __init__(self, *fns):
        self.fns = fns

    def __call__(self, points, order=1):
        c = jt.coordinate_jets(points, order)
        return [f(*c) for f in self.fns]


def setup_data(setup="I", case=1, eps=1.0, n=(60, 20, 20), seed=0, obs_noise=None):
    inst = P.ProblemInstance.from_case(setup, case, eps)
    colloc = P.sample(inst, *n, seed)
    obs = None if obs_noise is None else P.observations(inst, colloc.interior, obs_noise, seed)
    return inst, L.prepare(inst, colloc, obs)


@pytest.mark.parametrize("case", [1, 2, 3])
@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-20, 0.0])
def test_exact_solution_residual_2d(case, eps):
    inst, data = setup_data("I", case, eps)
    total, br = L.apfos_loss_2d(P.ExactModel(inst), data)
    assert total < 1e-16
    assert set(br.terms) == {"interior", "perp_grad", "par_grad", "dirichlet", "neumann_phi", "neumann_aux"}


@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-20])
def test_exact_solution_residual_3d(eps):
    inst, data = setup_data("II", 2, eps, n=(60, 40, 40))
    total, _ = L.apfos_loss_3d(P.ExactModel(inst), data)
    assert total < 1e-16
    assert data.fallback == 40  # b is along z on both Neumann faces


def test_zero_model_zero_data_gives_zero():
    _, data = setup_data()
    data = replace(data, f=np.zeros_like(data.f), g=np.zeros_like(data.g))
    zero = lambda *c: c[0] * 0.0
    total, br = L.apfos_loss_2d(FnModel(zero, zero, zero), data)
    assert total == 0.0


def test_weight_linearity_and_total():
    inst, data = setup_data("I", 2, 1e-2)
    sizes = (2, 6, 3)
    model = N.NetworkModel(sizes, N.init_params(sizes, 0))
    w = L.LossWeights.forward(len(data.dirichlet))
    t1, b1 = L.apfos_loss_2d(model, data, w)
    t2, b2 = L.apfos_loss_2d(model, data, replace(w, dirichlet=2 * w.dirichlet))
    assert b1.terms == b2.terms
    assert b2.weights["dirichlet"] == 2 * b1.weights["dirichlet"]
    assert t2 - t1 == pytest.approx(w.dirichlet * b1.terms["dirichlet"], rel=1e-12)
    assert b1.weighted_sum() == pytest.approx(t1, rel=1e-14)


def test_default_forward_weights():
    _, data = setup_data(n=(10, 30, 8))
    _, br = L.apfos_loss_2d(FnModel(*(lambda X, Z: X * Z,) * 3), data)
    assert br.weights["dirichlet"] == 30.0 and br.weights["neumann_phi"] == 1.0
    assert br.weights["neumann_aux"] == 1.0 and br.weights["interior"] == 1.0


def test_arity_errors():
    _, data = setup_data()
    f = lambda X, Z: X
    with pytest.raises(ValueError, match="outputs"):
        L.apfos_loss_2d(FnModel(f, f), data)
    with pytest.raises(ValueError, match="outputs"):
        L.nonap_loss_2d(FnModel(f, f, f), data)
    with pytest.raises(ValueError, match="3D"):
        L.apfos_loss_3d(FnModel(f, f, f), data)


def test_reduction_of_aligned_3d_to_2d():
    """A z-invariant 3D setting with b = e_z reproduces the aligned 2D terms."""
    _, d2 = setup_data("I", 1, 0.3, n=(30, 10, 10))
    psi = lambda X, Z: jt.sin(X * 2.0) * jt.cos(Z) + X
    xi = lambda X, Z: X * Z
    zeta = lambda X, Z: jt.exp(X - Z)
    m2 = FnModel(psi, xi, zeta)

    def lift(a, y=0.5):
        return np.insert(a, 1, y, axis=1)

    def rows(n, v):
        return np.tile(v, (n, 1)).astype(float)

    n_f, n_d, n_n = d2.counts
    d3 = L.LossData(
        dim=3, eps=d2.eps, interior=lift(d2.interior), dirichlet=lift(d2.dirichlet),
        neumann=lift(d2.neumann), normals=lift(d2.normals, 0.0), f=d2.f, g=d2.g,
        b=rows(n_f, [0, 0, 1]), perp=[rows(n_f, [1, 0, 0]), rows(n_f, [0, 1, 0])],
        div_b=np.zeros(n_f), div_perp=[np.zeros(n_f), np.zeros(n_f)],
        b_n=rows(n_n, [0, 0, 1]), perp_n=[rows(n_n, [1, 0, 0]), rows(n_n, [0, 1, 0])],
    )
    # 2D perp is (-1, 0) while the 3D first perpendicular is (1, 0, 0)
    m3 = FnModel(lambda X, Y, Z: psi(X, Z), lambda X, Y, Z: -xi(X, Z),
                 lambda X, Y, Z: X * 0.0, lambda X, Y, Z: zeta(X, Z))
    t2, b2 = L.apfos_loss_2d(m2, d2)
    t3, b3 = L.apfos_loss_3d(m3, d3)
    for k in b2.terms:
        assert b3.terms[k] == pytest.approx(b2.terms[k], rel=1e-13, abs=1e-15)


def test_nonap_exact_residual():
    inst, data = setup_data("I", 1, 1.0)
    total, br = L.nonap_loss_2d(P.ExactModel(inst, "nonap"), data)
    assert total < 1e-14


def test_nonap_eps_zero_ignores_forcing():
    _, data = setup_data("I", 2, 0.0)
    sizes = (2, 5, 1)
    model = N.NetworkModel(sizes, N.init_params(sizes, 1))
    _, a = L.nonap_loss_2d(model, data)
    _, b = L.nonap_loss_2d(model, replace(data, f=data.f * 7.0 + 1.0))
    assert a.terms["interior"] == b.terms["interior"]


def test_nonap_dirichlet_linearity():
    _, data = setup_data("I", 1, 1e-2)
    sizes = (2, 5, 1)
    model = N.NetworkModel(sizes, N.init_params(sizes, 2))
    w = L.LossWeights.forward(len(data.dirichlet))
    t1, b1 = L.nonap_loss_2d(model, data, w)
    t2, _ = L.nonap_loss_2d(model, data, replace(w, dirichlet=3 * w.dirichlet))
    assert t2 - t1 == pytest.approx(2 * w.dirichlet * b1.terms["dirichlet"], rel=1e-12)


@pytest.mark.parametrize("eps", [1.0, 1e-2])
def test_ident_exact_residual(eps):
    inst, data = setup_data("I", 2, eps, n=(60, 0, 20), obs_noise=0.0)
    total, br = L.ident_apfos_loss_2d(P.ExactModel(inst), np.log(eps), data)
    assert "dirichlet" not in br.terms
    assert br.terms["observation"] == 0.0
    for k, v in br.terms.items():
        assert v < 1e-16, k


def test_ident_default_weights():
    _, data = setup_data("I", 1, 1.0, n=(50, 0, 12), obs_noise=0.0)
    f = lambda X, Z: X * Z
    _, br = L.ident_apfos_loss_2d(FnModel(f, f, f), 0.0, data)
    assert br.weights == {"interior": 1.0, "perp_grad": 1.0, "par_grad": 50.0,
                          "neumann_phi": 12.0, "neumann_aux": 1.0, "observation": 50.0}
    _, br = L.ident_nonap_loss_2d(FnModel(f), 0.0, data)
    assert br.weights == {"interior": 50.0, "neumann_phi": 12.0, "observation": 50.0}


def test_ident_nonap_exact_residual():
    inst, data = setup_data("I", 1, 1.0, n=(60, 0, 20), obs_noise=0.0)
    _, br = L.ident_nonap_loss_2d(P.ExactModel(inst, "nonap"), 0.0, data)
    assert br.terms["interior"] < 1e-14 and br.terms["neumann_phi"] < 1e-14
    assert br.terms["observation"] == 0.0


@pytest.mark.parametrize("fn,n_out", [(L.ident_apfos_loss_2d, 3), (L.ident_nonap_loss_2d, 1)])
def test_ident_log_eps_derivative(fn, n_out):
    _, data = setup_data("I", 2, 1e-2, n=(30, 0, 10), obs_noise=0.01)
    sizes = (2, 6, n_out)
    model = N.NetworkModel(sizes, N.init_params(sizes, 3))
    s0 = np.log(0.05)
    tape = ad.Tape([s0])
    total, _ = fn(model, tape.params[0], data)
    g = tape.backward(total)[0]
    h = 1e-6
    fd = (fn(model, s0 + h, data)[0] - fn(model, s0 - h, data)[0]) / (2 * h)
    assert g == pytest.approx(fd, rel=1e-5)


def test_ident_requires_observations():
    _, data = setup_data()
    f = lambda X, Z: X
    with pytest.raises(ValueError, match="observation"):
        L.ident_apfos_loss_2d(FnModel(f, f, f), 0.0, data)
    with pytest.raises(ValueError, match="observation"):
        L.ident_nonap_loss_2d(FnModel(f), 0.0, replace(data, obs=np.zeros(0)))


def test_observations_must_sit_on_interior_points():
    inst = P.ProblemInstance.from_case("I", 1, 1.0)
    colloc = P.sample(inst, 10, 4, 4, 0)
    obs = P.observations(inst, colloc.interior[::-1], 0.0, 0)
    with pytest.raises(ValueError, match="interior"):
        L.prepare(inst, colloc, obs)


def test_forward_and_identification_share_code_path():
    inst, data = setup_data("I", 2, 1e-2, n=(40, 20, 20), obs_noise=0.0)
    sizes = (2, 8, 3)
    model = N.NetworkModel(sizes, N.init_params(sizes, 4))
    w = L.LossWeights.forward(len(data.dirichlet))
    tf, bf = L.apfos_loss_2d(model, data, w)
    ti, bi = L.ident_apfos_loss_2d(model, np.log(1e-2), data, w)  # observation weight 0
    assert ti == pytest.approx(tf, rel=1e-14)


def test_eps_never_divides():
    # eps = 0 is a valid input for every functional
    inst, data = setup_data("I", 3, 0.0)
    sizes = (2, 4, 3)
    t, _ = L.apfos_loss_2d(N.NetworkModel(sizes, N.init_params(sizes, 0)), data)
    assert np.isfinite(t)
    t, _ = L.nonap_loss_2d(N.NetworkModel((2, 4, 1), N.init_params((2, 4, 1), 0)), data)
    assert np.isfinite(t)


def test_evaluation_is_bit_reproducible():
    _, data = setup_data("I", 2, 1e-2)
    sizes = (2, 6, 3)
    theta = N.init_params(sizes, 0)

    def once():
        tape = ad.Tape(theta)
        total, _ = L.apfos_loss_2d(N.NetworkModel(sizes, tape.params), data)
        return float(total.value), tape.backward(total)

    (a, ga), (b, gb) = once(), once()
    assert a == b and np.array_equal(ga, gb)
