import numpy as np
import pytest
import scipy.sparse as sp

from sublap.fields import euclidean, grushin, heisenberg
from sublap.mesh import GridField, build_grid
from sublap.operators import (
    assemble_diagonal,
    assemble_first_order,
    assemble_stiffness,
    mass_matrix,
    operator_from_triplet_text,
    operator_to_triplet_text,
    rayleigh_quotient,
)


def five_point_laplacian(n_per_axis, h, ndim):
    """Independent construction of the standard 2n+1-point stencil matrix."""
    N = n_per_axis
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(N, N))
    I = sp.identity(N)
    if ndim == 1:
        L = T
    elif ndim == 2:
        L = sp.kron(T, I) + sp.kron(I, T)
    else:
        L = (sp.kron(sp.kron(T, I), I) + sp.kron(sp.kron(I, T), I)
             + sp.kron(sp.kron(I, I), T))
    return (L * h ** (ndim - 2)).tocsr()


def test_first_order_euclidean_exact_on_linear():
    g = build_grid([(0, 1)], 0.125)
    B = assemble_first_order(euclidean(1), g, 1)
    f = GridField.from_function(g, lambda pts: pts[:, 0])
    vals = B.apply(f)
    assert np.allclose(vals, 1.0, atol=1e-13)


def test_first_order_heisenberg_t_derivative():
    g = build_grid([(0.5, 2.5)] * 3, 0.25)
    heis = heisenberg()
    B1 = assemble_first_order(heis, g, 1)
    B2 = assemble_first_order(heis, g, 2)
    f = GridField.from_function(g, lambda pts: pts[:, 2])
    v1 = B1.apply(f)
    v2 = B2.apply(f)
    # X1 f = -y/2, X2 f = x/2 exactly for linear f
    pts = g.points[B1.row_ids]
    assert np.allclose(v1, -pts[:, 1] / 2, atol=1e-12)
    assert np.allclose(v2, pts[:, 0] / 2, atol=1e-12)


def test_first_order_grushin_vanishes_on_axis():
    g = build_grid([(-0.5, 0.5), (-0.5, 0.5)], 0.25)
    B2 = assemble_first_order(grushin(), g, 2)
    f = GridField.from_function(g, lambda pts: pts[:, 1])
    vals = B2.apply(f)
    pts = g.points[B2.row_ids]
    on_axis = np.abs(pts[:, 0]) < 1e-12
    assert np.all(np.abs(vals[on_axis]) < 1e-13)


def test_first_order_index_validation():
    g = build_grid([(0, 1), (0, 1)], 0.25)
    with pytest.raises(ValueError):
        assemble_first_order(euclidean(2), g, 0)
    with pytest.raises(ValueError):
        assemble_first_order(euclidean(2), g, 3)
    with pytest.raises(ValueError):
        assemble_first_order(euclidean(3), g, 1)


def test_stiffness_euclidean_reduces_to_standard_stencil():
    for ndim in (1, 2, 3):
        h = 0.25
        g = build_grid([(0, 1)] * ndim, h)
        K = assemble_stiffness(euclidean(ndim), g)
        L = five_point_laplacian(g.dims[0] - 2, h, ndim)
        diff = abs(K.mat - L).max()
        assert diff <= 1e-12 * abs(L).max()


def test_stiffness_symmetric_and_psd():
    rng = np.random.default_rng(4)
    for fam, box in ((euclidean(2), [(0, 1)] * 2), (heisenberg(), [(-1, 1)] * 3),
                     (grushin(), [(-1, 1)] * 2)):
        g = build_grid(box, 0.25)
        K = assemble_stiffness(fam, g)
        asym = abs(K.mat - K.mat.T).max()
        assert asym <= 1e-12 * max(1.0, abs(K.mat).max())
        for _ in range(50):
            v = rng.standard_normal(g.n_interior)
            q = v @ (K.mat @ v)
            assert q >= -1e-10 * (v @ v)


def test_stiffness_annihilates_constants():
    for fam, box in ((euclidean(2), [(0, 1)] * 2), (heisenberg(), [(-1, 1)] * 3)):
        g = build_grid(box, 0.25)
        K = assemble_stiffness(fam, g)
        ones = GridField.constant(g, 1.0)
        assert np.abs(K.apply(ones)).max() <= 1e-12 * abs(K.mat).max()


def test_stiffness_heisenberg_positive_energy():
    g = build_grid([(-1, 1)] * 3, 0.25)
    K = assemble_stiffness(heisenberg(), g)
    vals = np.zeros(g.num_nodes)
    vals[g.interior_ids] = 1.0
    f = GridField(g, vals)
    fi = f.values[g.interior_ids]
    assert fi @ (K.mat @ fi) > 0


def test_adjoint_consistency():
    g = build_grid([(-1, 1)] * 3, 0.25)
    B = assemble_first_order(heisenberg(), g, 1)
    rng = np.random.default_rng(9)
    w = g.h ** g.n
    for _ in range(10):
        f = rng.standard_normal(g.n_interior)
        v = rng.standard_normal(B.mat.shape[0])
        lhs = (B.mat @ f) @ (w * v)
        rhs = f @ (B.mat.T @ (w * v))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_rayleigh_quotient_classical_value():
    g = build_grid([(0, 1), (0, 1)], 1.0 / 32)
    K = assemble_stiffness(euclidean(2), g)
    M = mass_matrix(g)
    f = GridField.from_function(g, lambda pts: np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]))
    q = rayleigh_quotient(K, None, M, f)
    assert abs(q - 2 * np.pi**2) < 0.02 * 2 * np.pi**2


def test_rayleigh_quotient_potential_shift_exact():
    g = build_grid([(0, 1), (0, 1)], 0.125)
    K = assemble_stiffness(euclidean(2), g)
    M = mass_matrix(g)
    V = assemble_diagonal(GridField.constant(g, 3.7))
    rng = np.random.default_rng(2)
    f = GridField(g, rng.standard_normal(g.num_nodes))
    q0 = rayleigh_quotient(K, None, M, f)
    qV = rayleigh_quotient(K, V, M, f)
    assert abs(qV - (q0 - 3.7)) <= 1e-12 * max(1.0, abs(q0))


def test_rayleigh_quotient_zero_norm_rejected():
    g = build_grid([(0, 1), (0, 1)], 0.25)
    K = assemble_stiffness(euclidean(2), g)
    M = mass_matrix(g)
    with pytest.raises(ValueError):
        rayleigh_quotient(K, None, M, GridField.zeros(g))


def test_diagonal_mass_matrix():
    g = build_grid([(0, 1), (0, 1)], 0.25)
    M = assemble_diagonal(GridField.constant(g, 1.0))
    assert np.allclose(M.mat.toarray(), g.h**2 * np.eye(g.n_interior))


def test_diagonal_zero_and_indefinite():
    g = build_grid([(0, 1), (0, 1)], 0.25)
    Z = assemble_diagonal(GridField.zeros(g))
    assert abs(Z.mat).max() == 0.0
    gfield = GridField.from_function(g, lambda pts: 1.0 - 2.0 * (pts[:, 0] > 0.5))
    D = assemble_diagonal(gfield)
    d = D.mat.diagonal()
    assert d.min() < 0 < d.max()


def _bump(pts):
    r2 = np.sum((pts / 0.8) ** 2, axis=1)
    out = np.zeros(pts.shape[0])
    inside = r2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _bump_grad(pts):
    r2 = np.sum((pts / 0.8) ** 2, axis=1)
    vals = _bump(pts)
    grad = np.zeros_like(pts)
    inside = r2 < 1.0
    coef = -2.0 / (1.0 - r2[inside]) ** 2 / 0.8**2
    grad[inside] = vals[inside, None] * coef[:, None] * pts[inside]
    return grad


def test_divergence_form_consistency_at_least_first_order():
    # f^T K f -> int a^{ik} d_i f d_k f with O(h) error (the observed rate
    # is better: the forward-difference errors partly cancel in the
    # quadratic form); oracle by fine Riemann quadrature of the analytic
    # integrand
    heis = heisenberg()
    fine = build_grid([(-1, 1)] * 3, 1.0 / 32)
    pts = fine.points[fine.interior_ids]
    a = heis.diffusion_tensor_batch(pts)
    gr = _bump_grad(pts)
    integrand = np.einsum("pik,pi,pk->p", a, gr, gr)
    exact = fine.h**3 * integrand.sum()
    errs = []
    for h in (1.0 / 4, 1.0 / 8, 1.0 / 16):
        g = build_grid([(-1, 1)] * 3, h)
        K = assemble_stiffness(heis, g)
        f = GridField.from_function(g, _bump)
        fi = f.values[g.interior_ids]
        errs.append(abs(fi @ (K.mat @ fi) - exact))
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[1] >= 1.5
    assert errs[1] / errs[2] >= 1.5


def test_triplet_text_round_trip():
    g = build_grid([(0, 1), (0, 1)], 0.25)
    K = assemble_stiffness(euclidean(2), g)
    text = operator_to_triplet_text(K)
    assert text.startswith("# rows")
    back = operator_from_triplet_text(text)
    assert abs(K.mat - back).max() == 0.0


def test_characteristic_boundary_diagnostic():
    from sublap.operators import characteristic_boundary_diagnostic

    # euclidean: every boundary normal is non-characteristic
    g = build_grid([(0, 1), (0, 1)], 0.25)
    flags = characteristic_boundary_diagnostic(euclidean(2), g)
    assert flags.all()
    # grushin on a box crossing {x=0}: the top/bottom boundary nodes on the
    # degenerate line have a(x) nu . nu = x^2 = 0 there
    gg = build_grid([(-0.5, 0.5), (0, 1)], 0.25)
    flags = characteristic_boundary_diagnostic(grushin(), gg)
    pts = gg.points[gg.boundary_ids]
    on_axis_topbottom = (np.abs(pts[:, 0]) < 1e-12) & ((pts[:, 1] == 0) | (pts[:, 1] == 1))
    assert not flags[on_axis_topbottom].any()
    assert flags[~on_axis_topbottom].all()
