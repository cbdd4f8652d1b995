import numpy as np
import pytest
import scipy.linalg

from sublap.eigen import (
    ConvergenceError,
    domain_monotonicity,
    epsilon_path,
    principal_eigenpair,
    weighted_principal,
)
from sublap.fields import euclidean, heisenberg
from sublap.mesh import GridField, build_grid, mask_domain
from sublap.operators import (
    assemble_diagonal,
    assemble_stiffness,
    mass_matrix,
    rayleigh_quotient,
)


def dense_smallest(K, Vdiag, M):
    """Dense oracle: smallest eigenvalue of (K - V) u = lam M u."""
    mdiag = M.mat.diagonal()
    S = np.diag(1.0 / np.sqrt(mdiag))
    A = K.mat.toarray()
    if Vdiag is not None:
        A = A - np.diag(Vdiag.mat.diagonal())
    A = S @ A @ S
    return float(scipy.linalg.eigvalsh((A + A.T) / 2)[0])


def dense_weighted_principal(K, gdiag):
    """Dense oracle: lam = 1 / mu_max of the pencil G w = mu K w via Cholesky."""
    L = scipy.linalg.cholesky(K.mat.toarray(), lower=True)
    G = np.diag(gdiag.mat.diagonal())
    tmp = scipy.linalg.solve_triangular(L, G, lower=True)
    C = scipy.linalg.solve_triangular(L, tmp.T, lower=True)
    mu = scipy.linalg.eigvalsh((C + C.T) / 2)
    return 1.0 / float(mu[-1])


def unit_square_setup(h):
    g = build_grid([(0, 1), (0, 1)], h)
    K = assemble_stiffness(euclidean(2), g)
    M = mass_matrix(g)
    return g, K, M


def test_principal_matches_exact_discrete_eigenvalue():
    # the 5-point stencil eigenvalue on the unit square is known in closed
    # form: (8/h^2) sin^2(pi h / 2)
    g, K, M = unit_square_setup(1.0 / 32)
    res = principal_eigenpair(K, None, M, tol=1e-10)
    exact = (8.0 / g.h**2) * np.sin(np.pi * g.h / 2) ** 2
    assert abs(res.lam - exact) < 1e-8
    assert res.residual <= 1e-10
    assert res.positive
    assert abs(res.lam - 2 * np.pi**2) < 0.01 * 2 * np.pi**2


def test_eigenfield_m_normalized_and_sign_fixed():
    g, K, M = unit_square_setup(1.0 / 16)
    res = principal_eigenpair(K, None, M, tol=1e-10)
    u = res.eigenfield.values[g.interior_ids]
    assert abs(u @ (M.mat @ u) - 1.0) < 1e-10
    assert u[np.argmax(np.abs(u))] > 0


def test_potential_shift_identity():
    g, K, M = unit_square_setup(1.0 / 32)
    lam0 = principal_eigenpair(K, None, M, tol=1e-11).lam
    for c in (-3.0, 0.0, 5.0):
        Vd = assemble_diagonal(GridField.constant(g, c))
        lam = principal_eigenpair(K, Vd, M, tol=1e-11).lam
        assert abs(lam - (lam0 - c)) < 1e-10


def test_principal_matches_dense_on_heisenberg():
    g = build_grid([(-1, 1)] * 3, 0.25)
    K = assemble_stiffness(heisenberg(), g)
    M = mass_matrix(g)
    res = principal_eigenpair(K, None, M, tol=1e-9)
    lam_dense = dense_smallest(K, None, M)
    assert abs(res.lam - lam_dense) < 1e-8
    assert res.positive


def test_heisenberg_self_convergence_richardson():
    # first-order scheme: Richardson extrapolations from successive pairs
    # agree within 2%
    lams = []
    for h in (1.0 / 4, 1.0 / 8, 1.0 / 16):
        g = build_grid([(-1, 1)] * 3, h)
        K = assemble_stiffness(heisenberg(), g)
        M = mass_matrix(g)
        lams.append(principal_eigenpair(K, None, M, tol=1e-9).lam)
    rich1 = 2 * lams[1] - lams[0]
    rich2 = 2 * lams[2] - lams[1]
    assert abs(rich1 - rich2) < 0.02 * abs(rich2)


def test_non_convergence_reported():
    g, K, M = unit_square_setup(1.0 / 16)
    with pytest.raises(ConvergenceError):
        principal_eigenpair(K, None, M, tol=1e-14, max_iter=1)


def test_weighted_unit_weight_reduces_to_unweighted():
    g, K, M = unit_square_setup(1.0 / 16)
    direct = principal_eigenpair(K, None, M, tol=1e-10).lam
    G = assemble_diagonal(GridField.constant(g, 1.0))
    w = weighted_principal(K, G, tol=1e-10)
    assert abs(w.lam - direct) < 1e-8
    assert w.positive


def test_weighted_scaling_identity():
    g, K, M = unit_square_setup(1.0 / 16)
    G1 = assemble_diagonal(GridField.constant(g, 1.0))
    G2 = assemble_diagonal(GridField.constant(g, 2.0))
    w1 = weighted_principal(K, G1, tol=1e-10)
    w2 = weighted_principal(K, G2, tol=1e-10)
    assert abs(w2.lam - w1.lam / 2) < 1e-8 * max(1.0, w1.lam)
    diff = np.abs(w1.eigenfield.values - w2.eigenfield.values).max()
    assert diff < 1e-8


def test_weighted_sign_changing_matches_dense_oracle():
    g = build_grid([(0, 1), (0, 1)], 1.0 / 16)
    K = assemble_stiffness(euclidean(2), g)
    gfield = GridField.from_function(g, lambda pts: 1.0 - 2.0 * (pts[:, 0] > 0.5))
    G = assemble_diagonal(gfield)
    w = weighted_principal(K, G, tol=1e-9)
    lam_dense = dense_weighted_principal(K, G)
    assert abs(w.lam - lam_dense) < 1e-8


def test_weighted_nonpositive_weight_rejected():
    g, K, M = unit_square_setup(1.0 / 8)
    G = assemble_diagonal(GridField.constant(g, -1.0))
    with pytest.raises(ValueError, match="no positive principal eigenvalue"):
        weighted_principal(K, G)


def test_variational_lower_bound():
    g, K, M = unit_square_setup(1.0 / 16)
    lam = principal_eigenpair(K, None, M, tol=1e-10).lam
    rng = np.random.default_rng(12)
    for _ in range(50):
        f = GridField(g, rng.standard_normal(g.num_nodes))
        assert rayleigh_quotient(K, None, M, f) >= lam - 1e-8


def test_epsilon_path_euclidean_scaling_identity():
    g, K, M = unit_square_setup(1.0 / 16)
    lam0 = principal_eigenpair(K, None, M, tol=1e-11).lam
    path = epsilon_path(euclidean(2), g, None, [0.5, 0.25, 0.1], tol=1e-11)
    for eps, lam in path:
        assert abs(lam - (1 + eps) * lam0) < 1e-8 * max(1.0, lam0)


def test_epsilon_path_heisenberg_decreasing_with_dense_crosscheck():
    heis = heisenberg()
    g = build_grid([(-1, 1)] * 3, 0.25)
    eps_list = [0.5, 0.25, 0.1, 0.01, 0.0]
    path = epsilon_path(heis, g, None, eps_list, tol=1e-9)
    lams = [lam for _, lam in path]
    assert all(a > b for a, b in zip(lams, lams[1:]))
    # dense cross-check at every eps
    K = assemble_stiffness(heis, g)
    K_euc = assemble_stiffness(euclidean(3), g)
    M = mass_matrix(g)
    from sublap.operators import SparseOperator

    for (eps, lam) in path:
        mat = (K.mat + eps * K_euc.mat).tocsr()
        Keps = SparseOperator(grid=g, mat=((mat + mat.T) * 0.5).tocsr(), symmetric=True)
        assert abs(lam - dense_smallest(Keps, None, M)) < 1e-8


def test_epsilon_path_validates_ordering():
    g, K, M = unit_square_setup(1.0 / 8)
    with pytest.raises(ValueError):
        epsilon_path(euclidean(2), g, None, [0.1, 0.5])
    with pytest.raises(ValueError):
        epsilon_path(euclidean(2), g, None, [0.5, -0.1])


def test_domain_monotonicity_square_scaling():
    # Dirichlet eigenvalue scales like side^-2
    g = build_grid([(0, 1), (0, 1)], 1.0 / 32)
    inner = mask_domain(g, lambda pts: np.all(np.abs(pts - 0.5) <= 0.25 + 1e-12, axis=1))
    lams = domain_monotonicity(euclidean(2), None, [inner, g])
    assert lams[0] > lams[1]
    assert abs(lams[0] / lams[1] - 4.0) < 0.1 * 4.0


def test_domain_monotonicity_identical_masks():
    g = build_grid([(0, 1), (0, 1)], 1.0 / 16)
    lams = domain_monotonicity(euclidean(2), None, [g, g])
    assert abs(lams[0] - lams[1]) < 1e-9 * max(1.0, abs(lams[0]))


def test_domain_monotonicity_heisenberg_nested():
    heis = heisenberg()
    g = build_grid([(-1, 1)] * 3, 1.0 / 8)
    inner = mask_domain(g, lambda pts: np.all(np.abs(pts) <= 0.5 + 1e-12, axis=1))
    lams = domain_monotonicity(heis, None, [inner, g])
    assert lams[0] > lams[1]


def test_domain_monotonicity_rejects_non_nested():
    g = build_grid([(0, 1), (0, 1)], 1.0 / 16)
    left = mask_domain(g, lambda pts: pts[:, 0] <= 0.5)
    right = mask_domain(g, lambda pts: pts[:, 0] >= 0.5)
    with pytest.raises(ValueError, match="not nested"):
        domain_monotonicity(euclidean(2), None, [left, right])


def test_degeneracy_flag_on_disconnected_domain():
    # two identical disjoint squares: the ground state is (near) twofold
    # degenerate and the flag must fire; a single square must not set it
    g = build_grid([(0, 1), (0, 1)], 1.0 / 16)
    two = mask_domain(
        g, lambda pts: (pts[:, 0] <= 0.4375 + 1e-12) | (pts[:, 0] >= 0.5625 - 1e-12)
    )
    K = assemble_stiffness(euclidean(2), two)
    res = principal_eigenpair(K, None, mass_matrix(two), tol=1e-9)
    assert res.degenerate
    K1 = assemble_stiffness(euclidean(2), g)
    res1 = principal_eigenpair(K1, None, mass_matrix(g), tol=1e-9)
    assert not res1.degenerate
