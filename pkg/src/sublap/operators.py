"""Discrete first-order operators X_j and the quadratic form of H = sum X_j* X_j.

The sub-Laplacian is discretized through its quadratic form
K = sum_j B_j^T W B_j, which is symmetric PSD by construction and matches
the variational structure of the continuum operator.  B_j uses forward
differences, (X_j f)(p) ~ sum_k A[j][k](p) (f(p + h e_k) - f(p)) / h, with
quadrature rows at every non-exterior node whose forward neighbors all
exist and are non-exterior.  For the euclidean frame this reproduces the
standard 2n+1-point Laplacian stencil (scaled by h^{n-2}) entrywise, and
K annihilates constants exactly against matching boundary data.

Unknowns are interior nodes; Dirichlet data enters through the boundary
coupling block stored alongside each operator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import EXTERIOR, GridField

SYMMETRY_TOL = 1e-12


@dataclass(eq=False)
class SparseOperator:
    """Sparse matrix bound to a grid.

    `mat` has columns indexed by interior nodes; `boundary`, when present,
    is the companion block with columns indexed by boundary nodes (same
    rows), through which imposed Dirichlet values enter.  Rows are interior
    nodes for symmetric operators and quadrature rows (`row_ids`) for
    first-order operators.
    """

    grid: object
    mat: sp.csr_matrix
    symmetric: bool
    boundary: sp.csr_matrix = None
    row_ids: np.ndarray = None

    def __post_init__(self):
        self.mat = sp.csr_matrix(self.mat)
        if self.boundary is not None:
            self.boundary = sp.csr_matrix(self.boundary)
        if self.symmetric:
            scale = max(abs(self.mat).max(), 1e-300)
            asym = abs(self.mat - self.mat.T).max()
            if asym > SYMMETRY_TOL * max(scale, 1.0):
                raise ValueError(f"operator marked symmetric but |K - K^T| = {asym:g}")

    @property
    def shape(self):
        return self.mat.shape

    def apply(self, field):
        """Apply to a GridField, boundary values included; returns per-row values."""
        out = self.mat @ field.values[self.grid.interior_ids]
        if self.boundary is not None and self.grid.n_boundary:
            out = out + self.boundary @ field.values[self.grid.boundary_ids]
        return out

    def diag(self):
        return self.mat.diagonal()

    def inf_norm(self):
        return float(abs(self.mat).sum(axis=1).max()) if self.mat.nnz else 0.0


def quadrature_row_ids(grid):
    """Non-exterior nodes whose +e_k neighbor exists and is non-exterior for every axis."""
    dims = grid.dims
    n = grid.n
    ok = (grid.mask != EXTERIOR).reshape(dims)
    rows = ok.copy()
    for k in range(n):
        nb = np.zeros_like(ok)
        sl_src = [slice(None)] * n
        sl_dst = [slice(None)] * n
        sl_src[k] = slice(1, None)
        sl_dst[k] = slice(None, -1)
        nb[tuple(sl_dst)] = ok[tuple(sl_src)]
        rows &= nb
    return np.flatnonzero(rows.ravel())


def assemble_first_order(family, grid, j):
    """Discrete X_j (1 <= j <= m) as a quadrature-rows operator.

    Row r approximates (X_j f)(p_r); interior and boundary columns are
    split so imposed boundary values contribute through `boundary`.
    """
    if grid.n != family.n:
        raise ValueError(f"grid dimension {grid.n} != family dimension {family.n}")
    if not 1 <= j <= family.m:
        raise ValueError(f"field index {j} out of range 1..{family.m}")
    rows = quadrature_row_ids(grid)
    polys = family.coeffs[j - 1]
    pts = grid.points[rows]
    n_rows = rows.size
    data, ri, ci = [], [], []
    r_idx = np.arange(n_rows)
    for k in range(grid.n):
        if polys[k].is_zero:
            continue
        vals = polys[k].evaluate(pts) / grid.h
        nbr = rows + int(grid.strides[k])
        ri.append(r_idx)
        ci.append(nbr)
        data.append(vals)
        ri.append(r_idx)
        ci.append(rows)
        data.append(-vals)
    if data:
        full = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
            shape=(n_rows, grid.num_nodes),
        ).tocsc()
    else:
        full = sp.csc_matrix((n_rows, grid.num_nodes))
    mat = full[:, grid.interior_ids].tocsr()
    bnd = full[:, grid.boundary_ids].tocsr() if grid.n_boundary else None
    return SparseOperator(grid=grid, mat=mat, symmetric=False, boundary=bnd, row_ids=rows)


def assemble_stiffness(family, grid):
    """Stiffness form K = sum_j B_j^T W B_j with W = h^n I; symmetric PSD.

    f^T K f = h^n sum_rows sum_j |X_j f|^2 >= 0 exactly for zero boundary
    data; nonzero Dirichlet data enters through the boundary block.
    """
    if grid.n != family.n:
        raise ValueError(f"grid dimension {grid.n} != family dimension {family.n}")
    w = grid.h ** grid.n
    K = None
    Kb = None
    for j in range(1, family.m + 1):
        B = assemble_first_order(family, grid, j)
        KjI = (B.mat.T @ B.mat) * w
        K = KjI if K is None else K + KjI
        if B.boundary is not None:
            KjB = (B.mat.T @ B.boundary) * w
            Kb = KjB if Kb is None else Kb + KjB
    K = ((K + K.T) * 0.5).tocsr()
    return SparseOperator(grid=grid, mat=K, symmetric=True, boundary=Kb)


def assemble_diagonal(field):
    """Mass-weighted diagonal operator: diag entries h^n * field at interior nodes."""
    grid = field.grid
    w = grid.h ** grid.n
    vals = w * field.values[grid.interior_ids]
    mat = sp.diags(vals, format="csr")
    return SparseOperator(grid=grid, mat=mat, symmetric=True)


def mass_matrix(grid):
    """The mass matrix M = h^n I on interior nodes."""
    return assemble_diagonal(GridField.constant(grid, 1.0))


def rayleigh_quotient(K, Vdiag, M, f):
    """(f^T K f - f^T V f) / (f^T M f) over interior values of f."""
    fi = f.values[K.grid.interior_ids]
    den = fi @ (M.mat @ fi)
    if den <= 0.0:
        raise ValueError("zero-norm f: f^T M f must be positive")
    num = fi @ (K.mat @ fi)
    if Vdiag is not None:
        num -= fi @ (Vdiag.mat @ fi)
    return float(num / den)


def characteristic_boundary_diagnostic(family, grid, tol=1e-8):
    """Per boundary node, whether the normal component of the diffusion
    tensor exceeds tol (a non-characteristic-point indicator).

    Diagnostic only: the continuum regular-domain condition (boundary has
    non-characteristic points for H) has no computable discrete criterion,
    so this reports nu^T a(x) nu > tol per node with the outward normal nu
    taken along the axis directions pointing out of the domain.
    """
    flags = np.zeros(grid.n_boundary, dtype=bool)
    a_all = family.diffusion_tensor_batch(grid.points[grid.boundary_ids])
    scale = max(float(np.abs(a_all).max()), 1.0)
    for i, node in enumerate(grid.boundary_ids):
        multi = np.array(grid.multi_index(int(node)))
        best = 0.0
        for k in range(grid.n):
            for s in (-1, 1):
                j = multi[k] + s
                outward = not (0 <= j < grid.dims[k])
                if not outward:
                    nb = int(node) + s * int(grid.strides[k])
                    outward = grid.mask[nb] == EXTERIOR
                if outward:
                    best = max(best, float(a_all[i, k, k]))
        flags[i] = best > tol * scale
    return flags


def operator_to_triplet_text(op):
    """Coordinate-triplet dump: header with shape/nnz, then 1-based 'row col value' lines."""
    coo = op.mat.tocoo()
    lines = [f"# rows {coo.shape[0]} cols {coo.shape[1]} nnz {coo.nnz} symmetric {int(op.symmetric)}"]
    order = np.lexsort((coo.col, coo.row))
    for i in order:
        lines.append(f"{coo.row[i] + 1} {coo.col[i] + 1} {float(coo.data[i])!r}")
    return "\n".join(lines) + "\n"


def operator_from_triplet_text(text):
    """Inverse of operator_to_triplet_text (matrix block only, no grid binding)."""
    lines = text.strip().splitlines()
    header = lines[0].split()
    rows, cols = int(header[2]), int(header[4])
    ri, ci, vals = [], [], []
    for line in lines[1:]:
        a, b, v = line.split()
        ri.append(int(a) - 1)
        ci.append(int(b) - 1)
        vals.append(float(v))
    return sp.coo_matrix((vals, (ri, ci)), shape=(rows, cols)).tocsr()
