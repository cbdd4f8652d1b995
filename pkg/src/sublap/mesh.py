"""Uniform grids over boxes, domain masks, field sampling and quadrature.

Nodes are laid out in C order over `dims`; node classes are interior,
Dirichlet boundary, or exterior.  Every interior node has all 2n axis
neighbors present as non-exterior nodes, so interior stencils never need
one-sided closure.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

EXTERIOR = 0
BOUNDARY = 1
INTERIOR = 2


@dataclass(eq=False)
class GridDomain:
    origin: np.ndarray          # (n,)
    h: float
    dims: tuple                 # node counts per axis
    mask: np.ndarray            # (N,) uint8 in {EXTERIOR, BOUNDARY, INTERIOR}

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.n = self.origin.shape[0]
        self.dims = tuple(int(d) for d in self.dims)
        self.num_nodes = int(np.prod(self.dims))
        if self.mask.shape != (self.num_nodes,):
            raise ValueError("mask length must equal the node count")
        # C-order strides for index arithmetic
        strides = [1] * self.n
        for k in range(self.n - 2, -1, -1):
            strides[k] = strides[k + 1] * self.dims[k + 1]
        self.strides = np.array(strides, dtype=np.int64)
        self.interior_ids = np.flatnonzero(self.mask == INTERIOR)
        self.boundary_ids = np.flatnonzero(self.mask == BOUNDARY)
        self.n_interior = self.interior_ids.size
        self.n_boundary = self.boundary_ids.size
        self._points = None
        # node id -> position within interior_ids / boundary_ids (-1 elsewhere)
        self.interior_index = np.full(self.num_nodes, -1, dtype=np.int64)
        self.interior_index[self.interior_ids] = np.arange(self.n_interior)
        self.boundary_index = np.full(self.num_nodes, -1, dtype=np.int64)
        self.boundary_index[self.boundary_ids] = np.arange(self.n_boundary)

    @property
    def points(self):
        """Node coordinates, shape (N, n), cached."""
        if self._points is None:
            grids = np.meshgrid(
                *[self.origin[k] + self.h * np.arange(self.dims[k]) for k in range(self.n)],
                indexing="ij",
            )
            self._points = np.column_stack([g.ravel() for g in grids])
        return self._points

    def multi_index(self, node_id):
        return np.unravel_index(node_id, self.dims)

    def node_id(self, multi):
        return int(np.ravel_multi_index(multi, self.dims))

    def node_coords(self, node_id):
        return self.points[node_id]

    def nearest_node(self, x):
        """Id of the grid node nearest to x (clipped into the box)."""
        x = np.asarray(x, dtype=float)
        idx = np.rint((x - self.origin) / self.h).astype(np.int64)
        idx = np.clip(idx, 0, np.array(self.dims) - 1)
        return self.node_id(tuple(idx))

    def neighbor_ids(self, node_id):
        """2n axis neighbors (missing ones omitted)."""
        multi = np.array(self.multi_index(node_id))
        out = []
        for k in range(self.n):
            for s in (-1, 1):
                j = multi[k] + s
                if 0 <= j < self.dims[k]:
                    out.append(node_id + s * int(self.strides[k]))
        return out

    def is_outer_face(self, node_ids):
        """True per node when some index sits on the outermost grid layer."""
        node_ids = np.asarray(node_ids)
        multi = np.unravel_index(node_ids, self.dims)
        hit = np.zeros(node_ids.shape, dtype=bool)
        for k in range(self.n):
            hit |= (multi[k] == 0) | (multi[k] == self.dims[k] - 1)
        return hit

    def with_mask(self, mask):
        return GridDomain(origin=self.origin, h=self.h, dims=self.dims, mask=mask)


def build_grid(box, h):
    """Uniform grid over a box; outermost layer is the Dirichlet boundary.

    box is a sequence of (lo, hi) pairs; nodes sit at lo + i*h with the
    per-axis count from rounding (hi - lo)/h.
    """
    box = [(float(lo), float(hi)) for lo, hi in box]
    h = float(h)
    if h <= 0:
        raise ValueError("h must be positive")
    dims = []
    for lo, hi in box:
        if hi <= lo:
            raise ValueError(f"box side [{lo}, {hi}] is empty")
        if h > hi - lo:
            raise ValueError(f"h={h} larger than box extent {hi - lo}")
        dims.append(int(round((hi - lo) / h)) + 1)
    origin = np.array([lo for lo, _ in box])
    dims = tuple(dims)
    n = len(dims)
    mask = np.full(int(np.prod(dims)), INTERIOR, dtype=np.uint8)
    multi = np.unravel_index(np.arange(mask.size), dims)
    outer = np.zeros(mask.size, dtype=bool)
    for k in range(n):
        outer |= (multi[k] == 0) | (multi[k] == dims[k] - 1)
    mask[outer] = BOUNDARY
    return GridDomain(origin=origin, h=h, dims=dims, mask=mask)


def _predicate_values(grid, predicate):
    pts = grid.points
    try:
        vals = np.asarray(predicate(pts))
        if vals.shape == (grid.num_nodes,):
            return vals.astype(bool)
    except Exception:
        pass
    return np.array([bool(predicate(p)) for p in pts])


def mask_domain(grid, predicate):
    """Mask a grid to the nodes where `predicate` holds.

    Interior nodes are predicate-true nodes all of whose 2n axis neighbors
    exist and are predicate-true; the remaining predicate-true nodes are
    the Dirichlet boundary.  An all-true predicate reproduces build_grid's
    mask (the outermost layer lacks off-grid neighbors).
    """
    P = _predicate_values(grid, predicate)
    dims = grid.dims
    n = grid.n
    Pn = P.reshape(dims)
    inter = Pn.copy()
    for k in range(n):
        shifted_lo = np.zeros_like(Pn)
        shifted_hi = np.zeros_like(Pn)
        sl_lo = [slice(None)] * n
        sl_hi = [slice(None)] * n
        sl_lo[k] = slice(1, None)
        sl_hi[k] = slice(None, -1)
        shifted_lo[tuple(sl_hi)] = Pn[tuple(sl_lo)]   # neighbor at +e_k
        shifted_hi[tuple(sl_lo)] = Pn[tuple(sl_hi)]   # neighbor at -e_k
        inter &= shifted_lo & shifted_hi
    interior = inter.ravel()
    boundary = P & ~interior
    if not interior.any():
        raise ValueError("empty interior: no predicate-true node has all neighbors predicate-true")
    mask = np.full(grid.num_nodes, EXTERIOR, dtype=np.uint8)
    mask[boundary] = BOUNDARY
    mask[interior] = INTERIOR
    return grid.with_mask(mask)


@dataclass(eq=False)
class GridField:
    """One real value per grid node; exterior nodes are pinned to zero."""

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.shape != (self.grid.num_nodes,):
            raise ValueError("value count must match node count")
        self.values[self.grid.mask == EXTERIOR] = 0.0

    @staticmethod
    def from_function(grid, fn):
        pts = grid.points
        try:
            vals = np.asarray(fn(pts), dtype=float)
            if vals.shape != (grid.num_nodes,):
                raise ValueError
        except Exception:
            vals = np.array([float(fn(p)) for p in pts])
        return GridField(grid, vals)

    @staticmethod
    def constant(grid, value):
        return GridField(grid, np.full(grid.num_nodes, float(value)))

    @staticmethod
    def zeros(grid):
        return GridField(grid, np.zeros(grid.num_nodes))

    def interior(self):
        return self.values[self.grid.interior_ids]

    def boundary(self):
        return self.values[self.grid.boundary_ids]

    def copy(self):
        return GridField(self.grid, self.values.copy())

    def __add__(self, other):
        return GridField(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return GridField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


def integrate(field):
    """h^n times the sum over interior nodes (boundary data is Dirichlet)."""
    g = field.grid
    return float(g.h ** g.n * field.values[g.interior_ids].sum())


# ---------------------------------------------------------------------------
# serialization


def field_to_csv(field, path_or_buf):
    """CSV rows: index tuple, coordinates, value."""
    g = field.grid
    close = False
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        buf = open(path_or_buf, "w")
        close = True
    else:
        buf = path_or_buf
    try:
        idx_names = ",".join(f"i{k}" for k in range(g.n))
        coord_names = ",".join(f"x{k}" for k in range(g.n))
        buf.write(f"{idx_names},{coord_names},value\n")
        multi = np.unravel_index(np.arange(g.num_nodes), g.dims)
        pts = g.points
        for node in range(g.num_nodes):
            idx = ",".join(str(int(multi[k][node])) for k in range(g.n))
            coords = ",".join(repr(float(pts[node, k])) for k in range(g.n))
            buf.write(f"{idx},{coords},{float(field.values[node])!r}\n")
    finally:
        if close:
            buf.close()


def field_from_csv(grid, path_or_buf):
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        text = open(path_or_buf).read()
    else:
        text = path_or_buf.read()
    lines = text.strip().splitlines()[1:]
    values = np.zeros(grid.num_nodes)
    for line in lines:
        parts = line.split(",")
        multi = tuple(int(v) for v in parts[: grid.n])
        values[grid.node_id(multi)] = float(parts[-1])
    return GridField(grid, values)


def field_to_binary(field, path):
    """Flat dump: int64 n, int64 dims, float64 origin, float64 h, row-major values."""
    g = field.grid
    with open(path, "wb") as fh:
        fh.write(np.array([g.n], dtype=np.int64).tobytes())
        fh.write(np.array(g.dims, dtype=np.int64).tobytes())
        fh.write(np.asarray(g.origin, dtype=np.float64).tobytes())
        fh.write(np.array([g.h], dtype=np.float64).tobytes())
        fh.write(field.values.astype(np.float64).tobytes())


def field_from_binary(grid, path):
    raw = open(path, "rb").read()
    n = int(np.frombuffer(raw[:8], dtype=np.int64)[0])
    if n != grid.n:
        raise ValueError("dimension mismatch between file and grid")
    off = 8
    dims = tuple(np.frombuffer(raw[off : off + 8 * n], dtype=np.int64))
    off += 8 * n
    if dims != grid.dims:
        raise ValueError("dims mismatch between file and grid")
    off += 8 * n  # skip origin
    off += 8      # skip h
    values = np.frombuffer(raw[off:], dtype=np.float64)
    return GridField(grid, values)
