"""Carnot-Caratheodory distance, metric balls, and measure/inequality probes.

Distances are estimated in two stages.  Stage one is Dijkstra over grid
nodes: from each node, one Euler step of duration h along sampled unit
controls reaches neighbors (snapped to the nearest node, with the edge
duration inflated by snap-distance / sigma_min(A)); in addition, square
commutator loops exp(sX_i) exp(sX_j) exp(-sX_i) exp(-sX_j) of duration 4s
provide sound upper-bound edges along bracket directions, without which
no grid walk can advance along a bracket direction at sub-unit radius
(the per-step drift h*r/2 always snaps away).  Stage two re-parameterizes
the seed path as piecewise-constant controls and shrinks its duration by
projected-gradient feasibility restoration; durations never increase.

Every edge corresponds to a genuinely horizontal motion plus an explicit
time surcharge, so the graph value is an upper bound on d up to the
reported defect.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .fields import lie_bracket
from .mesh import EXTERIOR, GridField
from .operators import assemble_first_order

SIGMA_FLOOR = 1e-8        # relative floor on sigma_min(A) before an edge is rejected
SNAP_ZERO = 1e-12
DEFAULT_DIRECTIONS = 32
DEFAULT_COMM_SCALES = (1, 2, 4, 8, 16)  # commutator loop areas in units of h


class CCUnreachableError(RuntimeError):
    """Target disconnected under snap; carries the largest reached ball."""

    def __init__(self, message, reached_radius, reached_count):
        super().__init__(message)
        self.reached_radius = reached_radius
        self.reached_count = reached_count


@dataclass(eq=False)
class PathResult:
    """A horizontal path: total duration T, waypoints, per-segment unit controls."""

    T: float
    waypoints: np.ndarray      # (S+1, n)
    controls: np.ndarray       # (S, m)
    durations: np.ndarray      # (S,)
    defect: float
    stalled: bool = False
    notes: list = field(default_factory=list)

    def to_csv(self):
        n = self.waypoints.shape[1]
        lines = [",".join([f"x{k}" for k in range(n)] + ["t_cum"])]
        t = 0.0
        for i, w in enumerate(self.waypoints):
            lines.append(",".join(repr(float(v)) for v in w) + f",{t!r}")
            if i < len(self.durations):
                t += float(self.durations[i])
        return "\n".join(lines) + "\n"


def unit_controls(m, directions):
    """`directions` points on the unit sphere of R^m, deterministic."""
    if directions < 2:
        raise ValueError("need at least 2 directions")
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        ang = 2.0 * np.pi * np.arange(directions) / directions
        return np.column_stack([np.cos(ang), np.sin(ang)])
    rng = np.random.default_rng(0xC0FFEE)
    axes = np.vstack([np.eye(m), -np.eye(m)])
    extra = rng.standard_normal((max(directions - 2 * m, 0), m))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([axes, extra])[:directions]


def _sigma_min_batch(family, points):
    A = family.eval_coefficients_batch(points)
    return np.linalg.svd(A, compute_uv=False).min(axis=1)


class _GraphContext:
    """Per-(family, grid) data shared by distance and ball queries."""

    def __init__(self, family, grid, directions, comm_scales, step_scales=(1,)):
        self.family = family
        self.grid = grid
        self.h = grid.h
        self.coords = grid.points
        self.F = unit_controls(family.m, directions)
        self.step_scales = np.asarray(step_scales, dtype=float)
        self.A_all = family.eval_coefficients_batch(self.coords)
        self.sigma = _sigma_min_batch(family, self.coords)
        self.sigma_floor = SIGMA_FLOOR * max(float(self.sigma.max()), 1.0)
        self.dims = np.array(grid.dims, dtype=np.int64)
        self.strides = grid.strides
        self.ok_node = grid.mask != EXTERIOR
        # nonzero brackets [X_i, X_j], i < j, evaluated everywhere
        self.pairs = []
        self.bracket_vals = []
        for i in range(family.m):
            for j in range(i + 1, family.m):
                br = lie_bracket(family.coeffs[i], family.coeffs[j])
                if all(p.is_zero for p in br):
                    continue
                vals = np.column_stack([p.evaluate(self.coords) for p in br])
                self.pairs.append((i, j))
                self.bracket_vals.append(vals)
        self.comm_s = np.sqrt(np.array(comm_scales, dtype=float) * self.h) if self.pairs else np.array([])

    def _snap(self, targets_float):
        """Round to nodes; returns (ids, snap distance, valid mask)."""
        idx = np.rint((targets_float - self.grid.origin) / self.h).astype(np.int64)
        valid = np.all((idx >= 0) & (idx < self.dims), axis=1)
        idx_c = np.clip(idx, 0, self.dims - 1)
        ids = idx_c @ self.strides
        valid &= self.ok_node[ids]
        snapped = self.grid.origin + idx_c * self.h
        s = np.linalg.norm(targets_float - snapped, axis=1)
        return ids, s, valid

    def edges_from(self, p):
        """(target ids, durations, kind, info, scale) for all edges out of node p."""
        out_ids, out_w, out_kind, out_info, out_scale = [], [], [], [], []
        x = self.coords[p]
        vel = self.F @ self.A_all[p]                  # (D, n)
        for mult in self.step_scales:
            dt = mult * self.h
            tf = x + dt * vel
            ids, s, valid = self._snap(tf)
            valid &= ids != p
            sig = self.sigma[ids]
            valid &= (s <= SNAP_ZERO) | (sig > self.sigma_floor)
            w = dt + np.where(s <= SNAP_ZERO, 0.0, s / np.maximum(sig, self.sigma_floor))
            sel = np.flatnonzero(valid)
            out_ids.append(ids[sel])
            out_w.append(w[sel])
            out_kind.append(np.zeros(sel.size, dtype=np.int8))
            out_info.append(sel.astype(np.int32))
            out_scale.append(np.full(sel.size, dt))
        for pi, bvals in enumerate(self.bracket_vals):
            b = bvals[p]
            nb = np.linalg.norm(b)
            if nb * self.comm_s[-1] ** 2 < 0.25 * self.h:
                continue  # loop cannot reach the next node level here
            disp = np.outer(self.comm_s**2, b)
            for sgn in (1, -1):
                tf = x + sgn * disp
                ids, s, valid = self._snap(tf)
                valid &= ids != p
                sig = self.sigma[ids]
                valid &= (s <= SNAP_ZERO) | (sig > self.sigma_floor)
                w = 4.0 * self.comm_s + np.where(s <= SNAP_ZERO, 0.0, s / np.maximum(sig, self.sigma_floor))
                sel = np.flatnonzero(valid)
                out_ids.append(ids[sel])
                out_w.append(w[sel])
                out_kind.append(np.ones(sel.size, dtype=np.int8))
                out_info.append(np.full(sel.size, pi * 2 + (sgn < 0), dtype=np.int32))
                out_scale.append(self.comm_s[sel])
        return (
            np.concatenate(out_ids),
            np.concatenate(out_w),
            np.concatenate(out_kind),
            np.concatenate(out_info),
            np.concatenate(out_scale),
        )


def _dijkstra(ctx, source, targets=None, rmax=None):
    N = ctx.grid.num_nodes
    dist = np.full(N, np.inf)
    settled = np.zeros(N, dtype=bool)
    parent = np.full(N, -1, dtype=np.int64)
    p_kind = np.zeros(N, dtype=np.int8)
    p_info = np.zeros(N, dtype=np.int32)
    p_scale = np.zeros(N)
    p_dur = np.zeros(N)
    dist[source] = 0.0
    heap = [(0.0, source)]
    remaining = set(targets) if targets is not None else None
    while heap:
        d, p = heapq.heappop(heap)
        if settled[p]:
            continue
        if rmax is not None and d > rmax:
            break
        settled[p] = True
        if remaining is not None:
            remaining.discard(p)
            if not remaining:
                break
        ids, w, kind, info, scale = ctx.edges_from(p)
        nd = d + w
        better = nd < dist[ids]
        for t, ndv, kv, iv, sv, wv in zip(
            ids[better], nd[better], kind[better], info[better], scale[better], w[better]
        ):
            if ndv >= dist[t]:  # a parallel edge in this batch already improved t
                continue
            dist[t] = ndv
            parent[t] = p
            p_kind[t] = kv
            p_info[t] = iv
            p_scale[t] = sv
            p_dur[t] = wv
            heapq.heappush(heap, (float(ndv), int(t)))
    return dist, settled, (parent, p_kind, p_info, p_scale, p_dur)


def _integrate_leg(family, x0, control, duration, substeps=8):
    """RK2 flow along a fixed control; returns the endpoint and sub-waypoints."""
    x = np.asarray(x0, dtype=float).copy()
    pts = [x.copy()]
    dt = duration / substeps
    f = np.asarray(control)
    for _ in range(substeps):
        v1 = f @ family.eval_coefficients(x)
        mid = x + 0.5 * dt * v1
        v2 = f @ family.eval_coefficients(mid)
        x = x + dt * v2
        pts.append(x.copy())
    return x, pts


def _reconstruct(ctx, source, target, parents):
    parent, p_kind, p_info, p_scale, p_dur = parents
    chain = []
    node = target
    while node != source:
        chain.append(node)
        node = int(parent[node])
        if node < 0:
            raise RuntimeError("broken parent chain")
    chain.append(source)
    chain.reverse()
    m = ctx.family.m
    waypoints = [ctx.coords[chain[0]].copy()]
    controls = []
    durations = []
    for prev, cur in zip(chain, chain[1:]):
        kind = p_kind[cur]
        if kind == 0:
            f = ctx.F[p_info[cur]]
            controls.append(f)
            durations.append(float(p_dur[cur]))
            waypoints.append(ctx.coords[cur].copy())
        else:
            pi, neg = divmod(int(p_info[cur]), 2)
            i, j = ctx.pairs[pi]
            s = float(p_scale[cur])
            order = [(i, 1.0), (j, 1.0), (i, -1.0), (j, -1.0)]
            if neg:
                order = [(j, 1.0), (i, 1.0), (j, -1.0), (i, -1.0)]
            x = ctx.coords[prev].copy()
            extra = float(p_dur[cur]) - 4.0 * s  # snap surcharge on the last leg
            for li, (fld, sgn) in enumerate(order):
                f = np.zeros(m)
                f[fld] = sgn
                x, _ = _integrate_leg(ctx.family, x, f, s)
                controls.append(f)
                durations.append(s + (extra if li == 3 else 0.0))
                waypoints.append(x.copy())
            waypoints[-1] = ctx.coords[cur].copy()  # close the snap gap at the node
    waypoints = np.array(waypoints)
    controls = np.array(controls) if controls else np.zeros((0, m))
    durations = np.array(durations)
    defect = _path_defect(ctx.family, waypoints, controls, durations)
    return PathResult(
        T=float(durations.sum()),
        waypoints=waypoints,
        controls=controls,
        durations=durations,
        defect=defect,
    )


def _path_defect(family, waypoints, controls, durations):
    """Max violation of gamma' = sum f_j X_j across segments (midpoint rule)."""
    if len(controls) == 0:
        return 0.0
    worst = 0.0
    for k in range(len(controls)):
        w0, w1 = waypoints[k], waypoints[k + 1]
        tau = durations[k]
        if tau <= 0:
            continue
        mid = 0.5 * (w0 + w1)
        v = controls[k] @ family.eval_coefficients(mid)
        worst = max(worst, float(np.linalg.norm((w1 - w0) / tau - v)))
    return worst


def cc_distance_graph(family, grid, x, y, directions=DEFAULT_DIRECTIONS,
                      comm_scales=DEFAULT_COMM_SCALES, step_scales=(1,)):
    """Dijkstra upper bound on d(x, y) and the realizing path."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo = grid.origin
    hi = grid.origin + (np.array(grid.dims) - 1) * grid.h
    for pt in (x, y):
        if np.any(pt < lo - 1e-12) or np.any(pt > hi + 1e-12):
            raise ValueError(f"point {pt} outside the grid box")
    ctx = _GraphContext(family, grid, directions, comm_scales, step_scales)
    src = grid.nearest_node(x)
    tgt = grid.nearest_node(y)
    if src == tgt:
        n = grid.n
        return 0.0, PathResult(
            T=0.0, waypoints=np.array([grid.points[src]] * 2),
            controls=np.zeros((1, family.m)), durations=np.zeros(1), defect=0.0,
        )
    dist, settled, parents = _dijkstra(ctx, src, targets=[tgt])
    if not np.isfinite(dist[tgt]):
        reached = dist[settled]
        raise CCUnreachableError(
            f"target {y} unreachable under snap from {x}",
            reached_radius=float(reached.max()) if reached.size else 0.0,
            reached_count=int(settled.sum()),
        )
    path = _reconstruct(ctx, src, tgt, parents)
    return float(dist[tgt]), path


def _resample_controls(seed, segments):
    """Piecewise-constant controls of the seed sampled on `segments` equal slices."""
    m = seed.controls.shape[1] if seed.controls.size else 1
    if seed.T <= 0 or seed.controls.size == 0:
        return np.zeros((segments, m))
    edges = np.concatenate([[0.0], np.cumsum(seed.durations)])
    mid = (np.arange(segments) + 0.5) * (seed.T / segments)
    idx = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, len(seed.durations) - 1)
    return seed.controls[idx].copy()


def _integrate_controls_batch(family, x0, controls, T, substeps=6):
    """Endpoints of the flows for a batch of control grids; controls (B, S, m)."""
    B, S, m = controls.shape
    state = np.tile(np.asarray(x0, dtype=float), (B, 1))
    dt = T / S
    hdt = dt / substeps
    const_A = family.eval_coefficients(x0) if family.is_constant() else None
    for si in range(S):
        f = controls[:, si, :]
        if const_A is not None:
            state = state + dt * (f @ const_A)
            continue
        for _ in range(substeps):
            A1 = family.eval_coefficients_batch(state)
            v1 = np.einsum("bm,bmn->bn", f, A1)
            mid = state + 0.5 * hdt * v1
            A2 = family.eval_coefficients_batch(mid)
            v2 = np.einsum("bm,bmn->bn", f, A2)
            state = state + hdt * v2
    return state


def _project_ball(controls):
    norms = np.linalg.norm(controls, axis=-1, keepdims=True)
    return controls / np.maximum(norms, 1.0)


def _feasibility_descent(family, x0, target, controls, T, target_miss, max_gn=25):
    """Pull the endpoint onto the target at fixed duration T.

    Damped Gauss-Newton on the endpoint map with a finite-difference
    Jacobian (the endpoint system is n equations in S*m controls, so the
    least-norm update is a tiny dense solve), followed by projection of
    each control back onto the unit ball.
    """
    S, m = controls.shape
    n = np.asarray(x0).size
    ctrl = _project_ball(controls.copy())

    def ends_of(batch):
        return _integrate_controls_batch(family, x0, batch, T)

    cur_end = ends_of(ctrl[None])[0]
    cur = float(np.linalg.norm(cur_end - target))
    fd = 1e-6
    B = S * m
    for _ in range(max_gn):
        if cur <= target_miss:
            return ctrl, cur, True
        batch = np.repeat(ctrl.reshape(1, -1), 2 * B, axis=0)
        batch[0::2, :] += fd * np.eye(B)
        batch[1::2, :] -= fd * np.eye(B)
        ends = ends_of(batch.reshape(2 * B, S, m))
        J = ((ends[0::2] - ends[1::2]) / (2 * fd)).T   # (n, B)
        r = cur_end - target
        delta = J.T @ np.linalg.solve(J @ J.T + 1e-12 * np.eye(n), r)
        # companion step restricted to the tangent spaces of saturated
        # controls: the full-space step loses its radial part to the ball
        # projection exactly when speeds are maxed out
        norms = np.linalg.norm(ctrl, axis=1)
        P = np.eye(B)
        for i in np.flatnonzero(norms > 1.0 - 1e-9):
            f_hat = ctrl[i] / norms[i]
            sl_i = slice(i * m, (i + 1) * m)
            P[sl_i, sl_i] -= np.outer(f_hat, f_hat)
        Jp = J @ P
        delta_t = P @ (Jp.T @ np.linalg.solve(Jp @ Jp.T + 1e-10 * np.eye(n), r))
        best = None
        for cand_delta in (delta, delta_t):
            step = 1.0
            for _ in range(12):
                cand = _project_ball((ctrl.reshape(-1) - step * cand_delta).reshape(S, m))
                cend = ends_of(cand[None])[0]
                cm = float(np.linalg.norm(cend - target))
                if cm < cur * (1.0 - 1e-12):
                    if best is None or cm < best[1]:
                        best = (cand, cm, cend)
                    break
                step *= 0.5
        if best is None:
            break
        ctrl, cur, cur_end = best
    return ctrl, cur, cur <= target_miss


def cc_distance_refine(family, seed, segments=24, tol=1e-3, substeps=6):
    """Shorten a feasible path by piecewise-constant control optimization.

    Controls live on `segments` equal time slices with |f| <= 1 enforced by
    radial projection; the duration is backed off while projected-gradient
    descent keeps the endpoint within the defect budget.  The returned T
    never exceeds the seed's; on stall the seed is returned unchanged with
    the stall flag set.
    """
    x0 = seed.waypoints[0].copy()
    target = seed.waypoints[-1].copy()
    geo = float(np.linalg.norm(target - x0))
    if seed.T <= 0:
        return seed
    ctrl = _resample_controls(seed, segments)
    T = float(seed.T)

    def budget(Tv):
        return 0.5 * tol * max(Tv, geo, 1e-12)

    ctrl0, miss0, ok = _feasibility_descent(family, x0, target, ctrl, T, budget(T))
    if not ok:
        out = PathResult(
            T=seed.T, waypoints=seed.waypoints, controls=seed.controls,
            durations=seed.durations, defect=seed.defect, stalled=True,
            notes=["refinement stalled: could not restore endpoint feasibility at seed duration"],
        )
        return out
    best_T, best_ctrl = T, ctrl0
    delta = 0.08
    while delta >= 1e-4:
        T_try = best_T * (1.0 - delta)
        ctrl_try, miss, ok = _feasibility_descent(
            family, x0, target, best_ctrl, T_try, budget(T_try)
        )
        if ok:
            best_T, best_ctrl = T_try, ctrl_try
        else:
            delta *= 0.5
    # final fine re-integration for waypoints and the defect report
    S = segments
    dt = best_T / S
    way = [x0.copy()]
    x = x0.copy()
    for si in range(S):
        x, _ = _integrate_leg(family, x, best_ctrl[si], dt, substeps=substeps)
        way.append(x.copy())
    way = np.array(way)
    miss = float(np.linalg.norm(way[-1] - target))
    durations = np.full(S, dt)
    defect = max(_path_defect(family, way, best_ctrl, durations), miss / max(best_T, 1e-300))
    return PathResult(
        T=float(min(best_T, seed.T)),
        waypoints=way,
        controls=best_ctrl.copy(),
        durations=durations,
        defect=float(defect),
    )


def cc_distance(family, grid, x, y, directions=DEFAULT_DIRECTIONS, segments=24, tol=1e-3):
    """Two-stage estimate: Dijkstra upper bound, then control refinement."""
    d_hat, seed = cc_distance_graph(family, grid, x, y, directions=directions)
    refined = cc_distance_refine(family, seed, segments=segments, tol=tol)
    return min(d_hat, refined.T), refined


@dataclass(eq=False)
class BallResult:
    grid: object
    center_id: int
    radius: float
    node_ids: np.ndarray
    dist: np.ndarray      # distances for node_ids, same order
    volume: float


def metric_ball(family, center, R, grid, directions=DEFAULT_DIRECTIONS,
                comm_scales=DEFAULT_COMM_SCALES, step_scales=(1, 2, 3)):
    """Single-source Dijkstra ball {d_hat <= R}; volume = h^n * node count."""
    if R < 0:
        raise ValueError("radius must be nonnegative")
    center = np.asarray(center, dtype=float)
    cid = grid.nearest_node(center)
    if np.linalg.norm(grid.points[cid] - center) > grid.h:
        raise ValueError("center too far from any grid node")
    hn = grid.h ** grid.n
    if R == 0.0:
        return BallResult(grid, cid, 0.0, np.array([cid]), np.zeros(1), hn)
    ctx = _GraphContext(family, grid, directions, comm_scales, step_scales)
    dist, settled, _ = _dijkstra(ctx, cid, rmax=R)
    ids = np.flatnonzero(np.isfinite(dist) & (dist <= R))
    if np.any(grid.is_outer_face(ids)):
        raise ValueError("metric ball clipped by the grid box; enlarge the box")
    return BallResult(grid, cid, float(R), ids, dist[ids], hn * ids.size)


def doubling_estimate(family, center, radii, grid, directions=DEFAULT_DIRECTIONS,
                      comm_scales=DEFAULT_COMM_SCALES, step_scales=(1, 2, 3)):
    """|B(2R)| / |B(R)| for each R, plus the max ratio C1."""
    radii = sorted(float(r) for r in radii)
    if not radii or radii[0] <= 0:
        raise ValueError("radii must be positive")
    rmax = 2.0 * radii[-1]
    center = np.asarray(center, dtype=float)
    cid = grid.nearest_node(center)
    ctx = _GraphContext(family, grid, directions, comm_scales, step_scales)
    dist, settled, _ = _dijkstra(ctx, cid, rmax=rmax)
    reach = np.flatnonzero(np.isfinite(dist) & (dist <= rmax))
    if np.any(grid.is_outer_face(reach)):
        raise ValueError("doubling ball clipped by the grid box; enlarge the box")
    ratios = []
    for R in radii:
        nR = int(np.count_nonzero(dist[reach] <= R))
        n2R = int(np.count_nonzero(dist[reach] <= 2.0 * R))
        if nR == 0:
            raise ValueError(f"ball of radius {R} contains no nodes at this h")
        ratios.append((R, n2R / nR))
    C1 = max(r for _, r in ratios)
    return ratios, C1


@dataclass(eq=False)
class ProbeReport:
    ratios: list          # (label, ratio) per corpus function
    C_est: float
    skipped: list

    def to_json_dict(self):
        return {
            "ratios": [[str(k), float(v)] for k, v in self.ratios],
            "C_est": float(self.C_est),
            "skipped": [str(s) for s in self.skipped],
        }


def _horizontal_gradient_norms(family, grid):
    """|Xu| evaluation machinery: returns (row node ids, per-field operators)."""
    ops = [assemble_first_order(family, grid, j) for j in range(1, family.m + 1)]
    return ops[0].row_ids, ops


def _ball_row_positions(ball, row_ids):
    pos_of = {int(node): i for i, node in enumerate(row_ids)}
    sel_nodes, sel_rows = [], []
    for node in ball.node_ids:
        i = pos_of.get(int(node))
        if i is not None:
            sel_nodes.append(int(node))
            sel_rows.append(i)
    return np.array(sel_nodes, dtype=np.int64), np.array(sel_rows, dtype=np.int64)


def poincare_probe(family, ball, corpus, R):
    """ratio_i = sum_B |u_i - mean| / (R * sum_B |X u_i|); C_est = max ratio."""
    grid = ball.grid
    row_ids, ops = _horizontal_gradient_norms(family, grid)
    nodes, rows = _ball_row_positions(ball, row_ids)
    if nodes.size == 0:
        raise ValueError("ball contains no gradient quadrature rows")
    ratios = []
    skipped = []
    for label, u in _labeled(corpus):
        vals = u.values[nodes]
        grads = np.zeros(nodes.size)
        for op in ops:
            grads = grads + op.apply(u)[rows] ** 2
        grads = np.sqrt(grads)
        den = float(R * grads.sum())
        num = float(np.abs(vals - vals.mean()).sum())
        if den <= 1e-14 * max(1.0, num):
            skipped.append(f"{label}: zero horizontal gradient on the ball")
            continue
        ratios.append((label, num / den))
    C_est = max((r for _, r in ratios), default=0.0)
    return ProbeReport(ratios=ratios, C_est=C_est, skipped=skipped)


def sobolev_probe(family, ball, corpus, q, p):
    """(avg_B |u|^q)^{1/q} / (R * (avg_B |Xu|^p)^{1/p}) per corpus function."""
    if not q > p or p < 1:
        raise ValueError("need q > p >= 1")
    grid = ball.grid
    row_ids, ops = _horizontal_gradient_norms(family, grid)
    nodes, rows = _ball_row_positions(ball, row_ids)
    in_ball = np.zeros(grid.num_nodes, dtype=bool)
    in_ball[ball.node_ids] = True
    ratios = []
    skipped = []
    for label, u in _labeled(corpus):
        outside = u.values[~in_ball & (grid.mask != EXTERIOR)]
        if outside.size and np.abs(outside).max() > 1e-10 * max(1.0, np.abs(u.values).max()):
            raise ValueError(f"{label}: corpus function not compactly supported in the ball")
        vals = u.values[nodes]
        grads = np.zeros(nodes.size)
        for op in ops:
            grads = grads + op.apply(u)[rows] ** 2
        grads = np.sqrt(grads)
        if float(grads.max(initial=0.0)) <= 1e-14:
            skipped.append(f"{label}: zero horizontal gradient on the ball")
            continue
        lhs = float(np.mean(np.abs(vals) ** q) ** (1.0 / q))
        rhs = float(ball.radius * np.mean(grads**p) ** (1.0 / p))
        ratios.append((label, lhs / rhs))
    return ProbeReport(ratios=ratios, C_est=max((r for _, r in ratios), default=0.0), skipped=skipped)


def _labeled(corpus):
    for i, u in enumerate(corpus):
        yield f"u{i}", u


def random_polynomial_corpus(grid, count, degree=2, seed=0):
    """Seeded low-degree polynomial fields for probe corpora."""
    rng = np.random.default_rng(seed)
    pts = grid.points
    n = grid.n
    exps = [e for e in _monomials(n, degree)]
    out = []
    for _ in range(count):
        coeffs = rng.standard_normal(len(exps))
        vals = np.zeros(grid.num_nodes)
        for c, e in zip(coeffs, exps):
            term = np.full(grid.num_nodes, c)
            for k, ek in enumerate(e):
                if ek:
                    term = term * pts[:, k] ** ek
            vals += term
        out.append(GridField(grid, vals))
    return out


def _monomials(n, degree):
    """All exponent tuples of length n with total degree <= degree."""
    if n == 0:
        yield ()
        return
    for head in range(degree + 1):
        for rest in _monomials(n - 1, degree - head):
            yield (head,) + rest


def ball_bump(ball, power=2):
    """Compactly supported bump ((1 - (d/R)^2)_+)^power built from ball distances."""
    grid = ball.grid
    vals = np.zeros(grid.num_nodes)
    t = 1.0 - (ball.dist / max(ball.radius, 1e-300)) ** 2
    vals[ball.node_ids] = np.maximum(t, 0.0) ** power
    return GridField(grid, vals)
