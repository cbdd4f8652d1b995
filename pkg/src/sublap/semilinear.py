"""Semilinear solvers built on monotone sub/super-solution iteration.

Problems take the form H u = F(x, u) with Dirichlet data, discretized as
K u = M F(., u).  The monotone scheme iterates
    u_{k+1} = (K + c M)^{-1} M (c u_k + F(., u_k))
from a supersolution; with c at least the Lipschitz bound of F in u the
iteration is order-preserving (modulo the missing discrete maximum
principle, which is monitored, not assumed) and descends onto a solution
trapped in the [lower, upper] bracket.

Specializations: the logistic problem H u = mu u (a - b u^{p-1}), the
Yamabe-type problem H u + k u - Kcap |u|^{p-1} u = 0 on truncated boxes
with far-field boundary value eps, and the exhaustion sequence
H u = lam g u on growing boxes with boundary datum equal to the box index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigen import weighted_principal
from .mesh import GridField, build_grid
from .operators import assemble_diagonal, assemble_stiffness

TOL_LIN = 1e-10          # inner CG tolerance for linear solves
MAX_ITER_MONOTONE = 1000
SUB_SLACK_FACTOR = 1e-8  # tau_sub = factor * ||K||_inf * ||u||_inf


@dataclass(eq=False)
class SemilinearProblem:
    """H u = F(x, u) with Dirichlet data and a declared Lipschitz bound.

    `reaction` maps (points (N, n), values (N,)) -> (N,).  `lipschitz`
    must dominate |dF/du| over the working bracket; `validate_lipschitz`
    spot-checks the declaration by sampled difference quotients.
    """

    K: object                       # assembled stiffness SparseOperator
    reaction: object                # callable F(points, u)
    boundary_value: object = 0.0    # scalar or GridField
    lipschitz: float = 0.0

    @property
    def grid(self):
        return self.K.grid

    def boundary_vector(self):
        g = self.grid
        if isinstance(self.boundary_value, GridField):
            return self.boundary_value.values[g.boundary_ids]
        return np.full(g.n_boundary, float(self.boundary_value))

    def validate_lipschitz(self, lo, hi, samples=1000, seed=0):
        """Sampled check that `lipschitz` >= |dF/du| on the bracket range."""
        rng = np.random.default_rng(seed)
        g = self.grid
        ids = rng.integers(0, g.n_interior, size=samples)
        pts = g.points[g.interior_ids[ids]]
        span = max(hi - lo, 1e-12)
        u = rng.uniform(lo, hi, size=samples)
        du = 1e-6 * span
        slope = np.abs(self.reaction(pts, u + du) - self.reaction(pts, u)) / du
        worst = float(slope.max())
        if worst > self.lipschitz * (1.0 + 1e-4) + 1e-12:
            raise ValueError(
                f"declared Lipschitz bound {self.lipschitz:g} below sampled slope {worst:g}"
            )
        return worst


@dataclass(eq=False)
class BracketSolveResult:
    solution: GridField
    lower: GridField
    upper: GridField
    residual: float
    iterations: int
    bracket_respected: bool
    steps_monotone: bool = True
    max_step_increase: float = 0.0
    status: str = "ok"
    notes: list = field(default_factory=list)

    def to_json_dict(self):
        return {
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "bracket_respected": bool(self.bracket_respected),
            "steps_monotone": bool(self.steps_monotone),
            "max_step_increase": float(self.max_step_increase),
            "status": self.status,
            "notes": list(self.notes),
        }


def linear_solve(K, shift_c, rhs, boundary_value=0.0, tol=TOL_LIN):
    """Solve (K + c M) u = M rhs with imposed Dirichlet data, by CG.

    `rhs` is a GridField (interior values used); boundary_value is a scalar
    or GridField giving the Dirichlet trace of u.
    """
    if shift_c < 0:
        raise ValueError("shift must be nonnegative")
    g = K.grid
    w = g.h ** g.n
    A = K.mat + shift_c * sp.identity(g.n_interior, format="csr") * w
    if isinstance(boundary_value, GridField):
        bvec = boundary_value.values[g.boundary_ids]
    else:
        bvec = np.full(g.n_boundary, float(boundary_value))
    b = w * rhs.values[g.interior_ids]
    if K.boundary is not None and g.n_boundary:
        b = b - K.boundary @ bvec
    nb = np.linalg.norm(b)
    if nb == 0.0:
        x = np.zeros(g.n_interior)
    else:
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=max(4 * g.n_interior, 400))
        if info != 0:
            raise RuntimeError(f"CG stagnation in linear solve (info={info})")
    vals = np.zeros(g.num_nodes)
    vals[g.interior_ids] = x
    vals[g.boundary_ids] = bvec
    return GridField(g, vals)


def _residual(problem, u):
    g = problem.grid
    w = g.h ** g.n
    res = problem.K.apply(u) - w * problem.reaction(g.points[g.interior_ids], u.values[g.interior_ids])
    un = np.linalg.norm(u.values[g.interior_ids])
    r = float(np.linalg.norm(res))
    return float(r / un) if un > 0 else r


def sub_super_slack(K, u):
    umax = float(np.abs(u.values).max())
    return SUB_SLACK_FACTOR * K.inf_norm() * max(umax, 1.0)


def check_subsolution(problem, u):
    """K u <= M F(., u) + tau_sub at interior rows; returns (ok, worst, node)."""
    g = problem.grid
    w = g.h ** g.n
    lhs = problem.K.apply(u)
    rhs = w * problem.reaction(g.points[g.interior_ids], u.values[g.interior_ids])
    slack = sub_super_slack(problem.K, u)
    viol = lhs - rhs
    worst = int(np.argmax(viol))
    return bool(viol.max() <= slack), float(viol.max()), int(g.interior_ids[worst])


def check_supersolution(problem, u):
    g = problem.grid
    w = g.h ** g.n
    lhs = problem.K.apply(u)
    rhs = w * problem.reaction(g.points[g.interior_ids], u.values[g.interior_ids])
    slack = sub_super_slack(problem.K, u)
    viol = rhs - lhs
    worst = int(np.argmax(viol))
    return bool(viol.max() <= slack), float(viol.max()), int(g.interior_ids[worst])


def monotone_iterate(problem, lower, upper, tol=1e-8, max_iter=MAX_ITER_MONOTONE):
    """Descend from the supersolution; iterates stay in [lower, upper].

    Monotone descent and bracket preservation are asserted at every step;
    violations (possible without a discrete maximum principle) are recorded
    in the result notes rather than silently ignored.
    """
    g = problem.grid
    active = g.mask != 0  # non-exterior
    if np.any(lower.values[active] > upper.values[active] + 1e-14):
        raise ValueError("bracket violated: lower > upper somewhere")
    problem.validate_lipschitz(float(lower.values[active].min()),
                               float(upper.values[active].max()))
    notes = []
    ok_sub, v_sub, n_sub = check_subsolution(problem, lower)
    if not ok_sub:
        notes.append(f"lower field fails the discrete subsolution check by {v_sub:.3e} at node {n_sub}")
    ok_sup, v_sup, n_sup = check_supersolution(problem, upper)
    if not ok_sup:
        notes.append(f"upper field fails the discrete supersolution check by {v_sup:.3e} at node {n_sup}")

    c = float(problem.lipschitz)
    u = upper.copy()
    scale = max(float(np.abs(upper.values).max()), 1.0)
    mono_slack = 1e3 * TOL_LIN * scale
    steps_monotone = True
    max_inc = 0.0
    bracket_ok = True
    residual = _residual(problem, u)
    it = 0
    for it in range(1, max_iter + 1):
        pts = g.points[g.interior_ids]
        ui = u.values[g.interior_ids]
        rhs_vals = np.zeros(g.num_nodes)
        rhs_vals[g.interior_ids] = c * ui + problem.reaction(pts, ui)
        u_next = linear_solve(problem.K, c, GridField(g, rhs_vals), problem.boundary_value)
        inc = float((u_next.values - u.values)[active].max())
        max_inc = max(max_inc, inc)
        if inc > mono_slack:
            steps_monotone = False
            node = int(np.flatnonzero(active)[np.argmax((u_next.values - u.values)[active])])
            notes.append(f"monotone descent violated by {inc:.3e} at node {node}, step {it}")
        lo_viol = float((lower.values - u_next.values)[active].max())
        hi_viol = float((u_next.values - upper.values)[active].max())
        if max(lo_viol, hi_viol) > mono_slack:
            bracket_ok = False
            notes.append(
                f"bracket violated at step {it}: below-lower {lo_viol:.3e}, above-upper {hi_viol:.3e}"
            )
        step = float(np.abs(u_next.values - u.values).max())
        u = u_next
        residual = _residual(problem, u)
        if residual <= tol:
            break
        if step < 1e-16 * scale:
            notes.append(f"iteration stagnated at step {it} with residual {residual:.3e}")
            break
    status = "ok" if residual <= tol else "no-convergence"
    if status != "ok":
        notes.append(f"residual {residual:.3e} above tol {tol:.3e} after {it} iterations")
    return BracketSolveResult(
        solution=u,
        lower=lower,
        upper=upper,
        residual=residual,
        iterations=it,
        bracket_respected=bracket_ok,
        steps_monotone=steps_monotone,
        max_step_increase=max_inc,
        status=status,
        notes=notes,
    )


def polynomial_reaction(coeff_fields):
    """F(x, u) = sum_k c_k(x) u^k from a list of coefficient fields."""
    if not coeff_fields:
        raise ValueError("need at least one coefficient field")
    grid = coeff_fields[0].grid
    c_int = np.stack([c.values[grid.interior_ids] for c in coeff_fields])

    def F(pts, u):
        if pts.shape[0] == c_int.shape[1]:
            cs = c_int
        else:
            ids = [grid.nearest_node(x) for x in pts]
            cs = np.stack([c.values[ids] for c in coeff_fields])
        out = np.zeros_like(u)
        for k in range(cs.shape[0] - 1, -1, -1):
            out = out * u + cs[k]
        return out

    return F


def logistic_reaction(a, b, mu, p):
    """F(x, u) = mu * u * (a(x) - b(x) |u|^{p-1}) as a vectorized callable."""
    grid = a.grid
    a_int = a.values[grid.interior_ids]
    b_int = b.values[grid.interior_ids]
    pts_key = grid.points[grid.interior_ids]

    def F(pts, u):
        if pts.shape[0] == pts_key.shape[0]:
            av, bv = a_int, b_int
        else:  # sampled subsets (Lipschitz validation)
            ids = [grid.nearest_node(x) for x in pts]
            av = a.values[ids]
            bv = b.values[ids]
        return mu * u * (av - bv * np.abs(u) ** (p - 1.0))

    return F


def logistic_lipschitz(a, b, mu, p, umax):
    """sup |dF/du| on [0, umax]: dF/du = mu (a - p b u^{p-1}) is monotone in u."""
    g = a.grid
    av = a.values[g.interior_ids]
    bv = b.values[g.interior_ids]
    at0 = np.abs(av)
    at1 = np.abs(av - p * bv * umax ** (p - 1.0))
    return float(mu * np.maximum(at0, at1).max())


def logistic_solve(K, a, b, mu, p, tol=1e-8, max_iter=MAX_ITER_MONOTONE):
    """Positive solution of H u = mu u (a - b u^{p-1}), u = 0 on the boundary.

    Uses the bracket [eps*phi, Mcap] with phi the principal eigenfunction of
    H u = mu1 a u, Mcap = max (a/b)^{1/(p-1)}, and eps the largest dyadic
    value passing the discrete subsolution test.  For mu <= mu1 the zero
    solution is returned with status "subcritical".  Near the bifurcation
    (mu barely above mu1) the contraction rate degrades like
    (mu - mu1)/mu, so callers may need a larger max_iter there.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    g = K.grid
    a_int = a.values[g.interior_ids]
    b_int = b.values[g.interior_ids]
    if a_int.min() <= 0 or b_int.min() <= 0:
        raise ValueError("a and b must be positive on the interior")
    ga = assemble_diagonal(a)
    eig = weighted_principal(K, ga, tol=min(tol, 1e-9))
    mu1 = eig.lam
    zero = GridField.zeros(g)
    if mu <= mu1:
        return BracketSolveResult(
            solution=zero, lower=zero, upper=zero, residual=0.0, iterations=0,
            bracket_respected=True, status="subcritical",
            notes=[f"mu={mu:g} <= mu1={mu1:g}: no positive solution expected"],
        )
    Mcap = float((np.abs(a_int / b_int) ** (1.0 / (p - 1.0))).max())
    upper = GridField.constant(g, Mcap)
    F = logistic_reaction(a, b, mu, p)
    c = logistic_lipschitz(a, b, mu, p, Mcap)
    problem = SemilinearProblem(K=K, reaction=F, boundary_value=0.0, lipschitz=c)
    phi = eig.eigenfield.copy()
    phi_max = float(phi.values[g.interior_ids].max())
    if phi_max <= 0:
        raise RuntimeError("principal eigenfield is not positive; cannot build a lower solution")
    phi = phi * (1.0 / phi_max)
    notes = []
    if not eig.positive:
        notes.append("principal eigenfield is sign-mixed; lower solution may be invalid")
    eps = None
    cand = 1.0
    for _ in range(60):
        low = phi * cand
        ok, _, _ = check_subsolution(problem, low)
        if ok and float(low.values.max()) < Mcap:
            eps = cand
            break
        cand *= 0.5
    if eps is None:
        return BracketSolveResult(
            solution=zero, lower=zero, upper=upper, residual=float("nan"), iterations=0,
            bracket_respected=False, status="no-subsolution",
            notes=notes + ["no dyadic eps made eps*phi a discrete subsolution"],
        )
    lower = phi * eps
    result = monotone_iterate(problem, lower, upper, tol=tol, max_iter=max_iter)
    result.notes = notes + [f"mu1={mu1!r}", f"Mcap={Mcap!r}", f"eps={eps!r}"] + result.notes
    return result


@dataclass(eq=False)
class ComparisonReport:
    """Discrete check of the comparison principle for -Hu + a u - b u^p."""

    hypothesis1_ok: bool
    hypothesis2_ok: bool
    boundary_ok: bool
    conclusion_ok: bool
    worst_hypothesis_violation: float
    worst_conclusion_violation: float
    worst_conclusion_node: int

    @property
    def hypotheses_ok(self):
        return self.hypothesis1_ok and self.hypothesis2_ok and self.boundary_ok

    @property
    def passed(self):
        return self.hypotheses_ok and self.conclusion_ok

    def failure_kind(self):
        if not self.hypotheses_ok:
            return "hypothesis"
        if not self.conclusion_ok:
            return "conclusion"
        return None


def comparison_check(K, u1, u2, a, b, p):
    """Check -Hu1 + a u1 - b u1^p <= 0 <= -Hu2 + a u2 - b u2^p, then u2 <= u1.

    Hypothesis failures are reported separately from conclusion failures;
    all inequalities carry the discretization slack tau_sub.
    """
    g = K.grid
    w = g.h ** g.n

    def defect(u):
        ui = u.values[g.interior_ids]
        av = a.values[g.interior_ids]
        bv = b.values[g.interior_ids]
        return -K.apply(u) + w * (av * ui - bv * np.sign(ui) * np.abs(ui) ** p)

    scale_u = max(float(np.abs(u1.values).max()), float(np.abs(u2.values).max()), 1.0)
    slack = SUB_SLACK_FACTOR * K.inf_norm() * scale_u
    d1 = defect(u1)
    d2 = defect(u2)
    hyp1 = float(d1.max()) <= slack          # -Hu1 + ... <= 0
    hyp2 = float((-d2).max()) <= slack       # -Hu2 + ... >= 0
    worst_hyp = max(float(d1.max()), float((-d2).max()))
    bdiff = u2.values[g.boundary_ids] - u1.values[g.boundary_ids] if g.n_boundary else np.zeros(1)
    boundary_ok = float(bdiff.max(initial=0.0)) <= slack
    diff = u2.values[g.interior_ids] - u1.values[g.interior_ids]
    worst_idx = int(np.argmax(diff))
    conclusion_ok = float(diff.max()) <= slack
    return ComparisonReport(
        hypothesis1_ok=hyp1,
        hypothesis2_ok=hyp2,
        boundary_ok=boundary_ok,
        conclusion_ok=conclusion_ok,
        worst_hypothesis_violation=worst_hyp,
        worst_conclusion_violation=float(diff.max()),
        worst_conclusion_node=int(g.interior_ids[worst_idx]),
    )


@dataclass(eq=False)
class PoissonResult:
    field: GridField
    bounds_ok: bool
    worst_violation: float
    sign: int
    eps: float
    note: str = ""


def poisson_solve(K, f, C, sign, eps, tol=TOL_LIN):
    """Solve K U = -sign * C * M f with far-field boundary value eps.

    sign=-1 gives the lower barrier (bounds checked: 0 < U <= eps);
    sign=+1 the upper barrier (eps <= U < 1).  Bound violations mean C is
    too large for this box and f; they are reported, not raised.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if not (1.0 / 3.0 < eps < 0.5):
        raise ValueError("eps must lie in (1/3, 1/2)")
    g = K.grid
    fv = f.values[g.interior_ids]
    if fv.min() < 0:
        raise ValueError("f must be nonnegative")
    rhs_vals = np.zeros(g.num_nodes)
    rhs_vals[g.interior_ids] = float(sign) * C * fv
    U = linear_solve(K, 0.0, GridField(g, rhs_vals), boundary_value=eps, tol=tol)
    ui = U.values[g.interior_ids]
    bound_tol = 1e-10 * max(1.0, abs(eps))
    if sign < 0:
        viol = max(float((ui - eps).max()), float((-ui).max()))
        ok = bool(np.all(ui > 0.0) and np.all(ui <= eps + bound_tol))
        note = "" if ok else "barrier bound 0 < U <= eps violated: C too large for this box/f"
    else:
        viol = max(float((eps - ui).max()), float((ui - 1.0).max()))
        ok = bool(np.all(ui >= eps - bound_tol) and np.all(ui < 1.0))
        note = "" if ok else "barrier bound eps <= U < 1 violated: C too large for this box/f"
    return PoissonResult(field=U, bounds_ok=ok, worst_violation=viol, sign=int(sign), eps=eps, note=note)


def yamabe_reaction(kfield, Kfield, p):
    """F(x, u) = Kcap(x) |u|^{p-1} u - k(x) u (so that H u = F matches the equation)."""
    grid = kfield.grid
    k_int = kfield.values[grid.interior_ids]
    K_int = Kfield.values[grid.interior_ids]

    def F(pts, u):
        if pts.shape[0] == k_int.shape[0]:
            kv, Kv = k_int, K_int
        else:
            ids = [grid.nearest_node(x) for x in pts]
            kv = kfield.values[ids]
            Kv = Kfield.values[ids]
        return Kv * np.sign(u) * np.abs(u) ** p - kv * u

    return F


def yamabe_solve(K, kfield, Kfield, p, f, theta, eps, tol=1e-8):
    """Positive solution of H u + k u - Kcap |u|^{p-1} u = 0 on a truncated box.

    Requires |k| <= theta f and |Kcap| <= theta f nodewise.  Barriers come
    from the Poisson problems with C = 2 theta (the proof's choice
    theta = theta1/3, C = 2 theta1/3); the solution is trapped between them
    and carries boundary trace eps.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    if not (1.0 / 3.0 < eps < 0.5):
        raise ValueError("eps must lie in (1/3, 1/2)")
    g = K.grid
    fv = np.abs(f.values)
    tol_dom = 1e-12 * max(1.0, float(fv.max())) * max(theta, 1.0)
    if np.any(np.abs(kfield.values) > theta * fv + tol_dom):
        raise ValueError("|k| <= theta f violated")
    if np.any(np.abs(Kfield.values) > theta * fv + tol_dom):
        raise ValueError("|Kcap| <= theta f violated")
    zero = GridField.zeros(g)
    if theta == 0.0:
        C = 1e-300  # degenerate barrier pair: both solve the homogeneous problem
    else:
        C = 2.0 * theta
    lowres = poisson_solve(K, f, C, -1, eps)
    upres = poisson_solve(K, f, C, +1, eps)
    notes = []
    if not (lowres.bounds_ok and upres.bounds_ok):
        msg = lowres.note or upres.note
        return BracketSolveResult(
            solution=zero, lower=lowres.field, upper=upres.field,
            residual=float("nan"), iterations=0, bracket_respected=False,
            status="bracket-construction-failed",
            notes=[msg, f"worst violations: low {lowres.worst_violation:.3e}, up {upres.worst_violation:.3e}"],
        )
    V, W = lowres.field, upres.field
    F = yamabe_reaction(kfield, Kfield, p)
    lo = float(V.values[g.interior_ids].min())
    hi = float(W.values[g.interior_ids].max())
    kv = np.abs(kfield.values[g.interior_ids])
    Kv = np.abs(Kfield.values[g.interior_ids])
    c = float((p * Kv * max(abs(lo), abs(hi)) ** (p - 1.0) + kv).max())
    problem = SemilinearProblem(K=K, reaction=F, boundary_value=eps, lipschitz=c)
    ok_sub, v_sub, _ = check_subsolution(problem, V)
    ok_sup, v_sup, _ = check_supersolution(problem, W)
    if not ok_sub:
        notes.append(f"lower barrier misses the subsolution inequality by {v_sub:.3e}")
    if not ok_sup:
        notes.append(f"upper barrier misses the supersolution inequality by {v_sup:.3e}")
    result = monotone_iterate(problem, V, W, tol=tol)
    result.notes = notes + result.notes
    return result


@dataclass(eq=False)
class ExhaustionResult:
    fields: list          # normalized solutions, one per box
    statuses: list        # "ok" | "resonance" | "not-positive" | ...
    successive_diffs: list
    notes: list = field(default_factory=list)

    @property
    def all_positive(self):
        return all(s == "ok" for s in self.statuses)


def exhaustion_construct(family, g_fn, lam, box_list, h, tol=1e-10):
    """Solve H u = lam g u on growing boxes D_k with boundary datum k.

    Each solution is checked for interior positivity, normalized to
    u(0) = 1, and compared with its predecessor on the smallest box; the
    successive max differences are the convergence diagnostic.  Resonant
    lam (a Dirichlet eigenvalue of some D_k) is reported per box.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    for i, box in enumerate(box_list[:-1]):
        nxt = box_list[i + 1]
        for (lo, hi), (lo2, hi2) in zip(box, nxt):
            if lo2 > lo or hi2 < hi:
                raise ValueError("box_list must be increasing (each box contained in the next)")
    fields_out = []
    statuses = []
    notes = []
    base_grid = None
    for k, box in enumerate(box_list, start=1):
        grid = build_grid(box, h)
        if base_grid is None:
            base_grid = grid
        origin_id = grid.nearest_node(np.zeros(grid.n))
        if np.linalg.norm(grid.points[origin_id]) > 1e-9 * h:
            raise ValueError("0 must be a grid node of every box")
        K = assemble_stiffness(family, grid)
        gfield = GridField.from_function(grid, g_fn)
        G = assemble_diagonal(gfield)
        A = (K.mat - lam * G.mat).tocsc()
        bvec = np.full(grid.n_boundary, float(k))
        rhs = -K.boundary @ bvec if K.boundary is not None else np.zeros(grid.n_interior)
        status = "ok"
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                x = spla.spsolve(A, rhs)
            except (spla.MatrixRankWarning, RuntimeError):
                x = None
                status = "resonance"
        if x is not None and (not np.all(np.isfinite(x)) or np.abs(x).max() > 1e8 * max(k, 1)):
            status = "resonance"
        if status == "resonance":
            notes.append(f"box {k}: lam={lam:g} is a Dirichlet eigenvalue of D_{k} (singular system)")
            fields_out.append(None)
            statuses.append(status)
            continue
        vals = np.zeros(grid.num_nodes)
        vals[grid.interior_ids] = x
        vals[grid.boundary_ids] = bvec
        u = GridField(grid, vals)
        if np.any(u.values[grid.interior_ids] <= 0.0):
            status = "not-positive"
            notes.append(
                f"box {k}: interior positivity failed (min {u.values[grid.interior_ids].min():.3e}); "
                "no discrete maximum principle is guaranteed"
            )
        u0 = float(u.values[origin_id])
        if u0 <= 0:
            status = "not-positive"
            notes.append(f"box {k}: u(0) = {u0:.3e} <= 0, normalization impossible")
            fields_out.append(None)
            statuses.append(status)
            continue
        fields_out.append(u * (1.0 / u0))
        statuses.append(status)
    diffs = []
    prev = None
    base_pts = base_grid.points[base_grid.interior_ids]
    for u in fields_out:
        if u is None:
            prev = None
            continue
        vals = np.array([u.values[u.grid.nearest_node(x)] for x in base_pts])
        if prev is not None:
            diffs.append(float(np.abs(vals - prev).max()))
        prev = vals
    return ExhaustionResult(fields=fields_out, statuses=statuses, successive_diffs=diffs, notes=notes)
