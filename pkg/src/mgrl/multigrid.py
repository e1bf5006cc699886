"""h/p-multigrid hierarchy, transfer operators, and the FAS V-cycle.

The hierarchy orders levels finest to coarsest: polynomial levels P, P-1,
..., 0 on the fine mesh, then (in h/p mode) three order-0 levels obtained by
repeatedly halving the element count.  Coarse levels solve the full
approximation scheme (FAS) equation R(u) = forcing, so the same cycle
handles the linear and the nonlinear model equation.
"""

import time
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .basis import Basis, build_basis, lagrange_eval_matrix
from .equations import LINEAR
from .fr import NonFiniteInput, compute_rhs, default_cfl, rms, stable_dt
from .mesh import InvalidMesh, Mesh1D

H_LEVELS = 3


class Diverged(RuntimeError):
    """A cycle produced a non-finite field; .field holds the last good state."""

    def __init__(self, message, field=None, history=None):
        super().__init__(message)
        self.field = field
        self.history = history or []


class MaxCyclesExceeded(RuntimeError):
    def __init__(self, message, field=None, history=None):
        super().__init__(message)
        self.field = field
        self.history = history or []


class _Blown(Exception):
    """Internal signal: smoothing left non-finite values on some level."""


# ---------------------------------------------------------------------------
# transfer operators


def p_restriction_matrix(fine: Basis, coarse: Basis):
    """Element-local L2 projection from degree Pf nodal values onto the
    degree Pf-1 space, returned as a (Pc+1, Pf+1) matrix.

    The fine Gauss rule integrates the degree 2Pf-1 integrand exactly, so
    the projection is exact."""
    k = np.arange(coarse.order + 1)
    vf = npleg.legvander(fine.nodes, coarse.order)
    vc = npleg.legvander(coarse.nodes, coarse.order)
    modal = (k + 0.5)[:, None] * (vf.T * fine.weights)
    return vc @ modal


def p_prolongation_matrix(coarse: Basis, fine: Basis):
    """Exact evaluation of the coarse nodal polynomial at the fine nodes."""
    return lagrange_eval_matrix(coarse.nodes, coarse.bary, fine.nodes)


def restrict_p(u, fine: Basis, coarse: Basis):
    return u @ p_restriction_matrix(fine, coarse).T


def prolong_p(u, coarse: Basis, fine: Basis):
    return u @ p_prolongation_matrix(coarse, fine).T


def h_transfer_tensors(fine_mesh: Mesh1D, coarse_mesh: Mesh1D, basis: Basis):
    """Per-parent restriction/prolongation operators for element pairs.

    Restriction is the L2 projection of the two child polynomials onto the
    same-degree parent space; prolongation evaluates the parent polynomial
    on each child's node set.  Shapes: (Nc, m, 2m) and (Nc, 2m, m) with
    m = P+1.
    """
    if fine_mesh.n_elements != 2 * coarse_mesh.n_elements:
        raise InvalidMesh("fine mesh must have exactly twice the elements")
    m = basis.n_nodes
    nc = coarse_mesh.n_elements
    k = np.arange(basis.order + 1)
    v_parent = npleg.legvander(basis.nodes, basis.order)
    restrict = np.empty((nc, m, 2 * m))
    prolong = np.empty((nc, 2 * m, m))
    for c in range(nc):
        x0 = coarse_mesh.vertices[c]
        x2 = coarse_mesh.vertices[c + 1]
        xm = fine_mesh.vertices[2 * c + 1]
        j_parent = 0.5 * (x2 - x0)
        blocks = []
        for xl, xr in ((x0, xm), (xm, x2)):
            j_child = 0.5 * (xr - xl)
            x_nodes = 0.5 * (1.0 - basis.nodes) * xl + 0.5 * (1.0 + basis.nodes) * xr
            r_parent = 2.0 * (x_nodes - x0) / (x2 - x0) - 1.0
            v_child = npleg.legvander(r_parent, basis.order)
            blocks.append((j_child / j_parent) * (v_child * basis.weights[:, None]).T)
            s = 0 if xl == x0 else 1
            prolong[c, s * m:(s + 1) * m, :] = lagrange_eval_matrix(
                basis.nodes, basis.bary, r_parent
            )
        modal = (k + 0.5)[:, None] * np.hstack(blocks)
        restrict[c] = v_parent @ modal
    return restrict, prolong


def restrict_h(u, fine_mesh, coarse_mesh, basis):
    r, _ = h_transfer_tensors(fine_mesh, coarse_mesh, basis)
    return apply_h_restriction(u, r)


def prolong_h(u, fine_mesh, coarse_mesh, basis):
    _, p = h_transfer_tensors(fine_mesh, coarse_mesh, basis)
    return apply_h_prolongation(u, p)


def apply_h_restriction(u, tensors):
    nc = tensors.shape[0]
    pairs = u.reshape(nc, -1)
    return np.einsum("cij,cj->ci", tensors, pairs)


def apply_h_prolongation(u, tensors):
    nc, two_m, m = tensors.shape
    out = np.einsum("cij,cj->ci", tensors, u)
    return out.reshape(2 * nc, m)


# ---------------------------------------------------------------------------
# levels and hierarchy


class Level:
    """One discretization level plus its smoother state and transfer ops.

    For the linear equation the tendency is an affine map of the nodal
    values; it is probed once per boundary condition and applied as a dense
    matrix-vector product, which keeps V-cycles cheap at training scale.
    The nodal compute_rhs path is retained for Burgers and as the reference
    the affine cache is probed from.
    """

    def __init__(self, kind, basis, mesh, eq, cfl=None):
        self.kind = kind
        self.basis = basis
        self.mesh = mesh
        self.eq = eq
        self.cfl = default_cfl(basis.order, eq.kind) if cfl is None else cfl
        self.ref = f"{kind}{basis.order}" if kind == "p" else f"h{mesh.n_elements}"
        self.x_nodes = mesh.node_coords(basis)
        self.source_values = eq.source(self.x_nodes) if eq.has_source else None
        self.restrict_op = None
        self.prolong_op = None
        self._h_transfer = None
        self._affine = {}
        self._dt = {}

    @property
    def shape(self):
        return (self.mesh.n_elements, self.basis.n_nodes)

    def _affine_for(self, bc):
        key = (bc.left, bc.right)
        op = self._affine.get(key)
        if op is None:
            n, m = self.shape
            dim = n * m
            zero = np.zeros((n, m))
            offset = compute_rhs(zero, self.basis, self.mesh, self.eq, bc).reshape(-1)
            mat = np.empty((dim, dim))
            e = np.zeros((n, m))
            flat = e.reshape(-1)
            for j in range(dim):
                flat[j] = 1.0
                col = compute_rhs(e, self.basis, self.mesh, self.eq, bc).reshape(-1)
                mat[:, j] = col - offset
                flat[j] = 0.0
            op = (mat, offset)
            self._affine[key] = op
        return op

    def tendency(self, u, bc):
        """du/dt on this level; raises NonFiniteInput on a bad field."""
        if self.eq.kind == LINEAR:
            if not np.all(np.isfinite(u)):
                raise NonFiniteInput("solution field contains NaN or Inf")
            mat, offset = self._affine_for(bc)
            with np.errstate(over="ignore", invalid="ignore"):
                return (mat @ u.reshape(-1) + offset).reshape(self.shape)
        return compute_rhs(u, self.basis, self.mesh, self.eq, bc, self.source_values)

    def residual_norm(self, u, bc):
        if not np.all(np.isfinite(u)):
            return np.inf
        return rms(self.tendency(u, bc))

    def sweep_dt(self, u, bc=None):
        """Smoother step size.

        For the linear equation the step is tuned once per boundary
        condition from the operator spectrum: 0.8 times the largest
        RK4-stable dt, which parks the stiffest mode in the strongly damped
        part of the stability region.  Burgers falls back to the formula
        bound with the calibrated per-order CFL, recomputed every sweep
        from the current wave speed.
        """
        if self.eq.kind != LINEAR or bc is None:
            return stable_dt(self.basis, self.mesh, self.eq, self.cfl, u)
        key = (bc.left, bc.right)
        dt = self._dt.get(key)
        if dt is None:
            mat, _ = self._affine_for(bc)
            lam = np.linalg.eigvals(mat)
            lo, hi = 0.0, 8.0 / max(np.abs(lam).max(), 1e-30)
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                z = lam * mid
                amp = np.abs(1.0 + z + z**2 / 2.0 + z**3 / 6.0 + z**4 / 24.0)
                if (amp <= 1.0 + 1e-12).all():
                    lo = mid
                else:
                    hi = mid
            dt = 0.8 * lo
            self._dt[key] = dt
        return dt

    def smooth(self, u, bc, sweeps, forcing=None):
        """RK4 pseudo-time sweeps of du/dt = R(u) - forcing, in place on a
        fresh array.  Raises _Blown if the field leaves the finite range."""
        for _ in range(sweeps):
            dt = self.sweep_dt(u, bc)
            with np.errstate(over="ignore", invalid="ignore"):
                k1 = self.tendency(u, bc)
                if forcing is not None:
                    k1 = k1 - forcing
                k2 = self.tendency(u + 0.5 * dt * k1, bc)
                if forcing is not None:
                    k2 = k2 - forcing
                k3 = self.tendency(u + 0.5 * dt * k2, bc)
                if forcing is not None:
                    k3 = k3 - forcing
                k4 = self.tendency(u + dt * k3, bc)
                if forcing is not None:
                    k4 = k4 - forcing
                u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(u)):
                raise _Blown()
        return u

    def restrict(self, values):
        """Transfer nodal values (solution or residual) to the next coarser
        level with the element-local L2 projection."""
        if self.restrict_op is None:
            raise RuntimeError(f"level {self.ref} has no coarser neighbour")
        if self._h_transfer:
            return apply_h_restriction(values, self.restrict_op)
        return values @ self.restrict_op.T

    def prolong(self, values):
        """Bring values from the next coarser level up to this one."""
        if self.prolong_op is None:
            raise RuntimeError(f"level {self.ref} has no coarser neighbour")
        if self._h_transfer:
            return apply_h_prolongation(values, self.prolong_op)
        return values @ self.prolong_op.T


class MultigridHierarchy:
    """Ordered levels finest to coarsest with wired transfer operators."""

    def __init__(self, levels, eq, order, mode):
        self.levels = levels
        self.eq = eq
        self.order = order
        self.mode = mode

    def __len__(self):
        return len(self.levels)

    @property
    def finest(self):
        return self.levels[0]

    def pattern_sweeps(self, i):
        """Linear sweep pattern: 1 at the coarsest level, increasing by one
        per finer level."""
        return len(self.levels) - i

    def residual_norm(self, u, bc):
        return self.finest.residual_norm(u, bc)

    def initial_field(self, values_fn):
        return values_fn(self.finest.x_nodes)


def build_hierarchy(order, mesh, eq, mode="hp", cfl=None):
    """Construct the p-levels (orders P..0) and, in "hp" mode, three halved
    h-levels; precompute all transfer operators.

    h/p mode requires the element count to be divisible by 8.  cfl=None
    selects the calibrated per-order smoother CFL on every level.
    """
    if order < 1:
        raise ValueError("need polynomial order >= 1")
    if mode not in ("hp", "p"):
        raise ValueError(f"unknown multigrid mode {mode!r}")
    if mode == "hp" and mesh.n_elements % 8 != 0:
        raise InvalidMesh("h/p hierarchy needs an element count divisible by 8")

    bases = [build_basis(p) for p in range(order + 1)]
    levels = [Level("p", bases[p], mesh, eq, cfl) for p in range(order, -1, -1)]
    if mode == "hp":
        m = mesh
        for _ in range(H_LEVELS):
            m = m.coarsened()
            levels.append(Level("h", bases[0], m, eq, cfl))

    for fine, coarse in zip(levels, levels[1:]):
        if fine.basis.order != coarse.basis.order:
            fine.restrict_op = p_restriction_matrix(fine.basis, coarse.basis)
            fine.prolong_op = p_prolongation_matrix(coarse.basis, fine.basis)
            fine._h_transfer = False
        else:
            r, p = h_transfer_tensors(fine.mesh, coarse.mesh, fine.basis)
            fine.restrict_op = r
            fine.prolong_op = p
            fine._h_transfer = True
    return MultigridHierarchy(levels, eq, order, mode)


# ---------------------------------------------------------------------------
# cycle parameters and statistics


@dataclass(frozen=True)
class VCycleParams:
    """Per-cycle tunables: pre-sweeps for p-levels P..1, post-sweeps for the
    intermediate p-levels P-1..1, and the finest-level correction fraction.

    The correction fraction is 1 on every non-finest level, and the order-0
    and h-levels always follow the hierarchy's linear sweep pattern.
    """

    pre_sweeps: tuple
    post_sweeps: tuple
    alpha_finest: float
    sweep_max: int = 10

    def __post_init__(self):
        object.__setattr__(self, "pre_sweeps", tuple(int(s) for s in self.pre_sweeps))
        object.__setattr__(self, "post_sweeps", tuple(int(s) for s in self.post_sweeps))
        for s in self.pre_sweeps + self.post_sweeps:
            if not 1 <= s <= self.sweep_max:
                raise ValueError(f"sweep count {s} outside [1, {self.sweep_max}]")
        if not 0.0 < self.alpha_finest <= 1.0:
            raise ValueError("alpha_finest must lie in (0, 1]")

    def validate_for(self, hierarchy):
        p = hierarchy.order
        if len(self.pre_sweeps) != p:
            raise ValueError(f"expected {p} pre-sweep entries, got {len(self.pre_sweeps)}")
        if len(self.post_sweeps) != p - 1:
            raise ValueError(
                f"expected {p - 1} post-sweep entries, got {len(self.post_sweeps)}"
            )


@dataclass
class CycleStats:
    residual_before: float
    residual_after: float
    wall_time: float
    rhs_evals: int
    diverged: bool = False


def baseline_params(hierarchy, alpha_finest=0.1):
    """Heuristic reference parameterization: linear sweep pattern on every
    level and a damped finest-level correction."""
    p = hierarchy.order
    pre = tuple(hierarchy.pattern_sweeps(i) for i in range(p))
    post = tuple(hierarchy.pattern_sweeps(i) for i in range(1, p))
    cap = max(10, len(hierarchy.levels))
    return VCycleParams(pre, post, alpha_finest, sweep_max=cap)


def constant_params_provider(params):
    return lambda prev: params


# ---------------------------------------------------------------------------
# the V-cycle


def _pre_count(hierarchy, params, i):
    if i < hierarchy.order:
        return params.pre_sweeps[i]
    return hierarchy.pattern_sweeps(i)


def _post_count(hierarchy, params, i):
    if i == 0:
        return 0
    if i < hierarchy.order:
        return params.post_sweeps[i - 1]
    return hierarchy.pattern_sweeps(i)


def _fas(hierarchy, i, u, forcing, params, bc, tally):
    levels = hierarchy.levels
    lvl = levels[i]
    finest = i == 0
    if i == len(levels) - 1:
        u = lvl.smooth(u, bc, 1, forcing)
        return u

    pre = _pre_count(hierarchy, params, i)
    u = lvl.smooth(u, bc, pre, forcing)
    if finest:
        tally[0] += 4 * pre

    resid = lvl.tendency(u, bc)
    if finest:
        tally[0] += 1
    resid = forcing - resid if forcing is not None else -resid

    u_coarse0 = lvl.restrict(u)
    coarse = levels[i + 1]
    forcing_coarse = coarse.tendency(u_coarse0, bc) + lvl.restrict(resid)
    u_coarse = _fas(hierarchy, i + 1, u_coarse0.copy(), forcing_coarse, params, bc, tally)

    alpha = params.alpha_finest if finest else 1.0
    u = u + alpha * lvl.prolong(u_coarse - u_coarse0)

    post = _post_count(hierarchy, params, i)
    if post:
        u = lvl.smooth(u, bc, post, forcing)
        if finest:
            tally[0] += 4 * post
    return u


def v_cycle(u, hierarchy, params, bc):
    """One FAS V-cycle.  Returns (field, CycleStats); on divergence the
    original field is returned with stats.diverged set."""
    params.validate_for(hierarchy)
    t0 = time.perf_counter()
    tally = [0]
    finest = hierarchy.finest
    r_before = finest.residual_norm(u, bc)
    tally[0] += 1
    try:
        out = _fas(hierarchy, 0, u.copy(), None, params, bc, tally)
        r_after = finest.residual_norm(out, bc)
        tally[0] += 1
        if not np.isfinite(r_after):
            raise _Blown()
        diverged = False
    except (_Blown, NonFiniteInput):
        out = u
        r_after = np.inf
        diverged = True
    wall = max(time.perf_counter() - t0, 1e-9)
    return out, CycleStats(r_before, r_after, wall, tally[0], diverged)


def solve_to_steady(u, hierarchy, params_provider, bc, tol=1e-9, max_cycles=50000):
    """Repeat V-cycles until the finest RMS residual drops below tol.

    params_provider is called with the previous CycleStats (None on the
    first cycle) and must return the VCycleParams for the next cycle.
    Raises Diverged / MaxCyclesExceeded with the last good field attached.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    history = []
    if hierarchy.residual_norm(u, bc) <= tol:
        return u, history
    prev = None
    for _ in range(max_cycles):
        params = params_provider(prev)
        u_new, stats = v_cycle(u, hierarchy, params, bc)
        history.append(stats)
        if stats.diverged:
            raise Diverged("V-cycle diverged", field=u, history=history)
        u = u_new
        prev = stats
        if stats.residual_after <= tol:
            return u, history
    raise MaxCyclesExceeded(
        f"residual above {tol} after {max_cycles} cycles", field=u, history=history
    )


def relax_to_steady(level, u, bc, tol=1e-9, max_steps=200000):
    """Single-grid RK4 reference: pseudo-time march one level to the target
    residual.  Returns (field, steps, rhs_evals) with the same finest-level
    eval accounting as the V-cycle."""
    evals = 0
    for step in range(max_steps):
        r = level.residual_norm(u, bc)
        evals += 1
        if not np.isfinite(r):
            raise Diverged("single-grid relaxation diverged", field=u)
        if r <= tol:
            return u, step, evals
        try:
            u = level.smooth(u, bc, 1)
        except _Blown:
            raise Diverged("single-grid relaxation diverged", field=u)
        evals += 4
    raise MaxCyclesExceeded(f"residual above {tol} after {max_steps} steps", field=u)
