"""Flux-reconstruction spatial operator and the RK4 pseudo-time smoother.

Solution fields are (N, P+1) arrays of nodal values, one row per element.
The semi-discrete tendency du/dt is assembled per element as

    du/dt = -(1/J_j) d/dr [ f_disc(r) + (F_L - f_disc(-1)) g_L(r)
                                       + (F_R - f_disc(+1)) g_R(r) ]

where f_disc is the nodal flux polynomial, F_L/F_R are the common interface
fluxes, and g_L/g_R are the Radau correction functions.  Viscous terms use
a two-pass LDG reconstruction of the gradient.
"""

from dataclasses import dataclass

import numpy as np

from .equations import LINEAR, flux, numerical_flux_inviscid


class NonFiniteInput(ValueError):
    """A solution field contained NaN or Inf."""


# Weight of the consistent penalty closing the LDG gradient at the right
# Dirichlet end; vanishes on the exact solution.  The value is calibrated so
# the last element's bubble mode stays inside the smoother's damped band at
# every viscosity (the penalty's contribution to lambda*dt is scale-free).
BOUNDARY_PENALTY = 8.0


@dataclass
class SolutionField:
    """Nodal coefficients tagged with the (mesh, basis) level they live on."""

    level_ref: str
    coeffs: np.ndarray

    def validate(self, n_elements, order):
        if self.coeffs.shape != (n_elements, order + 1):
            raise ValueError(
                f"field shape {self.coeffs.shape} != ({n_elements}, {order + 1})"
            )

    @property
    def is_finite(self):
        return bool(np.all(np.isfinite(self.coeffs)))


def _interface_states(u, basis, bc):
    """Left/right solution states at the N+1 interfaces, ghost cells from
    the Dirichlet data."""
    ul = u @ basis.interp_left
    ur = u @ basis.interp_right
    left = np.empty(u.shape[0] + 1)
    right = np.empty(u.shape[0] + 1)
    left[0] = bc.left
    left[1:] = ur
    right[:-1] = ul
    right[-1] = bc.right
    return ul, ur, left, right


def _corrected_derivative(v, basis, dv_left, dv_right):
    """d/dr of the corrected polynomial: nodal derivative plus the jump
    terms scaled by the correction-function derivatives."""
    return (
        v @ basis.diff_matrix.T
        + dv_left[:, None] * basis.gl_deriv
        + dv_right[:, None] * basis.gr_deriv
    )


def reconstruct_gradient(u, basis, mesh, bc):
    """LDG first pass: FR reconstruction of q = du/dx.

    Interface solution values are taken from the left element; both domain
    ends use the Dirichlet value so that the boundary data reaches the
    viscous operator (with upwinding the inviscid flux ignores the outflow
    ghost state, so this is the only path for the right-end condition).
    """
    ul, ur, u_hat, _ = _interface_states(u, basis, bc)
    u_hat[-1] = bc.right
    dudr = _corrected_derivative(u, basis, u_hat[:-1] - ul, u_hat[1:] - ur)
    return dudr / mesh.jacobians[:, None]


def compute_rhs(u, basis, mesh, eq, bc, source_values=None):
    """Semi-discrete tendency du/dt, shape (N, P+1).

    Raises NonFiniteInput if the field contains NaN/Inf.  source_values may
    carry precomputed source nodal values; otherwise they are evaluated on
    the fly for equations that have a source.
    """
    if not np.all(np.isfinite(u)):
        raise NonFiniteInput("solution field contains NaN or Inf")

    with np.errstate(over="ignore", invalid="ignore"):
        ul, ur, left, right = _interface_states(u, basis, bc)
        f_common = numerical_flux_inviscid(left, right, eq)
        f = flux(u, eq)

        if eq.nu > 0.0:
            q = reconstruct_gradient(u, basis, mesh, bc)
            ql = q @ basis.interp_left
            qr = q @ basis.interp_right
            # gradient from the right element; the right domain end falls
            # back to the interior trace plus a penalty that keeps the
            # boundary bubble mode well damped (the alternating pattern has
            # no right-side gradient to take there)
            q_hat = np.empty(u.shape[0] + 1)
            q_hat[:-1] = ql
            q_hat[-1] = qr[-1] - BOUNDARY_PENALTY * (ur[-1] - bc.right) / mesh.widths[-1]
            f = f - eq.nu * q
            f_common = f_common - eq.nu * q_hat

        fl = f @ basis.interp_left
        fr = f @ basis.interp_right
        dfdr = _corrected_derivative(f, basis, f_common[:-1] - fl, f_common[1:] - fr)
        out = -dfdr / mesh.jacobians[:, None]

    if source_values is not None:
        out += source_values
    elif eq.has_source:
        out += eq.source(mesh.node_coords(basis))
    return out


def rk4_step(u, basis, mesh, eq, bc, dt, forcing=None, source_values=None):
    """Classical four-stage Runge-Kutta step of the tendency.

    forcing, when given, shifts the marched equation to du/dt = R(u) - forcing
    (the multigrid level equation).  The input field is never modified.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    def g(v):
        r = compute_rhs(v, basis, mesh, eq, bc, source_values)
        return r - forcing if forcing is not None else r

    with np.errstate(over="ignore", invalid="ignore"):
        k1 = g(u)
        k2 = g(u + 0.5 * dt * k1)
        k3 = g(u + 0.5 * dt * k2)
        k4 = g(u + dt * k3)
        return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def residual_norm(u, basis, mesh, eq, bc, source_values=None):
    """RMS of the tendency over all nodes; +Inf when the field is not finite."""
    if not np.all(np.isfinite(u)):
        return np.inf
    r = compute_rhs(u, basis, mesh, eq, bc, source_values)
    return rms(r)


def rms(values):
    v = np.asarray(values)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.sqrt(np.mean(v * v))
    return out if np.isfinite(out) else np.inf


# Largest RK4-stable multiple of the stable_dt bound per polynomial order,
# measured from the operator spectrum over uniform/perturbed meshes and the
# full benchmark coefficient range, with ~15% margin.
_DEFAULT_CFL = {0: 0.45, 1: 0.42, 2: 0.32, 3: 0.23, 4: 0.17, 5: 0.12}


# Burgers runs keep the formula step (no spectral tuning of the nonlinear
# operator), where the boundary-penalty stiffness needs extra headroom.
BURGERS_CFL_FACTOR = 0.6


def default_cfl(order, eq_kind=LINEAR):
    """Safe smoother CFL for a given polynomial order."""
    cfl = _DEFAULT_CFL.get(order, 1.3 / (2 * order + 1))
    if eq_kind != LINEAR:
        cfl *= BURGERS_CFL_FACTOR
    return cfl


def stable_dt(basis, mesh, eq, cfl, u=None):
    """Pseudo-time step from the per-element advective and diffusive limits.

    dt = cfl * min_j min( dx_j / (|s| (2P+1)), dx_j^2 / (nu (2P+1)^2) )
    with s = a for the linear equation and max(1, max|u|) for Burgers.
    A vanishing speed or viscosity drops the corresponding bound.
    """
    if cfl <= 0.0:
        raise ValueError("cfl must be positive")
    if eq.kind == LINEAR:
        s = abs(eq.a)
    else:
        s = 1.0 if u is None else max(1.0, float(np.max(np.abs(u))))
    k = 2 * basis.order + 1
    dx = mesh.widths
    dt = np.inf
    if s > 0.0:
        dt = min(dt, np.min(dx) / (s * k))
    if eq.nu > 0.0:
        dt = min(dt, np.min(dx * dx) / (eq.nu * k * k))
    if not np.isfinite(dt):
        raise ValueError("both advective and diffusive bounds are degenerate")
    return cfl * dt


def l2_norm(u, basis, mesh):
    """Continuous L2 norm of the piecewise-nodal field via Gauss quadrature."""
    return np.sqrt(np.sum(mesh.jacobians[:, None] * basis.weights * u * u))


def l2_error(u, basis, mesh, exact):
    """L2 distance between the field and a callable exact profile."""
    diff = u - exact(mesh.node_coords(basis))
    return l2_norm(diff, basis, mesh)
