"""Model equations, interface Riemann solvers, and reference profiles."""

from dataclasses import dataclass

import numpy as np

LINEAR = "linear"
BURGERS = "burgers"


@dataclass(frozen=True)
class EquationSpec:
    """One of the two scalar model equations.

    kind: "linear" (advection-diffusion, flux a*u) or "burgers" (flux u^2/2
    plus a fixed analytic source).  nu is the kinematic viscosity; a is the
    advection speed and is ignored for Burgers.
    """

    kind: str
    a: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        if self.kind not in (LINEAR, BURGERS):
            raise ValueError(f"unknown equation kind {self.kind!r}")
        if self.nu < 0.0:
            raise ValueError("viscosity must be non-negative")

    @property
    def has_source(self):
        return self.kind == BURGERS

    def source(self, x):
        if self.kind == BURGERS:
            return burgers_source(x, self.nu)
        return np.zeros_like(x)


def linear_advection_diffusion(a, nu):
    return EquationSpec(LINEAR, a=a, nu=nu)


def burgers(nu):
    return EquationSpec(BURGERS, nu=nu)


@dataclass(frozen=True)
class BoundaryCondition:
    """Dirichlet data at x = 0 and x = 1."""

    left: float
    right: float

    def __post_init__(self):
        if not (np.isfinite(self.left) and np.isfinite(self.right)):
            raise ValueError("boundary values must be finite")


def flux(u, eq):
    if eq.kind == LINEAR:
        return eq.a * u
    return 0.5 * u * u


def numerical_flux_inviscid(u_left, u_right, eq):
    """Roe-type interface flux.

    For the linear flux this is exact upwinding; for Burgers the linearized
    wave speed is the arithmetic mean of the two states.
    """
    if eq.kind == LINEAR:
        speed = eq.a
    else:
        speed = 0.5 * (u_left + u_right)
    central = 0.5 * (flux(u_left, eq) + flux(u_right, eq))
    return central - 0.5 * np.abs(speed) * (u_right - u_left)


def numerical_flux_viscous(u_left, u_right, q_left, q_right):
    """LDG alternating interface values: solution from the left element,
    gradient from the right.  The viscous interface flux is nu * q_hat."""
    return u_left, q_right


def burgers_source(x, nu):
    """Source term that keeps the Burgers steady state non-constant."""
    two_pi_x = 2.0 * np.pi * x
    c = np.cos(two_pi_x)
    s = np.sin(two_pi_x)
    return 2.0 * np.pi * (c * c - s * s) + nu * 2.0 * np.pi * (s + c)


def initial_condition(x):
    """Multi-frequency sine profile used to start every run."""
    k = np.array([2, 3, 4, 6, 8, 10, 12], dtype=float)
    return 0.25 * np.sin(np.pi * np.multiply.outer(x, k)).sum(axis=-1)


def steady_advection_diffusion(x, a, nu):
    """Steady profile of a*u_x = nu*u_xx with u(0) = 0, u(1) = 1.

    Evaluated in the shifted form (exp(a(x-1)/nu) - exp(-a/nu)) /
    (1 - exp(-a/nu)) to avoid overflow at large a/nu.
    """
    if nu <= 0.0:
        raise ValueError("steady profile requires nu > 0")
    ratio = a / nu
    x = np.asarray(x, dtype=float)
    num = np.exp(ratio * (x - 1.0)) - np.exp(-ratio)
    return num / (1.0 - np.exp(-ratio))


def dirichlet_for(eq):
    """Benchmark Dirichlet data: endpoint values of the steady reference
    (0 and 1 for the linear profile; 1 and 1 for the Burgers target)."""
    if eq.kind == LINEAR:
        return BoundaryCondition(0.0, 1.0)
    return BoundaryCondition(1.0, 1.0)
