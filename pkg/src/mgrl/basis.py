"""Nodal reference-element basis: Gauss-Legendre points, Lagrange
differentiation, and Radau correction-function derivatives."""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg


def barycentric_weights(nodes):
    n = nodes.size
    w = np.ones(n)
    for i in range(n):
        for j in range(n):
            if j != i:
                w[i] /= nodes[i] - nodes[j]
    return w


def lagrange_eval_vector(nodes, bary, x):
    """Row vector v with v @ u = (nodal polynomial through u)(x)."""
    diff = x - nodes
    hit = np.isclose(diff, 0.0, atol=1e-14)
    if np.any(hit):
        v = np.zeros_like(nodes)
        v[np.argmax(hit)] = 1.0
        return v
    t = bary / diff
    return t / t.sum()


def lagrange_eval_matrix(nodes, bary, points):
    """Stacked evaluation rows, shape (len(points), len(nodes))."""
    return np.array([lagrange_eval_vector(nodes, bary, x) for x in np.atleast_1d(points)])


def differentiation_matrix(nodes, bary):
    n = nodes.size
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d[i, j] = (bary[j] / bary[i]) / (nodes[i] - nodes[j])
        d[i, i] = -d[i].sum()
    return d


def correction_function_derivs(p):
    """Derivatives of the boundary correction functions at the Gauss nodes.

    The left correction function is the right-Radau polynomial of degree
    P+1, i.e. g_L = (-1)^(P+1)/2 * (L_{P+1} - L_P), which equals 1 at
    r = -1 and 0 at r = +1.  The right function is its mirror g_R(r) =
    g_L(-r); by the symmetry of the Gauss nodes its derivative values are
    the reversed, negated left values.
    """
    nodes, _ = npleg.leggauss(p + 1)
    coeffs = np.zeros(p + 2)
    coeffs[p + 1] = 1.0
    coeffs[p] = -1.0
    coeffs *= 0.5 * (-1.0) ** (p + 1)
    gl_deriv = npleg.legval(nodes, npleg.legder(coeffs))
    gr_deriv = -gl_deriv[::-1]
    return gl_deriv, gr_deriv


@dataclass(frozen=True)
class Basis:
    """Degree-P nodal basis at the P+1 Gauss-Legendre points.

    diff_matrix maps nodal values to nodal derivative values;
    interp_left / interp_right evaluate the nodal polynomial at r = -1 / +1;
    gl_deriv / gr_deriv are the correction-function derivatives at the nodes.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    bary: np.ndarray
    diff_matrix: np.ndarray
    interp_left: np.ndarray
    interp_right: np.ndarray
    gl_deriv: np.ndarray
    gr_deriv: np.ndarray

    @property
    def n_nodes(self):
        return self.order + 1


def build_basis(p):
    if p < 0:
        raise ValueError("polynomial degree must be >= 0")
    nodes, weights = npleg.leggauss(p + 1)
    bary = barycentric_weights(nodes)
    gl_deriv, gr_deriv = correction_function_derivs(p)
    return Basis(
        order=p,
        nodes=nodes,
        weights=weights,
        bary=bary,
        diff_matrix=differentiation_matrix(nodes, bary),
        interp_left=lagrange_eval_vector(nodes, bary, -1.0),
        interp_right=lagrange_eval_vector(nodes, bary, 1.0),
        gl_deriv=gl_deriv,
        gr_deriv=gr_deriv,
    )
