"""1D meshes on [0, 1] and the affine reference-element mapping."""

import numpy as np


class InvalidMesh(ValueError):
    """Mesh failed a structural requirement."""


class Mesh1D:
    """Strictly increasing vertex partition of [0, 1].

    Element j spans [x_j, x_{j+1}] and carries the Jacobian
    J_j = (x_{j+1} - x_j) / 2 of the map to the reference interval [-1, 1].
    Instances are immutable after construction.
    """

    __slots__ = ("vertices", "widths", "jacobians")

    def __init__(self, vertices):
        v = np.ascontiguousarray(vertices, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise InvalidMesh("need at least two vertices")
        if not np.all(np.diff(v) > 0.0):
            raise InvalidMesh("vertices must be strictly increasing")
        if v[0] != 0.0 or v[-1] != 1.0:
            raise InvalidMesh("mesh must span [0, 1] exactly")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "widths", np.diff(v))
        object.__setattr__(self, "jacobians", 0.5 * np.diff(v))

    def __setattr__(self, name, value):
        raise AttributeError("Mesh1D is immutable")

    @property
    def n_elements(self):
        return self.vertices.size - 1

    @classmethod
    def uniform(cls, n):
        if n < 1:
            raise InvalidMesh("need at least one element")
        return cls(np.linspace(0.0, 1.0, n + 1))

    @classmethod
    def perturbed(cls, n, seed, amplitude=0.3):
        """Uniform mesh with interior vertices jittered by +-amplitude
        of the local spacing; endpoints stay pinned at 0 and 1.

        amplitude < 0.5 guarantees the vertices stay strictly increasing.
        """
        if not 0.0 <= amplitude < 0.5:
            raise InvalidMesh("amplitude must lie in [0, 0.5)")
        rng = np.random.default_rng(seed)
        v = np.linspace(0.0, 1.0, n + 1)
        h = 1.0 / n
        v[1:-1] += rng.uniform(-amplitude, amplitude, size=n - 1) * h
        return cls(v)

    def coarsened(self):
        """Mesh with half the elements, keeping every other vertex."""
        if self.n_elements % 2 != 0:
            raise InvalidMesh("element count must be even to coarsen")
        return Mesh1D(self.vertices[::2])

    def node_coords(self, basis):
        """Physical coordinates of the basis nodes, shape (N, P+1)."""
        r = basis.nodes
        xl = self.vertices[:-1, None]
        xr = self.vertices[1:, None]
        return 0.5 * (1.0 - r) * xl + 0.5 * (1.0 + r) * xr


def map_ref_to_phys(mesh, j, r):
    """Affine map from reference coordinate r in [-1, 1] to element j."""
    n = mesh.n_elements
    if not 0 <= j < n:
        raise IndexError(f"element index {j} out of range [0, {n})")
    return 0.5 * (1.0 - r) * mesh.vertices[j] + 0.5 * (1.0 + r) * mesh.vertices[j + 1]
