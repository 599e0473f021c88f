"""Channel-with-obstacle domain, triangulation, and P1 discrete calculus.

The domain is the rectangle [-L, L] x [0, H] with a circular-arc bump of
chord c and height h_b centered on the bottom wall; the fluid fills the
region above the bump.  The grid is structured: vertical mesh lines are
kept and each column is graded between the bump surface and the lid, then
every quad is split into two triangles.  Boundary edges carry one of two
tags: OBSTACLE on the bump arc, FARFIELD everywhere else, with unit
normals pointing into the fluid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

OBSTACLE = 1
FARFIELD = 2


@dataclass(frozen=True)
class DomainSpec:
    """Geometry: channel half-length, height, bump chord/height, target h."""
    half_length: float = 2.0
    height: float = 1.0
    chord: float = 1.0
    bump_height: float = 0.05
    h_mesh: float = 1.0 / 32.0

    def __post_init__(self):
        if min(self.half_length, self.height, self.chord, self.h_mesh) <= 0:
            raise ValueError("all lengths must be positive")
        if self.bump_height < 0 or self.bump_height >= self.height / 2:
            raise ValueError("bump height must lie in [0, height/2)")
        if self.chord / 2 >= self.half_length:
            raise ValueError("bump endpoints must lie on the bottom wall")

    @property
    def arc_radius(self) -> float:
        if self.bump_height == 0:
            return math.inf
        c, h = self.chord, self.bump_height
        return (c * c / 4.0 + h * h) / (2.0 * h)

    @property
    def arc_length(self) -> float:
        if self.bump_height == 0:
            return self.chord
        R = self.arc_radius
        return 2.0 * R * math.asin(self.chord / (2.0 * R))

    def bump_profile(self, x):
        """Bottom-wall elevation y_b(x)."""
        x = np.asarray(x, dtype=float)
        if self.bump_height == 0:
            return np.zeros_like(x)
        R = self.arc_radius
        yc = self.bump_height - R
        inside = np.abs(x) < self.chord / 2.0
        y = np.where(inside,
                     yc + np.sqrt(np.clip(R * R - x * x, 0.0, None)), 0.0)
        return np.clip(y, 0.0, None)

    def boundary_length(self) -> float:
        """Perimeter: rectangle with the chord replaced by the arc."""
        return (2.0 * (2.0 * self.half_length) + 2.0 * self.height
                + (self.arc_length - self.chord))


@dataclass
class Mesh:
    """Conforming triangulation with tagged boundary and P1 operators."""

    vertices: np.ndarray       # (n, 2)
    triangles: np.ndarray      # (m, 3) positively oriented
    boundary_edges: np.ndarray  # (b, 2) vertex pairs
    boundary_tags: np.ndarray   # (b,) OBSTACLE | FARFIELD
    spec: DomainSpec

    def __post_init__(self):
        v, t = self.vertices, self.triangles
        p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        d1, d2 = p1 - p0, p2 - p0
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.areas <= 0):
            raise ValueError("triangulation contains degenerate/flipped cells")
        # P1 basis gradients per triangle: grads[m, i, :] for local node i
        inv2A = 1.0 / (2.0 * self.areas)
        g0 = np.stack([p1[:, 1] - p2[:, 1], p2[:, 0] - p1[:, 0]], axis=1)
        g1 = np.stack([p2[:, 1] - p0[:, 1], p0[:, 0] - p2[:, 0]], axis=1)
        g2 = np.stack([p0[:, 1] - p1[:, 1], p1[:, 0] - p0[:, 0]], axis=1)
        self.grads = np.stack([g0, g1, g2], axis=1) * inv2A[:, None, None]
        # boundary edge geometry with inward normals (into the fluid)
        be, v = self.boundary_edges, self.vertices
        tang = v[be[:, 1]] - v[be[:, 0]]
        self.edge_lengths = np.hypot(tang[:, 0], tang[:, 1])
        nrm = np.stack([-tang[:, 1], tang[:, 0]], axis=1) \
            / self.edge_lengths[:, None]
        self.edge_midpoints = 0.5 * (v[be[:, 0]] + v[be[:, 1]])
        # orient towards the domain interior using the centroid of an
        # adjacent triangle
        adj = self._adjacent_triangle_centroids()
        flip = np.sum(nrm * (adj - self.edge_midpoints), axis=1) < 0
        nrm[flip] *= -1.0
        self.edge_normals_in = nrm

    def _adjacent_triangle_centroids(self):
        edge_map = {}
        for it, tri in enumerate(self.triangles):
            for a, b in ((0, 1), (1, 2), (2, 0)):
                edge_map[frozenset((tri[a], tri[b]))] = it
        cents = self.vertices[self.triangles].mean(axis=1)
        out = np.empty((len(self.boundary_edges), 2))
        for i, (a, b) in enumerate(self.boundary_edges):
            out[i] = cents[edge_map[frozenset((a, b))]]
        return out

    # ---- topology ------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def edge_count(self) -> int:
        edges = set()
        for tri in self.triangles:
            for a, b in ((0, 1), (1, 2), (2, 0)):
                edges.add(frozenset((tri[a], tri[b])))
        return len(edges)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.edge_count() + len(self.triangles)

    def min_angle_degrees(self) -> float:
        v, t = self.vertices, self.triangles
        worst = 180.0
        p = v[t]  # (m, 3, 2)
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(a * b, axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            ang = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
            worst = min(worst, float(ang.min()))
        return worst

    def boundary_nodes(self, tag: int) -> np.ndarray:
        mask = self.boundary_tags == tag
        return np.unique(self.boundary_edges[mask].ravel())

    # ---- P1 calculus -----------------------------------------------------

    def gradient(self, field: np.ndarray) -> np.ndarray:
        """Per-triangle gradient of a nodal field; exact for affine fields."""
        field = np.asarray(field, dtype=float)
        return np.einsum("mi,mid->md", field[self.triangles], self.grads)

    def integrate(self, cell_values: np.ndarray) -> float:
        """Integral of a per-triangle quantity."""
        return float(np.sum(self.areas * np.asarray(cell_values)))

    def integrate_nodal(self, field: np.ndarray) -> float:
        """Integral of a P1 field (vertex average rule; exact for P1)."""
        return float(np.sum(self.areas
                            * np.asarray(field)[self.triangles].mean(axis=1)))

    def l2_norm(self, field: np.ndarray) -> float:
        """Lumped-mass L2 norm of a nodal field."""
        field = np.asarray(field, dtype=float)
        acc = np.sum(self.areas * (field[self.triangles] ** 2).mean(axis=1))
        return math.sqrt(max(acc, 0.0))

    def boundary_flux(self, vector_nodal: np.ndarray, tag: int,
                      inward: bool = True) -> float:
        """Edge-midpoint quadrature of the normal flux over tagged edges."""
        vec = np.asarray(vector_nodal, dtype=float)
        mask = self.boundary_tags == tag
        be = self.boundary_edges[mask]
        mid = 0.5 * (vec[be[:, 0]] + vec[be[:, 1]])
        nrm = self.edge_normals_in[mask]
        sgn = 1.0 if inward else -1.0
        return sgn * float(np.sum(np.sum(mid * nrm, axis=1)
                                  * self.edge_lengths[mask]))

    def boundary_integral(self, edge_values: np.ndarray, tag: int) -> float:
        """Integral over tagged edges of per-edge midpoint values."""
        mask = self.boundary_tags == tag
        return float(np.sum(np.asarray(edge_values)
                            * self.edge_lengths[mask]))

    def weak_divergence(self, vector_nodal: np.ndarray, test_nodal) -> float:
        """int psi div F := boundary term - int F . grad psi (P1 weak form)."""
        vec = np.asarray(vector_nodal, dtype=float)
        psi = np.asarray(test_nodal, dtype=float)
        gpsi = self.gradient(psi)
        mean_vec = vec[self.triangles].mean(axis=1)
        interior = np.sum(self.areas * np.sum(mean_vec * gpsi, axis=1))
        bnd = 0.0
        for tag in (OBSTACLE, FARFIELD):
            mask = self.boundary_tags == tag
            be = self.boundary_edges[mask]
            midv = 0.5 * (vec[be[:, 0]] + vec[be[:, 1]])
            midp = 0.5 * (psi[be[:, 0]] + psi[be[:, 1]])
            flux_out = -np.sum(midv * self.edge_normals_in[mask], axis=1)
            bnd += np.sum(midp * flux_out * self.edge_lengths[mask])
        return float(bnd - interior)

    def stiffness_matrix(self) -> sp.csr_matrix:
        """Assembled P1 Laplacian (no boundary conditions applied)."""
        m = len(self.triangles)
        local = np.einsum("mid,mjd->mij", self.grads, self.grads) \
            * self.areas[:, None, None]
        rows = np.repeat(self.triangles, 3, axis=1).reshape(m, 3, 3)
        cols = np.tile(self.triangles, 3).reshape(m, 3, 3)
        K = sp.coo_matrix((local.ravel(),
                           (rows.ravel(), cols.ravel())),
                          shape=(self.n_vertices, self.n_vertices))
        return K.tocsr()

    def divergence_rhs(self, vector_nodal: np.ndarray) -> np.ndarray:
        """Load vector b_i = int F . grad(lambda_i) dx for P1 F."""
        vec = np.asarray(vector_nodal, dtype=float)
        mean_vec = vec[self.triangles].mean(axis=1)  # (m, 2)
        contrib = np.einsum("md,mid->mi", mean_vec, self.grads) \
            * self.areas[:, None]
        b = np.zeros(self.n_vertices)
        np.add.at(b, self.triangles, contrib)
        return b


def build_mesh(spec: DomainSpec) -> Mesh:
    """Structured graded triangulation of the channel with the bump."""
    L, H, c = spec.half_length, spec.height, spec.chord
    h = spec.h_mesh
    # x-nodes: uniform segments snapped to the bump endpoints
    n_left = max(int(round((L - c / 2) / h)), 2)
    n_mid = max(int(round(c / h)), 32 if spec.bump_height > 0 else 2)
    xs = np.concatenate([
        np.linspace(-L, -c / 2, n_left + 1)[:-1],
        np.linspace(-c / 2, c / 2, n_mid + 1)[:-1],
        np.linspace(c / 2, L, n_left + 1),
    ])
    ny = max(int(round(H / h)), 4)
    nx = len(xs) - 1
    yb = spec.bump_profile(xs)
    frac = np.arange(ny + 1) / ny
    Y = yb[:, None] + (H - yb[:, None]) * frac[None, :]
    X = np.repeat(xs[:, None], ny + 1, axis=1)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    triangles = np.asarray(tris, dtype=np.int64)

    edges, tags = [], []
    for i in range(nx):  # bottom and top walls
        edges.append((vid(i, 0), vid(i + 1, 0)))
        xm = 0.5 * (xs[i] + xs[i + 1])
        on_bump = spec.bump_height > 0 and abs(xm) < c / 2
        tags.append(OBSTACLE if on_bump else FARFIELD)
        edges.append((vid(i, ny), vid(i + 1, ny)))
        tags.append(FARFIELD)
    for j in range(ny):  # inlet and outlet
        edges.append((vid(0, j), vid(0, j + 1)))
        tags.append(FARFIELD)
        edges.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(FARFIELD)
    return Mesh(vertices, triangles, np.asarray(edges, dtype=np.int64),
                np.asarray(tags, dtype=np.int64), spec)


def write_vtk(path: str, mesh: Mesh, point_fields: dict | None = None,
              cell_fields: dict | None = None) -> None:
    """Legacy ASCII VTK polydata export (POINTS/POLYGONS + data sections)."""
    v, t = mesh.vertices, mesh.triangles
    lines = ["# vtk DataFile Version 3.0", "cavlab mesh", "ASCII",
             "DATASET POLYDATA", f"POINTS {len(v)} double"]
    for x, y in v:
        lines.append(f"{x:.17g} {y:.17g} 0.0")
    lines.append(f"POLYGONS {len(t)} {4 * len(t)}")
    for a, b, c in t:
        lines.append(f"3 {a} {b} {c}")
    if point_fields:
        lines.append(f"POINT_DATA {len(v)}")
        for name, vals in point_fields.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{float(x):.17g}" for x in vals)
    lines.append(f"CELL_DATA {len(t)}")
    lines.append("SCALARS area double 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{float(a):.17g}" for a in mesh.areas)
    if cell_fields:
        for name, vals in cell_fields.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{float(x):.17g}" for x in vals)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
