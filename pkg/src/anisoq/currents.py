"""Discretised rectifiable 2-currents in R^4 and piecewise-affine Q-graphs.

A FunctionalQGraph is a Q-valued map on a uniform square mesh, affine on
each half-cell triangle (every cell is split along the same SW-NE diagonal).
Sheets are affine on triangles rather than on full cells because a
continuous map that is affine on every full square cell is necessarily of
the separable form phi(x) + chi(y), which admits no nontrivial zero-boundary
instances; the triangle space is the usual P1 space and supports the random
zero-boundary families used throughout the test harness.

A TriangulatedCurrent is a list of oriented 2-simplices in R^4 with integer
multiplicities; mass, boundary chain, Gaussian image, classification
partition, linear pushforward and distance-sphere slicing are computed
per triangle, exactly for affine data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import exterior
from .construction import build
from .gmeasures import GrassmannMeasure
from .multipoint import QPoint, g_metric

MIN_TRIANGLE_AREA = 1e-14
EDGE_CONTINUITY_TOL = 1e-9
VERTEX_KEY_DECIMALS = 9


@dataclass(frozen=True)
class Mesh:
    """Uniform n x n square mesh over the axis cube D(x0, r)."""

    x0: tuple
    r: float
    n: int

    @property
    def h(self):
        return self.r / self.n

    @property
    def origin(self):
        return np.array(self.x0, dtype=float) - 0.5 * self.r

    def node(self, i, j):
        return self.origin + self.h * np.array([i, j], dtype=float)

    def cell_center(self, i, j):
        return self.origin + self.h * np.array([i + 0.5, j + 0.5])

    def nodes_array(self):
        idx = np.arange(self.n + 1)
        gx, gy = np.meshgrid(idx, idx, indexing="ij")
        return self.origin[None, None, :] + self.h * np.stack([gx, gy], axis=-1)

    def locate(self, x):
        """Cell indices (i, j) containing x (clamped to the mesh)."""
        rel = (np.asarray(x, dtype=float) - self.origin) / self.h
        i = int(np.clip(np.floor(rel[0]), 0, self.n - 1))
        j = int(np.clip(np.floor(rel[1]), 0, self.n - 1))
        return i, j

    def boundary_nodes(self):
        """Boundary nodes in counterclockwise order starting at the SW corner."""
        n = self.n
        out = []
        for i in range(n):
            out.append((i, 0))
        for j in range(n):
            out.append((n, j))
        for i in range(n, 0, -1):
            out.append((i, n))
        for j in range(n, 0, -1):
            out.append((0, j))
        return [self.node(i, j) for (i, j) in out]


# triangle-local node offsets: lower (t=0) and upper (t=1) of each cell,
# both counterclockwise in the base plane
TRI_NODES = (((0, 0), (1, 0), (1, 1)), ((0, 0), (1, 1), (0, 1)))


class FunctionalQGraph:
    """Piecewise-affine Q-valued map on a mesh; sheets per half-cell triangle.

    sheets[i][j][t] is a list of (multiplicity, a, X); the sheet value at x
    is a + X (x - cell_center(i, j)).
    """

    def __init__(self, mesh, sheets, check=True):
        self.mesh = mesh
        self.sheets = sheets
        qs = {
            sum(m for m, _, _ in sheets[i][j][t])
            for i in range(mesh.n)
            for j in range(mesh.n)
            for t in (0, 1)
        }
        if len(qs) != 1:
            raise ValueError("per-triangle multiplicities do not sum to a common Q")
        self.q = qs.pop()
        if check:
            self.validate()

    # -- construction helpers -------------------------------------------------

    @classmethod
    def affine(cls, mesh, parts):
        """Graph of the affine map  sum_j q_j [a_j + X_j (x - x0)]."""
        x0 = np.array(mesh.x0, dtype=float)
        sheets = []
        for i in range(mesh.n):
            col = []
            for j in range(mesh.n):
                cc = mesh.cell_center(i, j)
                tri = []
                for _ in (0, 1):
                    tri.append(
                        [
                            (int(m), np.asarray(a, float) + np.asarray(X, float) @ (cc - x0),
                             np.asarray(X, float))
                            for (m, a, X) in parts
                        ]
                    )
                col.append(tri)
            sheets.append(col)
        return cls(mesh, sheets, check=False)

    @classmethod
    def from_nodal_sheets(cls, mesh, nodal_list, check=True):
        """Build from per-sheet nodal values; each sheet is P1 on the triangles.

        nodal_list: list of (multiplicity, values) with values of shape
        (n+1, n+1, 2) indexed by node (i, j).
        """
        n = mesh.n
        h = mesh.h
        sheets = []
        for i in range(n):
            col = []
            for j in range(n):
                cc = mesh.cell_center(i, j)
                tris = []
                for t in (0, 1):
                    (o0, o1, o2) = TRI_NODES[t]
                    p0 = mesh.node(i + o0[0], j + o0[1])
                    entries = []
                    for mult, vals in nodal_list:
                        f0 = vals[i + o0[0], j + o0[1]]
                        f1 = vals[i + o1[0], j + o1[1]]
                        f2 = vals[i + o2[0], j + o2[1]]
                        E = np.array(
                            [
                                [(o1[0] - o0[0]) * h, (o2[0] - o0[0]) * h],
                                [(o1[1] - o0[1]) * h, (o2[1] - o0[1]) * h],
                            ]
                        )
                        F = np.stack([f1 - f0, f2 - f0], axis=1)
                        X = F @ np.linalg.inv(E)
                        a = f0 + X @ (cc - p0)
                        entries.append((int(mult), a, X))
                    tris.append(entries)
                col.append(tris)
            sheets.append(col)
        return cls(mesh, sheets, check=check)

    # -- evaluation ------------------------------------------------------------

    def _tri_of(self, x, i, j):
        rel = (np.asarray(x, float) - self.mesh.node(i, j)) / self.mesh.h
        return 0 if rel[1] <= rel[0] else 1

    def triangle_rows(self, i, j, t, x):
        cc = self.mesh.cell_center(i, j)
        rows = []
        for mult, a, X in self.sheets[i][j][t]:
            val = a + X @ (np.asarray(x, float) - cc)
            rows.extend([val] * mult)
        return rows

    def evaluate(self, x):
        i, j = self.mesh.locate(x)
        t = self._tri_of(x, i, j)
        return QPoint(np.array(self.triangle_rows(i, j, t, x)))

    def boundary_trace(self, x):
        """Q-point trace at a boundary point (uses the adjacent triangle)."""
        return self.evaluate(x)

    def is_zero_boundary(self, tol=EDGE_CONTINUITY_TOL):
        m = self.mesh
        zero = QPoint.full(np.zeros(2), self.q)
        for x in m.boundary_nodes():
            if g_metric(self.boundary_trace(x), zero) > tol:
                return False
        return True

    # -- invariants ------------------------------------------------------------

    def _edge_pairs(self):
        """Yield ((tri_a, tri_b), (xa, xb)) for every shared edge."""
        n = self.mesh.n
        for i in range(n):
            for j in range(n):
                # diagonal between the two triangles of the cell
                yield ((i, j, 0), (i, j, 1)), (self.mesh.node(i, j), self.mesh.node(i + 1, j + 1))
                if i + 1 < n:  # right edge of lower tri vs left edge of east cell's upper tri
                    yield ((i, j, 0), (i + 1, j, 1)), (
                        self.mesh.node(i + 1, j),
                        self.mesh.node(i + 1, j + 1),
                    )
                if j + 1 < n:  # top edge of upper tri vs bottom edge of north cell's lower tri
                    yield ((i, j, 1), (i, j + 1, 0)), (
                        self.mesh.node(i, j + 1),
                        self.mesh.node(i + 1, j + 1),
                    )

    def validate(self, tol=EDGE_CONTINUITY_TOL):
        bad = []
        for (ta, tb), (xa, xb) in self._edge_pairs():
            for s in (0.25, 0.5, 0.75):
                x = (1 - s) * xa + s * xb
                pa = QPoint(np.array(self.triangle_rows(*ta, x)))
                pb = QPoint(np.array(self.triangle_rows(*tb, x)))
                if g_metric(pa, pb) > tol:
                    bad.append((ta, tb))
                    break
        if bad:
            raise ValueError(f"Q-point traces disagree across {len(bad)} edges: {bad[:5]}")

    def merged_with(self, other):
        """Union of the sheet systems of two graphs on the same mesh."""
        if self.mesh != other.mesh:
            raise ValueError("graphs live on different meshes")
        sheets = []
        for i in range(self.mesh.n):
            col = []
            for j in range(self.mesh.n):
                col.append(
                    [
                        list(self.sheets[i][j][t]) + list(other.sheets[i][j][t])
                        for t in (0, 1)
                    ]
                )
            sheets.append(col)
        return FunctionalQGraph(self.mesh, sheets, check=False)

    # -- serialization ----------------------------------------------------------

    def to_json_obj(self):
        cells = []
        for i in range(self.mesh.n):
            for j in range(self.mesh.n):
                for t in (0, 1):
                    cells.append(
                        {
                            "cell": [i, j, t],
                            "sheets": [
                                {"mult": int(m), "a": a.tolist(), "X": X.tolist()}
                                for (m, a, X) in self.sheets[i][j][t]
                            ],
                        }
                    )
        return {
            "mesh": {"x0": list(self.mesh.x0), "r": self.mesh.r, "n": self.mesh.n},
            "cells": cells,
        }

    @classmethod
    def from_json_obj(cls, obj):
        m = obj["mesh"]
        mesh = Mesh(x0=tuple(m["x0"]), r=float(m["r"]), n=int(m["n"]))
        sheets = [[[None, None] for _ in range(mesh.n)] for _ in range(mesh.n)]
        for cell in obj["cells"]:
            i, j, t = cell["cell"]
            sheets[i][j][t] = [
                (int(s["mult"]), np.array(s["a"], float), np.array(s["X"], float))
                for s in cell["sheets"]
            ]
        return cls(mesh, sheets, check=False)


@dataclass
class PartitionMasses:
    """Masses of the horizontal / vertical / mixed parts of a current."""

    mH: float
    mV: float
    mM: float
    eps: float

    def total(self):
        return self.mH + self.mV + self.mM


class TriangulatedCurrent:
    """Oriented 2-simplices in R^4 with positive integer multiplicities."""

    def __init__(self, verts, mults, validate=True):
        self.verts = np.asarray(verts, dtype=float).reshape(-1, 3, 4)
        self.mults = np.asarray(mults, dtype=np.int64).reshape(-1)
        if self.verts.shape[0] != self.mults.shape[0]:
            raise ValueError("vertex and multiplicity counts differ")
        if validate:
            if np.any(self.mults < 1):
                raise ValueError("multiplicities must be positive integers")
            if np.any(self.areas() <= MIN_TRIANGLE_AREA):
                raise ValueError("degenerate triangle (area below 1e-14)")

    # -- per-triangle geometry ---------------------------------------------------

    def edge_vectors(self):
        return self.verts[:, 1] - self.verts[:, 0], self.verts[:, 2] - self.verts[:, 0]

    def tangent_wedges(self):
        u1, u2 = self.edge_vectors()
        out = np.empty((self.verts.shape[0], 6))
        for k, (i, j) in enumerate(exterior.BASIS_PAIRS):
            out[:, k] = u1[:, i] * u2[:, j] - u1[:, j] * u2[:, i]
        return out

    def areas(self):
        return 0.5 * np.linalg.norm(self.tangent_wedges(), axis=1)

    def unit_tangents(self):
        w = self.tangent_wedges()
        return w / np.linalg.norm(w, axis=1, keepdims=True)

    def mass(self):
        return float(np.sum(self.mults * self.areas()))

    @property
    def n_triangles(self):
        return self.verts.shape[0]

    # -- operations ---------------------------------------------------------------

    def concatenated(self, other):
        return TriangulatedCurrent(
            np.concatenate([self.verts, other.verts]),
            np.concatenate([self.mults, other.mults]),
            validate=False,
        )

    def restrict(self, mask):
        return TriangulatedCurrent(self.verts[mask], self.mults[mask], validate=False)

    def boundary(self):
        """Signed edge chain after cancellation: {(key_a, key_b): count}."""
        chain = {}
        scale = 10.0**VERTEX_KEY_DECIMALS

        def key(v):
            return tuple(int(round(c * scale)) for c in v)

        for tri, m in zip(self.verts, self.mults):
            ks = [key(tri[0]), key(tri[1]), key(tri[2])]
            for a in range(3):
                ka, kb = ks[a], ks[(a + 1) % 3]
                if ka <= kb:
                    chain[(ka, kb)] = chain.get((ka, kb), 0) + int(m)
                else:
                    chain[(kb, ka)] = chain.get((kb, ka), 0) - int(m)
        return {e: c for e, c in chain.items() if c != 0}

    def boundary_equals_loop(self, loop_points, multiplicity, height=(0.0, 0.0)):
        """Check the boundary chain equals `multiplicity` times the closed loop.

        loop_points: (N, 2) planar vertices in traversal order (closed
        implicitly); the loop is lifted to R^4 at the given height.
        """
        pts = np.asarray(loop_points, dtype=float)
        lift = np.concatenate(
            [pts, np.tile(np.asarray(height, float), (pts.shape[0], 1))], axis=1
        )
        expected = {}
        scale = 10.0**VERTEX_KEY_DECIMALS

        def key(v):
            return tuple(int(round(c * scale)) for c in v)

        n = pts.shape[0]
        for a in range(n):
            ka, kb = key(lift[a]), key(lift[(a + 1) % n])
            if ka <= kb:
                expected[(ka, kb)] = expected.get((ka, kb), 0) + int(multiplicity)
            else:
                expected[(kb, ka)] = expected.get((kb, ka), 0) - int(multiplicity)
        expected = {e: c for e, c in expected.items() if c != 0}
        return self.boundary() == expected

    def gaussian_image(self):
        return GrassmannMeasure(
            self.unit_tangents(), self.mults * self.areas(), validate=False
        )

    def classify_triangles(self, eps, strict=False):
        u1, u2 = self.edge_vectors()
        return exterior.classify_batch(u1, u2, eps, strict=strict)

    def partition(self, eps, strict=False):
        """Per-triangle horizontal/vertical/mixed split; masses and sub-currents."""
        if not (0.0 < eps < 1.0):
            raise ValueError("eps must be in (0, 1)")
        labels = self.classify_triangles(eps, strict=strict)
        w = self.mults * self.areas()
        parts = {}
        masses = {}
        for lab in (exterior.HORIZONTAL, exterior.VERTICAL, exterior.MIXED):
            mask = labels == lab
            masses[lab] = float(w[mask].sum())
            parts[lab] = self.restrict(mask)
        pm = PartitionMasses(
            mH=masses[exterior.HORIZONTAL],
            mV=masses[exterior.VERTICAL],
            mM=masses[exterior.MIXED],
            eps=eps,
        )
        return pm, parts

    def pushforward(self, L):
        L = np.asarray(L, dtype=float)
        if abs(np.linalg.det(L)) < 1e-300:
            raise ValueError("pushforward map is singular")
        return TriangulatedCurrent(
            np.einsum("ab,tvb->tva", L, self.verts), self.mults, validate=False
        )

    def projected_mass_h(self):
        """Mass of the h-plane pushforward, no cancellation (positive tangents)."""
        u1, u2 = self.edge_vectors()
        det = u1[:, 0] * u2[:, 1] - u1[:, 1] * u2[:, 0]
        return float(np.sum(self.mults * 0.5 * np.abs(det)))

    # -- slicing -------------------------------------------------------------------

    def slice_mass(self, p, rho):
        """Weighted length of the intersection with the sphere of radius rho at p.

        Per triangle the sphere meets the triangle plane in a circle (or not
        at all); the part of that circle inside the triangle is a union of
        arcs computed exactly from the critical angles at the edge lines.
        """
        if rho <= 0:
            raise ValueError("rho must be positive")
        p = np.asarray(p, dtype=float)
        total = 0.0
        for tri, m in zip(self.verts, self.mults):
            total += m * _triangle_sphere_arclength(tri, p, rho)
        return float(total)

    def mass_in_ball(self, p, rho, subdiv=16):
        """Quadrature estimate of the mass inside the closed ball B_rho(p).

        Midpoint rule on subdiv^2 congruent sub-triangles per triangle.
        """
        p = np.asarray(p, dtype=float)
        cents, frac = _subtriangle_centroids(subdiv)
        total = 0.0
        areas = self.areas()
        for tri, m, area in zip(self.verts, self.mults, areas):
            pts = (
                tri[0][None, :]
                + cents[:, 0:1] * (tri[1] - tri[0])[None, :]
                + cents[:, 1:2] * (tri[2] - tri[0])[None, :]
            )
            inside = np.sum((pts - p) ** 2, axis=1) <= rho * rho
            total += m * area * frac * np.count_nonzero(inside)
        return float(total)

    # -- serialization ----------------------------------------------------------------

    def to_json_obj(self):
        scale = 10.0**VERTEX_KEY_DECIMALS
        index = {}
        vertices = []
        triangles = []
        for tri, m in zip(self.verts, self.mults):
            ids = []
            for v in tri:
                k = tuple(int(round(c * scale)) for c in v)
                if k not in index:
                    index[k] = len(vertices)
                    vertices.append([float(c) for c in v])
                ids.append(index[k])
            triangles.append([ids[0], ids[1], ids[2], int(m)])
        return {"vertices": vertices, "triangles": triangles}

    @classmethod
    def from_json_obj(cls, obj):
        vertices = np.array(obj["vertices"], dtype=float)
        tris = obj["triangles"]
        verts = np.array([[vertices[a], vertices[b], vertices[c]] for (a, b, c, _m) in tris])
        mults = np.array([m for (_a, _b, _c, m) in tris], dtype=np.int64)
        return cls(verts, mults)

    def to_json(self):
        return json.dumps(self.to_json_obj(), sort_keys=True)


def _subtriangle_centroids(k):
    """Barycentric (alpha, beta) centroids of the k^2 standard sub-triangles."""
    cents = []
    for i in range(k):
        for j in range(k - i):
            cents.append(((i + 1.0 / 3.0) / k, (j + 1.0 / 3.0) / k))
            if i + j <= k - 2:
                cents.append(((i + 2.0 / 3.0) / k, (j + 2.0 / 3.0) / k))
    return np.array(cents), 1.0 / (k * k)


def _triangle_sphere_arclength(tri, p, rho):
    v0 = tri[0]
    u1 = tri[1] - v0
    u2 = tri[2] - v0
    e1 = u1 / np.linalg.norm(u1)
    w = u2 - (u2 @ e1) * e1
    e2 = w / np.linalg.norm(w)
    q = p - v0
    a, b = q @ e1, q @ e2
    d2 = q @ q - a * a - b * b
    rr2 = rho * rho - d2
    if rr2 <= 0.0:
        return 0.0
    rr = math.sqrt(rr2)
    # 2D picture in the triangle plane
    C = np.array([a, b])
    T = np.array([[0.0, 0.0], [np.linalg.norm(u1), 0.0], [u2 @ e1, u2 @ e2]])
    crit = []
    for s in range(3):
        A, B = T[s], T[(s + 1) % 3]
        d = B - A
        dd = d @ d
        f = A - C
        disc = (d @ f) ** 2 - dd * (f @ f - rr * rr)
        if disc <= 0.0 or dd == 0.0:
            continue
        root = math.sqrt(disc)
        for sgn in (-1.0, 1.0):
            t = (-(d @ f) + sgn * root) / dd
            pt = A + t * d - C
            crit.append(math.atan2(pt[1], pt[0]))
    if not crit:
        mid = C + np.array([rr, 0.0])
        return 2.0 * math.pi * rr if _point_in_tri(mid, T) else 0.0
    crit = sorted(th % (2.0 * math.pi) for th in crit)
    total = 0.0
    for k in range(len(crit)):
        th0 = crit[k]
        th1 = crit[(k + 1) % len(crit)] + (2.0 * math.pi if k + 1 == len(crit) else 0.0)
        span = th1 - th0
        if span <= 0.0:
            continue
        mid_th = th0 + 0.5 * span
        mid = C + rr * np.array([math.cos(mid_th), math.sin(mid_th)])
        if _point_in_tri(mid, T):
            total += span * rr
    return total


def _point_in_tri(pt, T, tol=1e-12):
    s0 = _cross2(T[1] - T[0], pt - T[0])
    s1 = _cross2(T[2] - T[1], pt - T[1])
    s2 = _cross2(T[0] - T[2], pt - T[2])
    return (s0 >= -tol) and (s1 >= -tol) and (s2 >= -tol)


def _cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def triangulate(g):
    """Integral current carried by the graph of a FunctionalQGraph.

    Each half-cell triangle contributes one oriented 2-simplex per sheet,
    with the sheet multiplicity; for affine sheets the triangle mass equals
    the area-formula value ||LambdaM(X)|| * base area exactly.
    """
    mesh = g.mesh
    verts = []
    mults = []
    for i in range(mesh.n):
        for j in range(mesh.n):
            cc = mesh.cell_center(i, j)
            for t in (0, 1):
                base = [mesh.node(i + o[0], j + o[1]) for o in TRI_NODES[t]]
                for mult, a, X in g.sheets[i][j][t]:
                    tri = np.array([np.concatenate([x, a + X @ (x - cc)]) for x in base])
                    verts.append(tri)
                    mults.append(mult)
    return TriangulatedCurrent(np.array(verts), np.array(mults))


def graph_boundary_is_q_square(g, tol_ignored=None):
    """Check the graph current boundary equals Q times the mesh boundary square."""
    T = triangulate(g)
    loop = np.array(g.mesh.boundary_nodes())
    return T.boundary_equals_loop(loop, g.q, height=(0.0, 0.0))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def affine_graph(mesh, parts):
    """Graph of sum_j q_j [a_j + X_j (x - x0)] over the mesh."""
    return FunctionalQGraph.affine(mesh, parts)


def random_lipschitz_graph(seed, lip, q, mesh, n_modes=3):
    """Reproducible random zero-boundary Q-graph with Lipschitz constant <= lip.

    Each sheet is a superposition of low-frequency product-sine modes
    (vanishing on the boundary) P1-interpolated on the mesh and rescaled so
    the largest per-triangle gradient norm stays below 0.9 * lip.
    """
    rng = np.random.default_rng(seed)
    n = mesh.n
    nodes = mesh.nodes_array()
    xi = (nodes[..., 0] - mesh.origin[0]) / mesh.r
    eta = (nodes[..., 1] - mesh.origin[1]) / mesh.r
    nodal = []
    for _ in range(q):
        vals = np.zeros((n + 1, n + 1, 2))
        for _m in range(n_modes):
            kx, ky = rng.integers(1, 4, size=2)
            coef = rng.normal(size=2)
            mode = np.sin(math.pi * kx * xi) * np.sin(math.pi * ky * eta)
            vals += mode[..., None] * coef[None, None, :]
        grad_bound = _max_nodal_gradient(vals, mesh.h)
        if grad_bound > 0:
            vals *= 0.9 * lip / max(grad_bound, 0.9 * lip)
        nodal.append((1, vals))
    return FunctionalQGraph.from_nodal_sheets(mesh, nodal, check=False)


def steep_plateau_graph(t_slope, q, mesh, plateau_frac=0.35, ramp_frac=0.2):
    """Zero-boundary graph with an interior plateau of gradient t * [[0,1],[1,0]].

    On the plateau the tangent plane is eps-vertical once
    t^2 >= 1 / ((1+eps)^2 - 1); the ramp ring contributes mixed and
    horizontal mass.  All Q sheets coincide.
    """
    nodes = mesh.nodes_array()
    c = np.array(mesh.x0, dtype=float)
    s_in = plateau_frac * mesh.r / 2.0
    s_out = s_in + ramp_frac * mesh.r
    dist = np.maximum(np.abs(nodes[..., 0] - c[0]), np.abs(nodes[..., 1] - c[1]))
    ramp = np.clip((s_out - dist) / (s_out - s_in), 0.0, 1.0)
    vals = (
        t_slope
        * ramp[..., None]
        * np.stack([nodes[..., 1] - c[1], nodes[..., 0] - c[0]], axis=-1)
    )
    return FunctionalQGraph.from_nodal_sheets(mesh, [(1, vals)] * q, check=False)


def _max_nodal_gradient(vals, h):
    gx = (vals[1:, :, :] - vals[:-1, :, :]) / h
    gy = (vals[:, 1:, :] - vals[:, :-1, :]) / h
    m = 0.0
    if gx.size:
        m = max(m, float(np.sqrt(np.sum(gx**2, axis=-1)).max()))
    if gy.size:
        m = max(m, float(np.sqrt(np.sum(gy**2, axis=-1)).max()))
    return m * math.sqrt(2.0)


def branched_graph(q, amplitude, cutoff, n_r=24, n_theta=32, p=None):
    """q-valued branched graph over the unit disk as a triangulated current.

    The map sends z to the q points amplitude * prof(|z|) * w^p over the
    roots w^q = z, with prof(r) = min(1 - r, cutoff); it vanishes on the
    boundary circle, so the boundary chain is q times the unit circle at
    height zero.  Triangulated in polar coordinates on the q-fold cover.
    """
    if p is None:
        p = q + 1
    if p < q:
        raise ValueError("exponent p must be >= q for a Lipschitz profile")
    m_phi = q * n_theta
    radii = np.linspace(0.0, 1.0, n_r + 1)

    def vertex(ir, k):
        r = radii[ir]
        phi = 2.0 * math.pi * q * (k % m_phi) / m_phi
        z = np.array([r * math.cos(phi), r * math.sin(phi)])
        prof = amplitude * min(1.0 - r, cutoff)
        rad = r ** (p / q) * prof
        ang = p * phi / q
        return np.array([z[0], z[1], rad * math.cos(ang), rad * math.sin(ang)])

    verts = []
    mults = []
    for ir in range(n_r):
        for k in range(m_phi):
            v00 = vertex(ir, k)
            v10 = vertex(ir + 1, k)
            v11 = vertex(ir + 1, k + 1)
            v01 = vertex(ir, k + 1)
            if ir == 0:
                verts.append([v00, v10, v11])  # fan triangle at the centre
                mults.append(1)
            else:
                verts.append([v00, v10, v11])
                verts.append([v00, v11, v01])
                mults.extend([1, 1])
    return TriangulatedCurrent(np.array(verts), np.array(mults))


def flat_disk_current(n_r=24, n_theta=64):
    """Unit flat disk at height zero (multiplicity one)."""
    return branched_graph(1, 0.0, 1.0, n_r=n_r, n_theta=n_theta, p=2)


def disk_boundary_loop(n_theta):
    """Vertices of the discretised unit circle matching branched_graph's seam."""
    ang = 2.0 * math.pi * np.arange(n_theta) / n_theta
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def polygon_disk_area(n_theta):
    """Area of the inscribed n_theta-gon: the base area of the disk currents."""
    return 0.5 * n_theta * math.sin(2.0 * math.pi / n_theta)


def ray_plateau_graph(X, q, mesh, plateau_frac=0.35, ramp_frac=0.2):
    """Zero-boundary graph whose plateau has the prescribed gradient X.

    With X one of the three lift matrices, the squeeze pushforward of the
    plateau triangles lands exactly on the corresponding special plane.
    """
    X = np.asarray(X, dtype=float)
    nodes = mesh.nodes_array()
    c = np.array(mesh.x0, dtype=float)
    s_in = plateau_frac * mesh.r / 2.0
    s_out = s_in + ramp_frac * mesh.r
    dist = np.maximum(np.abs(nodes[..., 0] - c[0]), np.abs(nodes[..., 1] - c[1]))
    ramp = np.clip((s_out - dist) / (s_out - s_in), 0.0, 1.0)
    rel = nodes - c[None, None, :]
    vals = ramp[..., None] * np.einsum("ab,ijb->ija", X, rel)
    return FunctionalQGraph.from_nodal_sheets(mesh, [(1, vals)] * q, check=False)


# ---------------------------------------------------------------------------
# chain inequality report
# ---------------------------------------------------------------------------


def chain_report(T, q, eps, domain_area=1.0, atom_tol=1e-8):
    """Flux-balance and mass inequalities for a zero-boundary graph current.

    The current is pushed forward by the squeeze diag(1, 1, eps, eps), whose
    action takes the three special v-planes onto the w-planes.  Exact-atom
    masses m_i collect triangles whose unit tangent coincides with the unit
    w_i (within atom_tol); the non-special mass is the complement.  The
    reported inequality uses the vertical class mass (an upper bound for the
    exact w3 atom mass, which is also reported) in the vertical term:

        (2||w1||/||w3||) m_V  - (m1 + m2)  + (4||w1||/eps^2) m_NS  >= 0

    together with  q * |D| <= total mass (projection without cancellation).
    """
    b = build(eps)
    R = np.diag([1.0, 1.0, eps, eps])
    G = T.pushforward(R)
    what = b.unit_planes_w()
    ut = G.unit_tangents()
    wts = G.mults * G.areas()
    atom_mass = []
    atom_mask = np.zeros(G.n_triangles, dtype=bool)
    for i in range(3):
        mask = np.linalg.norm(ut - what[i][None, :], axis=1) <= atom_tol
        atom_mass.append(float(wts[mask].sum()))
        atom_mask |= mask
    total = float(wts.sum())
    m_ns = float(wts[~atom_mask].sum())
    pm, _ = G.partition(eps)
    w1n = float(np.linalg.norm(b.w[0]))
    w3n = float(np.linalg.norm(b.w[2]))
    est0_class_vertical = (
        (2.0 * w1n / w3n) * pm.mV - (atom_mass[0] + atom_mass[1]) + (4.0 * w1n / eps**2) * m_ns
    )
    est0_exact = (
        (2.0 * w1n / w3n) * atom_mass[2]
        - (atom_mass[0] + atom_mass[1])
        + (4.0 * w1n / eps**2) * m_ns
    )
    return {
        "eps": eps,
        "q": q,
        "domain_area": domain_area,
        "total_mass_after_squeeze": total,
        "atom_masses": atom_mass,
        "non_special_mass": m_ns,
        "class_masses": {"H": pm.mH, "V": pm.mV, "M": pm.mM},
        "est0_value": est0_class_vertical,
        "est0_exact_atoms": est0_exact,
        "est1_slack": total - q * domain_area,
    }
