"""Triangulations, P1 assembly, interpolation and gradient recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from matplotlib.tri import Triangulation
from scipy.spatial import Delaunay

from .geometry import DomainSpec


@dataclass(frozen=True, eq=False)
class TriMesh:
    points: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    boundary: np.ndarray  # (N,) bool
    h: float
    shape: tuple[int, int] | None = None  # (nx, ny) for structured rectangle grids
    origin: tuple[float, float] = (0.0, 0.0)
    spacing: tuple[float, float] = (0.0, 0.0)

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    def areas(self) -> np.ndarray:
        p = self.points[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the three hat functions on each triangle, shape (T, 3, 2)."""
        p = self.points[self.triangles]
        a2 = 2 * self.areas()
        g = np.empty((len(self.triangles), 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (p[:, j, 1] - p[:, k, 1]) / a2
            g[:, i, 1] = (p[:, k, 0] - p[:, j, 0]) / a2
        return g

    def locate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Triangle index (-1 outside) and barycentric coordinates of points."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        if self.shape is not None:
            return self._locate_structured(x)
        finder = _finder(self)
        tri = finder(x[:, 0], x[:, 1])
        idx = np.where(tri >= 0, tri, 0)
        p = self.points[self.triangles[idx]]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = x - p[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        bary = np.stack([1 - l1 - l2, l1, l2], axis=1)
        return np.asarray(tri), bary

    def _locate_structured(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        nx, ny = self.shape
        hx, hy = self.spacing
        fx = (x[:, 0] - self.origin[0]) / hx
        fy = (x[:, 1] - self.origin[1]) / hy
        outside = (fx < -1e-9) | (fy < -1e-9) | (fx > nx + 1e-9) | (fy > ny + 1e-9)
        i = np.clip(np.floor(fx).astype(int), 0, nx - 1)
        j = np.clip(np.floor(fy).astype(int), 0, ny - 1)
        a, b = fx - i, fy - j
        lower = a >= b  # triangle (ll, lr, ur); else (ll, ur, ul)
        tri = 2 * (j * nx + i) + np.where(lower, 0, 1)
        bary = np.where(
            lower[:, None],
            np.stack([1 - a, a - b, b], axis=1),
            np.stack([1 - b, a, b - a], axis=1),
        )
        tri = np.where(outside, -1, tri)
        return tri, bary

    def interpolate(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Evaluate the P1 interpolant of nodal ``values`` (last axis may be vector-valued)."""
        x = np.asarray(x, dtype=float)
        tri, bary = self.locate(x)
        idx = self.triangles[np.where(tri >= 0, tri, 0)]
        v = values[idx]
        out = np.einsum("pk,pk...->p...", bary, v)
        out[tri < 0] = 0.0
        return out.reshape(x.shape[:-1] + values.shape[1:])


_FINDERS: dict[int, object] = {}


def _finder(mesh: TriMesh):
    f = _FINDERS.get(id(mesh))
    if f is None:
        tri = Triangulation(mesh.points[:, 0], mesh.points[:, 1], mesh.triangles)
        f = tri.get_trifinder()
        _FINDERS[id(mesh)] = f
    return f


def rectangle_mesh(width: float, height: float, h: float, origin=(0.0, 0.0)) -> TriMesh:
    nx = max(2, int(round(width / h)))
    ny = max(2, int(round(height / h)))
    xs = origin[0] + np.linspace(0, width, nx + 1)
    ys = origin[1] + np.linspace(0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    ll = (J * (nx + 1) + I).ravel()
    lr, ul = ll + 1, ll + nx + 1
    ur = ul + 1
    tris = np.empty((2 * nx * ny, 3), dtype=int)
    tris[0::2] = np.stack([ll, lr, ur], axis=1)
    tris[1::2] = np.stack([ll, ur, ul], axis=1)
    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    bnd = ((ii == 0) | (ii == nx) | (jj == 0) | (jj == ny)).ravel()
    return TriMesh(pts, tris, bnd, max(width / nx, height / ny), (nx, ny), tuple(origin), (width / nx, height / ny))


def disk_mesh(domain: DomainSpec, h: float) -> TriMesh:
    """Concentric-ring mesh of a (perturbed) disk.

    Ring ``k`` carries ``6k`` nodes; the rings are triangulated by Delaunay in
    the reference unit disk and then mapped radially onto the domain.
    """
    scale = domain.radius if domain.kind == "perturbed_disk" else 1.0
    nr = max(2, int(math.ceil(scale / h)))
    pts = [np.zeros((1, 2))]
    for k in range(1, nr + 1):
        th = 2 * np.pi * (np.arange(6 * k) + 0.5 * (k % 2)) / (6 * k)
        pts.append(np.stack([np.cos(th), np.sin(th)], axis=1) * (k / nr))
    ref = np.vstack(pts)
    tri = Delaunay(ref).simplices
    p = ref[tri]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    tri = tri[np.abs(area) > 1e-14]
    area = area[np.abs(area) > 1e-14]
    tri = np.where((area < 0)[:, None], tri[:, [0, 2, 1]], tri)
    rr = np.hypot(ref[:, 0], ref[:, 1])
    th = np.arctan2(ref[:, 1], ref[:, 0])
    rho, _, _ = domain._rho(th)
    mapped = np.stack([rr * rho * np.cos(th), rr * rho * np.sin(th)], axis=1)
    bnd = np.zeros(len(ref), dtype=bool)
    bnd[-6 * nr :] = True
    return TriMesh(mapped, tri, bnd, scale / nr)


def domain_mesh(domain: DomainSpec, h: float) -> TriMesh:
    if domain.kind == "rectangle":
        return rectangle_mesh(domain.width, domain.height, h)
    return disk_mesh(domain, h)


def assemble(mesh: TriMesh, potential=None) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Stiffness, consistent mass and potential matrices of P1 elements.

    The potential term uses the edge-midpoint rule on each triangle.
    """
    T = mesh.triangles
    area = mesh.areas()
    G = mesh.barycentric_gradients()
    Ke = area[:, None, None] * np.einsum("tik,tjk->tij", G, G)
    Me = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((np.broadcast_to(Me, Ke.shape).ravel(), (rows, cols)), shape=(n, n)).tocsr()
    if potential is None:
        return K, M, sp.csr_matrix((n, n))
    p = mesh.points[T]
    mids = 0.5 * np.stack([p[:, 0] + p[:, 1], p[:, 1] + p[:, 2], p[:, 2] + p[:, 0]], axis=1)
    w = potential(mids.reshape(-1, 2)).reshape(-1, 3)
    # hat-function values at the three edge midpoints
    phi = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    We = area[:, None, None] / 3.0 * np.einsum("tq,qi,qj->tij", w, phi, phi)
    W = sp.coo_matrix((We.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M, W


def recover_gradient(mesh: TriMesh, values: np.ndarray) -> np.ndarray:
    """Area-weighted vertex average of the per-triangle P1 gradients."""
    G = mesh.barycentric_gradients()
    area = mesh.areas()
    cell_grad = np.einsum("tik,ti->tk", G, values[mesh.triangles])
    out = np.zeros((mesh.n_nodes, 2))
    wsum = np.zeros(mesh.n_nodes)
    for i in range(3):
        np.add.at(out, mesh.triangles[:, i], cell_grad * area[:, None])
        np.add.at(wsum, mesh.triangles[:, i], area)
    return out / wsum[:, None]
