"""Star-shaped planar domains and conforming triangular meshes.

Domains are described by a polar boundary radius rho(theta) about the
origin (disk, ellipse, or truncated Fourier perturbation of the disk).
Meshes combine a hexagonal interior lattice with boundary sampling at
arc-length spacing <= h; an optional geometrically graded patch of
"spider web" rings resolves a peak region down to scales far below h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import MeshFailure, NotStarShaped

_DENSE_N = 4096


def _golden_min(f, a: float, b: float, tol: float = 1e-8) -> float:
    """Golden-section argmin of a unimodal scalar function on [a, b]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


class Domain:
    """Smooth bounded domain, strictly star-shaped about the origin.

    Parameters
    ----------
    kind : "disk" | "ellipse" | "fourier"
    radius : disk radius (kind="disk")
    a, b : ellipse semi-axes (kind="ellipse")
    cos_coeffs, sin_coeffs : lists (a_1, a_2, ...), (b_1, b_2, ...) of the
        boundary radius rho(theta) = 1 + sum a_k cos(k theta) + b_k sin(k theta)
        (kind="fourier")
    """

    def __init__(self, kind: str, radius: float = 1.0, a: float = 1.0,
                 b: float = 1.0, cos_coeffs=(), sin_coeffs=()):
        if kind not in ("disk", "ellipse", "fourier"):
            raise ValueError(f"unknown domain kind {kind!r}")
        self.kind = kind
        self.radius = float(radius)
        self.a = float(a)
        self.b = float(b)
        self.cos_coeffs = np.asarray(cos_coeffs, dtype=float)
        self.sin_coeffs = np.asarray(sin_coeffs, dtype=float)
        if kind == "disk" and self.radius <= 0:
            raise ValueError("disk radius must be positive")
        if kind == "ellipse" and (self.a <= 0 or self.b <= 0):
            raise ValueError("ellipse semi-axes must be positive")

        theta = np.linspace(0.0, 2.0 * np.pi, _DENSE_N, endpoint=False)
        rho = self.rho(theta)
        if np.any(rho <= 0.0):
            raise NotStarShaped("boundary radius is not positive everywhere")
        self._margin = self._compute_margin()
        if self._margin <= 0.0:
            raise NotStarShaped(
                f"star-shape margin {self._margin} is not positive")

    # ---- boundary curve -------------------------------------------------

    def rho(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "disk":
            return np.full_like(theta, self.radius)
        if self.kind == "ellipse":
            return (self.a * self.b) / np.sqrt(
                (self.b * np.cos(theta)) ** 2 + (self.a * np.sin(theta)) ** 2)
        out = np.ones_like(theta)
        for k, ak in enumerate(self.cos_coeffs, start=1):
            out += ak * np.cos(k * theta)
        for k, bk in enumerate(self.sin_coeffs, start=1):
            out += bk * np.sin(k * theta)
        return out

    def drho(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.kind == "disk":
            return np.zeros_like(theta)
        if self.kind == "ellipse":
            c, s = np.cos(theta), np.sin(theta)
            q = (self.b * c) ** 2 + (self.a * s) ** 2
            dq = 2.0 * c * s * (self.a**2 - self.b**2)
            return -0.5 * self.a * self.b * dq * q ** (-1.5)
        out = np.zeros_like(theta)
        for k, ak in enumerate(self.cos_coeffs, start=1):
            out -= ak * k * np.sin(k * theta)
        for k, bk in enumerate(self.sin_coeffs, start=1):
            out += bk * k * np.cos(k * theta)
        return out

    def boundary_point(self, theta):
        """Point (rho cos, rho sin) on the analytic boundary."""
        theta = np.asarray(theta, dtype=float)
        r = self.rho(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def outward_normal(self, theta):
        """Unit outward normal at boundary_point(theta)."""
        theta = np.asarray(theta, dtype=float)
        r, dr = self.rho(theta), self.drho(theta)
        c, s = np.cos(theta), np.sin(theta)
        tx = dr * c - r * s
        ty = dr * s + r * c
        # rotate the tangent by -90 degrees: outward for CCW parametrization
        nx, ny = ty, -tx
        norm = np.hypot(nx, ny)
        return np.stack([nx / norm, ny / norm], axis=-1)

    def _support(self, theta):
        """(x, nu) at angle theta: rho^2 / sqrt(rho^2 + rho'^2)."""
        r, dr = self.rho(theta), self.drho(theta)
        return r * r / np.sqrt(r * r + dr * dr)

    def _compute_margin(self) -> float:
        theta = np.linspace(0.0, 2.0 * np.pi, _DENSE_N, endpoint=False)
        vals = self._support(theta)
        k = int(np.argmin(vals))
        dt = 2.0 * np.pi / _DENSE_N
        t_star = _golden_min(lambda t: float(self._support(t)),
                             theta[k] - dt, theta[k] + dt)
        return float(min(vals.min(), self._support(t_star)))

    def star_shape_margin(self) -> float:
        """min over the boundary of (x, nu); positive by construction."""
        return self._margin

    def contains(self, pts, shrink: float = 0.0):
        """Vectorized interior test: |x| < rho(atan2) - shrink."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        return np.hypot(pts[:, 0], pts[:, 1]) < self.rho(theta) - shrink

    def distance_to_boundary(self, x) -> float:
        """Distance from an interior point to the analytic boundary."""
        x = np.asarray(x, dtype=float)
        theta = np.linspace(0.0, 2.0 * np.pi, _DENSE_N, endpoint=False)
        bp = self.boundary_point(theta)
        d2 = np.sum((bp - x) ** 2, axis=1)
        k = int(np.argmin(d2))
        dt = 2.0 * np.pi / _DENSE_N

        def dist(t):
            p = self.boundary_point(t)
            return float(np.hypot(p[0] - x[0], p[1] - x[1]))

        t_star = _golden_min(dist, theta[k] - dt, theta[k] + dt)
        return min(float(np.sqrt(d2[k])), dist(t_star))

    def area(self) -> float:
        """Enclosed area, 1/2 int rho^2 dtheta by dense trapezoid rule."""
        theta = np.linspace(0.0, 2.0 * np.pi, 8 * _DENSE_N, endpoint=False)
        r = self.rho(theta)
        return float(0.5 * np.mean(r * r) * 2.0 * np.pi)

    def boundary_length(self) -> float:
        theta = np.linspace(0.0, 2.0 * np.pi, 8 * _DENSE_N, endpoint=False)
        r, dr = self.rho(theta), self.drho(theta)
        return float(np.mean(np.sqrt(r * r + dr * dr)) * 2.0 * np.pi)


@dataclass(frozen=True)
class RefineSpec:
    """Graded refinement patch around a point.

    Rings of nodes are placed at geometrically increasing radii from
    ``inner_h`` out to the patch radius, so peak regions far below the
    global target size h become resolvable.  inner_h = h/2 reproduces a
    plain one-level refinement disk.
    """

    center: tuple[float, float]
    inner_h: float
    ratio: float = 1.35
    points_per_ring: int = 16


@dataclass(frozen=True)
class Mesh:
    """Conforming P1 triangulation of a Domain."""

    nodes: np.ndarray            # (N, 2)
    triangles: np.ndarray        # (T, 3), CCW
    boundary_mask: np.ndarray    # (N,) bool
    boundary_edges: np.ndarray   # (E, 2) node indices
    edge_normals: np.ndarray     # (E, 2) unit outward normals
    edge_triangles: np.ndarray   # (E,) adjacent triangle index
    h: float
    _tree: cKDTree = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                      - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))

    def area(self) -> float:
        return float(np.sum(self.signed_areas()))

    def min_angle(self) -> float:
        """Smallest triangle angle in degrees."""
        p = self.nodes[self.triangles]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.sum(a * b, axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))

    def edge_lengths(self) -> np.ndarray:
        e = self.nodes[self.boundary_edges]
        return np.hypot(e[:, 1, 0] - e[:, 0, 0], e[:, 1, 1] - e[:, 0, 1])

    def edge_midpoints(self) -> np.ndarray:
        e = self.nodes[self.boundary_edges]
        return 0.5 * (e[:, 0] + e[:, 1])

    def node_tree(self) -> cKDTree:
        tree = object.__getattribute__(self, "_tree")
        if tree is None:
            tree = cKDTree(self.nodes)
            object.__setattr__(self, "_tree", tree)
        return tree

    def export_text(self) -> str:
        """Plain-text export: header, node lines, triangle lines."""
        lines = [f"nodes {self.n_nodes} triangles {len(self.triangles)}"]
        for (x, y), bf in zip(self.nodes, self.boundary_mask):
            lines.append(f"{float(x)!r} {float(y)!r} {int(bf)}")
        for i, j, k in self.triangles:
            lines.append(f"{i} {j} {k}")
        return "\n".join(lines) + "\n"


def _boundary_samples(domain: Domain, h: float) -> np.ndarray:
    """Angles of boundary nodes at (approximately) equal arc length <= h."""
    n_dense = max(_DENSE_N, int(64 * domain.boundary_length() / h))
    theta = np.linspace(0.0, 2.0 * np.pi, n_dense + 1)
    r, dr = domain.rho(theta), domain.drho(theta)
    speed = np.sqrt(r * r + dr * dr)
    s = np.concatenate(([0.0], np.cumsum(
        0.5 * (speed[1:] + speed[:-1]) * np.diff(theta))))
    total = s[-1]
    n_b = int(np.ceil(total / (0.95 * h)))
    targets = np.linspace(0.0, total, n_b, endpoint=False)
    return np.interp(targets, s, theta)


def _hex_lattice(domain: Domain, h: float) -> np.ndarray:
    rmax = float(np.max(domain.rho(
        np.linspace(0, 2 * np.pi, _DENSE_N, endpoint=False))))
    dy = h * np.sqrt(3.0) / 2.0
    ys = np.arange(-rmax, rmax + dy, dy)
    pts = []
    for j, y in enumerate(ys):
        off = 0.0 if j % 2 == 0 else h / 2.0
        xs = np.arange(-rmax - h, rmax + h, h) + off
        pts.append(np.stack([xs, np.full_like(xs, y)], axis=1))
    return np.concatenate(pts, axis=0)


def _patch_points_and_triangles(spec: RefineSpec, outer_radius: float):
    """Spider-web patch: center node, geometric rings, strip triangles."""
    c = np.asarray(spec.center, dtype=float)
    n = spec.points_per_ring
    n_rings = max(2, int(np.ceil(
        np.log(outer_radius / spec.inner_h) / np.log(spec.ratio))) + 1)
    radii = spec.inner_h * (outer_radius / spec.inner_h) ** (
        np.arange(n_rings) / (n_rings - 1.0))
    pts = [c[None, :]]
    for k, r in enumerate(radii):
        phi = 2.0 * np.pi * (np.arange(n) + 0.5 * (k % 2)) / n
        pts.append(c + r * np.stack([np.cos(phi), np.sin(phi)], axis=1))
    pts = np.concatenate(pts, axis=0)

    tris = []
    # center fan
    for i in range(n):
        tris.append((0, 1 + i, 1 + (i + 1) % n))
    # annulus strips between ring k (offset by k%2 half steps) and ring k+1
    for k in range(n_rings - 1):
        base_in = 1 + k * n
        base_out = 1 + (k + 1) * n
        for i in range(n):
            j = (i + 1) % n
            if k % 2 == 0:
                # outer ring shifted +1/2 step relative to inner
                tris.append((base_in + i, base_out + i, base_in + j))
                tris.append((base_in + j, base_out + i, base_out + j))
            else:
                tris.append((base_in + i, base_out + j, base_in + j))
                tris.append((base_in + i, base_out + i, base_out + j))
    return pts, np.asarray(tris, dtype=np.int64), radii[-1]


def _orient_ccw(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p = nodes[tris]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = area2 < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _edge_structure(nodes, tris, boundary_mask):
    """Boundary edges, their outward normals and adjacent triangles.

    Raises MeshFailure if any interior edge is not shared by exactly two
    triangles (non-conforming triangulation).
    """
    edges = {}
    for t_idx, (i, j, k) in enumerate(tris):
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            edges.setdefault(key, []).append(t_idx)
    b_edges, normals, adj = [], [], []
    for (a, b), owners in edges.items():
        if len(owners) == 1:
            if not (boundary_mask[a] and boundary_mask[b]):
                raise MeshFailure(
                    "dangling interior edge: non-conforming triangulation")
            t = owners[0]
            i, j, k = tris[t]
            other = ({i, j, k} - {a, b}).pop()
            e = nodes[b] - nodes[a]
            n_vec = np.array([e[1], -e[0]])
            if np.dot(n_vec, nodes[other] - nodes[a]) > 0:
                n_vec = -n_vec
            normals.append(n_vec / np.hypot(*n_vec))
            b_edges.append((a, b))
            adj.append(t)
        elif len(owners) != 2:
            raise MeshFailure(
                f"edge shared by {len(owners)} triangles")
    return (np.asarray(b_edges, dtype=np.int64),
            np.asarray(normals, dtype=float),
            np.asarray(adj, dtype=np.int64))


def generate_mesh(domain: Domain, h: float,
                  refine: RefineSpec | None = None,
                  smoothing_iters: int = 8,
                  max_attempts: int = 4) -> Mesh:
    """Conforming triangulation with target edge length h.

    Boundary nodes sit exactly on the analytic curve at arc-length spacing
    <= h.  Interior nodes come from a hexagonal lattice (smoothed), with
    an optional graded spider-web patch replacing the lattice near a peak.
    """
    rho_min = float(np.min(domain.rho(
        np.linspace(0, 2 * np.pi, _DENSE_N, endpoint=False))))
    if not 0.0 < h < 0.5 * rho_min:
        raise ValueError(
            f"h must lie in (0, {0.5 * rho_min}) for this domain")

    theta_b = _boundary_samples(domain, h)
    bpts = domain.boundary_point(theta_b)

    patch_pts = patch_tris = None
    patch_radius = 0.0
    if refine is not None:
        outer = max(2.56 * h, 1e-12)
        if refine.inner_h >= outer / refine.ratio:
            refine = RefineSpec(refine.center, outer / refine.ratio**2,
                                refine.ratio, refine.points_per_ring)
        patch_pts, patch_tris, patch_radius = _patch_points_and_triangles(
            refine, outer)
        c = np.asarray(refine.center, dtype=float)
        clearance = domain.distance_to_boundary(c)
        if clearance <= patch_radius + h:
            raise MeshFailure("refinement patch does not fit in the domain")

    rng = np.random.default_rng(20240811)
    for attempt in range(max_attempts):
        lattice = _hex_lattice(domain, h)
        if attempt > 0:
            lattice = lattice + rng.uniform(-0.1 * h, 0.1 * h, lattice.shape)
        btree = cKDTree(bpts)
        d_b, _ = btree.query(lattice)
        keep = domain.contains(lattice) & (d_b >= 0.7 * h)
        if refine is not None:
            c = np.asarray(refine.center, dtype=float)
            d_c = np.hypot(lattice[:, 0] - c[0], lattice[:, 1] - c[1])
            keep &= d_c >= patch_radius + 0.7 * h
        interior = lattice[keep]

        try:
            mesh = _build(domain, h, bpts, interior,
                          patch_pts, patch_tris, patch_radius,
                          refine, smoothing_iters)
        except MeshFailure:
            continue
        if mesh.min_angle() >= 20.0 and np.all(
                mesh.signed_areas() > 0.0):
            return mesh
    raise MeshFailure(
        f"quality targets unreachable after {max_attempts} attempts")


def _build(domain, h, bpts, interior, patch_pts, patch_tris, patch_radius,
           refine, smoothing_iters):
    n_patch = 0 if patch_pts is None else len(patch_pts)
    n_b = len(bpts)
    # node order: patch, boundary, hex interior
    if patch_pts is not None:
        nodes = np.concatenate([patch_pts, bpts, interior], axis=0)
    else:
        nodes = np.concatenate([bpts, interior], axis=0)

    n_ring = 0 if refine is None else refine.points_per_ring
    outer_ring_idx = np.arange(n_patch - n_ring, n_patch)

    def outer_point_set():
        """Points seen by the unstructured (Delaunay) region."""
        idx = np.concatenate([outer_ring_idx,
                              np.arange(n_patch, len(nodes))])
        return idx

    idx_outer = outer_point_set()
    hex_start = n_patch + n_b   # first smoothable node

    for it in range(smoothing_iters + 1):
        tri = Delaunay(nodes[idx_outer])
        simplices = idx_outer[tri.simplices]
        # filter triangles outside the domain or inside the patch hole
        centroids = nodes[simplices].mean(axis=1)
        keep = domain.contains(centroids)
        if refine is not None:
            c = np.asarray(refine.center, dtype=float)
            d_c = np.hypot(centroids[:, 0] - c[0], centroids[:, 1] - c[1])
            ring_inradius = patch_radius * np.cos(np.pi / n_ring)
            keep &= d_c > ring_inradius
        simplices = simplices[keep]
        if it == smoothing_iters:
            break
        # Laplacian smoothing of hex nodes toward neighbor averages
        nbr_sum = np.zeros_like(nodes)
        nbr_cnt = np.zeros(len(nodes))
        for a, b in ((0, 1), (1, 2), (2, 0)):
            np.add.at(nbr_sum, simplices[:, a], nodes[simplices[:, b]])
            np.add.at(nbr_cnt, simplices[:, a], 1.0)
            np.add.at(nbr_sum, simplices[:, b], nodes[simplices[:, a]])
            np.add.at(nbr_cnt, simplices[:, b], 1.0)
        movable = np.zeros(len(nodes), dtype=bool)
        movable[hex_start:] = nbr_cnt[hex_start:] > 0
        target = nbr_sum[movable] / nbr_cnt[movable, None]
        new_pos = nodes[movable] + 0.7 * (target - nodes[movable])
        ok = domain.contains(new_pos, shrink=0.25 * h)
        upd = nodes[movable]
        upd[ok] = new_pos[ok]
        nodes[movable] = upd

    if patch_tris is not None:
        tris = np.concatenate([patch_tris, simplices], axis=0)
    else:
        tris = simplices
    tris = _orient_ccw(nodes, tris)

    # drop degenerate slivers (relative area test) before conformity check
    p = nodes[tris]
    areas = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                   - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    lmax2 = np.max(np.sum(
        (p[:, [1, 2, 0]] - p) ** 2, axis=2), axis=1)
    tris = tris[areas > 1e-10 * lmax2]

    boundary_mask = np.zeros(len(nodes), dtype=bool)
    boundary_mask[n_patch:n_patch + n_b] = True

    b_edges, normals, adj = _edge_structure(nodes, tris, boundary_mask)
    used = np.zeros(len(nodes), dtype=bool)
    used[tris.ravel()] = True
    if not used.all():
        # re-index to drop unused nodes (culled by sliver removal)
        remap = -np.ones(len(nodes), dtype=np.int64)
        remap[used] = np.arange(used.sum())
        nodes = nodes[used]
        boundary_mask = boundary_mask[used]
        tris = remap[tris]
        b_edges = remap[b_edges]

    return Mesh(nodes=nodes, triangles=tris, boundary_mask=boundary_mask,
                boundary_edges=b_edges, edge_normals=normals,
                edge_triangles=adj, h=h)
