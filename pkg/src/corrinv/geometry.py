"""2D polygonal domains with a tagged boundary partition and structured meshes.

The domain boundary is split into three portions: the corroded part (gamma1,
inaccessible), the measurement part (gamma2) and the grounded part (gammaD).
Tags are carried on boundary edges and on sampled boundary curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "BoundaryTag",
    "DomainSpec",
    "Mesh",
    "BoundaryCurve",
    "GeometryError",
    "EmptyPortionError",
    "build_rectangle_mesh",
    "trace_sample",
    "inner_portion",
    "point_segment_distance",
    "quadrature_weights",
    "export_mesh_csv",
]


class GeometryError(ValueError):
    """Invalid geometric input (bad polygon, missing tag, degenerate mesh)."""


class EmptyPortionError(GeometryError):
    """An inner boundary portion came out empty for the requested margin."""


class BoundaryTag(Enum):
    GAMMA1 = "gamma1"
    GAMMA2 = "gamma2"
    GAMMAD = "gammaD"

    @classmethod
    def parse(cls, text: str) -> "BoundaryTag":
        key = text.strip().lower()
        for tag in cls:
            if tag.value.lower() == key:
                return tag
        raise GeometryError(f"unknown boundary tag {text!r}")


def _polygon_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    """Proper intersection test for open segments (shared endpoints ignored)."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Exact Euclidean distance from point p to segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    s = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    proj = a + s * ab
    return float(np.hypot(*(p - proj)))


def quadrature_weights(t: np.ndarray) -> np.ndarray:
    """Quadrature weights on a 1D grid: composite Simpson when the point
    count is odd and the grid is uniform, composite trapezoid otherwise."""
    t = np.asarray(t, dtype=float)
    n = t.size
    if n < 2:
        raise GeometryError("need at least two points for quadrature")
    dt = np.diff(t)
    uniform = np.allclose(dt, dt[0], rtol=1e-12, atol=1e-14)
    w = np.zeros(n)
    if uniform and n % 2 == 1 and n >= 3:
        h = dt[0]
        w[0] = w[-1] = h / 3.0
        w[1:-1:2] = 4.0 * h / 3.0
        w[2:-1:2] = 2.0 * h / 3.0
    else:
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
    return w


@dataclass(frozen=True)
class DomainSpec:
    """A simple, counterclockwise polygon with one boundary tag per side.

    Side i runs from vertex i to vertex i+1 (cyclically).  r0 and
    lipschitz_M describe the a priori boundary character and are carried
    for reporting; diameter_bound is checked at construction.
    """

    vertices: np.ndarray
    side_tags: tuple
    r0: float = 0.1
    lipschitz_M: float = 1.0
    diameter_bound: float = 10.0

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise GeometryError("vertices must be an (V, 2) array with V >= 3")
        object.__setattr__(self, "vertices", verts)
        tags = tuple(self.side_tags)
        if len(tags) != verts.shape[0]:
            raise GeometryError(
                f"need one tag per side: {verts.shape[0]} sides, {len(tags)} tags"
            )
        if not all(isinstance(t, BoundaryTag) for t in tags):
            raise GeometryError("side_tags must be BoundaryTag values")
        object.__setattr__(self, "side_tags", tags)
        if _polygon_area(verts) <= 0.0:
            raise GeometryError("polygon must be counterclockwise-oriented")
        nv = verts.shape[0]
        for i in range(nv):
            for j in range(i + 1, nv):
                if j == i or (j + 1) % nv == i or (i + 1) % nv == j:
                    continue
                if _segments_intersect(
                    verts[i], verts[(i + 1) % nv], verts[j], verts[(j + 1) % nv]
                ):
                    raise GeometryError(
                        f"polygon self-intersects (sides {i} and {j})"
                    )
        if BoundaryTag.GAMMAD not in tags:
            raise GeometryError("grounded portion gammaD must be nonempty")
        if self.diameter() > self.diameter_bound + 1e-12:
            raise GeometryError(
                f"polygon diameter {self.diameter():g} exceeds bound "
                f"{self.diameter_bound:g}"
            )

    def n_sides(self) -> int:
        return self.vertices.shape[0]

    def side(self, i: int) -> tuple:
        nv = self.n_sides()
        return self.vertices[i % nv], self.vertices[(i + 1) % nv]

    def side_length(self, i: int) -> float:
        a, b = self.side(i)
        return float(np.hypot(*(b - a)))

    def side_normal(self, i: int) -> np.ndarray:
        a, b = self.side(i)
        d = (b - a) / np.hypot(*(b - a))
        # outward normal of a ccw polygon
        return np.array([d[1], -d[0]])

    def sides_with_tag(self, tag: BoundaryTag) -> list:
        return [i for i, t in enumerate(self.side_tags) if t == tag]

    def tag_length(self, tag: BoundaryTag) -> float:
        return sum(self.side_length(i) for i in self.sides_with_tag(tag))

    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def complement_segments(self, tag: BoundaryTag) -> list:
        """Sides of the polygon not carrying the given tag, as (a, b) pairs."""
        return [self.side(i) for i, t in enumerate(self.side_tags) if t != tag]

    def contains(self, p) -> bool:
        """Point-in-polygon by winding of crossings (boundary counts as in)."""
        p = np.asarray(p, dtype=float)
        verts = self.vertices
        nv = verts.shape[0]
        inside = False
        for i in range(nv):
            a, b = verts[i], verts[(i + 1) % nv]
            if point_segment_distance(p, a, b) < 1e-14:
                return True
            if (a[1] > p[1]) != (b[1] > p[1]):
                xc = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
                if p[0] < xc:
                    inside = not inside
        return inside


@dataclass(frozen=True)
class BoundaryCurve:
    """Sampled boundary portion: arc-length parameters, points and outward
    unit normals.  complement keeps the polygon sides outside the tag so
    inner portions can be computed by exact point-to-segment distances."""

    tag: BoundaryTag
    t: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    complement: tuple = ()
    # exact polyline geometry per connected component: tuple of (t, points);
    # keeps interpolation from crossing the gap of a disconnected portion
    components: tuple = ()

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        pts = np.asarray(self.points, dtype=float)
        nrm = np.asarray(self.normals, dtype=float)
        if not (t.size == pts.shape[0] == nrm.shape[0]):
            raise GeometryError("curve arrays must have matching lengths")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise GeometryError("arc length must be strictly increasing")
        lens = np.hypot(nrm[:, 0], nrm[:, 1])
        if t.size and not np.allclose(lens, 1.0, atol=1e-10):
            raise GeometryError("normals must be unit vectors")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "normals", nrm)

    def __len__(self) -> int:
        return self.t.size

    def arc_length(self) -> float:
        return float(self.t[-1] - self.t[0])

    def point_at(self, s: float) -> np.ndarray:
        for ts, pts in self.components:
            if ts[0] - 1e-14 <= s <= ts[-1] + 1e-14:
                x = np.interp(s, ts, pts[:, 0])
                y = np.interp(s, ts, pts[:, 1])
                return np.array([x, y])
        x = np.interp(s, self.t, self.points[:, 0])
        y = np.interp(s, self.t, self.points[:, 1])
        return np.array([x, y])

    def normal_at(self, s: float) -> np.ndarray:
        idx = int(np.clip(np.searchsorted(self.t, s, side="right") - 1, 0, len(self) - 1))
        return self.normals[idx]

    def tangents(self) -> np.ndarray:
        """Unit tangents in the direction of increasing arc length
        (outward normal rotated by +90 degrees for a ccw traversal)."""
        n = self.normals
        return np.column_stack([-n[:, 1], n[:, 0]])


@dataclass(frozen=True)
class Mesh:
    """Conforming P1 triangulation of a polygonal domain.

    Boundary edges are stored in traversal order with their tag and the
    tag-local arc-length coordinates of both endpoints.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    edge_nodes: np.ndarray  # (B, 2) node indices, oriented along traversal
    edge_tags: tuple  # length B
    edge_t: np.ndarray  # (B, 2) tag-local arc length of endpoints
    edge_sides: np.ndarray  # (B,) polygon side index of each edge
    h: float
    domain: DomainSpec

    def boundary_edges_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        idx = [i for i, t in enumerate(self.edge_tags) if t == tag]
        return np.asarray(idx, dtype=int)

    def nodes_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        idx = self.boundary_edges_with_tag(tag)
        if idx.size == 0:
            return np.empty(0, dtype=int)
        return np.unique(self.edge_nodes[idx].ravel())

    def tag_polyline(self, tag: BoundaryTag):
        """Node chain(s) of a tagged portion, in traversal order.

        Returns (node_ids, t) where t is the tag-local arc length of each
        node.  Edges with the tag are assumed contiguous per side and are
        concatenated in polygon-side order.
        """
        idx = self.boundary_edges_with_tag(tag)
        if idx.size == 0:
            raise GeometryError(f"tag {tag.value} absent from mesh boundary")
        nodes = [self.edge_nodes[idx[0], 0]]
        ts = [self.edge_t[idx[0], 0]]
        for i in idx:
            nodes.append(self.edge_nodes[i, 1])
            ts.append(self.edge_t[i, 1])
        return np.asarray(nodes, dtype=int), np.asarray(ts, dtype=float)

    def validate(self) -> None:
        """Check the mesh invariants; raises GeometryError on violation."""
        tris = self.triangles
        p = self.nodes
        a = p[tris[:, 1]] - p[tris[:, 0]]
        b = p[tris[:, 2]] - p[tris[:, 0]]
        areas = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise GeometryError(f"triangle {bad} has nonpositive signed area")
        edge_count: dict = {}
        for tri in tris:
            for i in range(3):
                e = tuple(sorted((int(tri[i]), int(tri[(i + 1) % 3]))))
                edge_count[e] = edge_count.get(e, 0) + 1
        if any(c > 2 for c in edge_count.values()):
            raise GeometryError("mesh is not conforming: an edge has > 2 triangles")
        hull_edges = {e for e, c in edge_count.items() if c == 1}
        stored = {tuple(sorted(map(int, e))) for e in self.edge_nodes}
        if hull_edges != stored:
            raise GeometryError("boundary edges do not match the triangulation hull")
        total = sum(
            float(np.hypot(*(p[e[1]] - p[e[0]]))) for e in self.edge_nodes
        )
        perim = sum(self.domain.side_length(i) for i in range(self.domain.n_sides()))
        if abs(total - perim) > 1e-10 * max(1.0, perim):
            raise GeometryError("boundary edge union does not cover the polygon")


def build_rectangle_mesh(spec: DomainSpec, n: int) -> Mesh:
    """Structured triangulation of an axis-aligned rectangle.

    n is the number of subdivisions per unit length; each grid cell is split
    into two triangles along its up-right diagonal.
    """
    if n < 1:
        raise GeometryError("n must be >= 1")
    verts = spec.vertices
    if verts.shape[0] != 4:
        raise GeometryError("build_rectangle_mesh requires a 4-vertex polygon")
    xs, ys = sorted(set(np.round(verts[:, 0], 14))), sorted(set(np.round(verts[:, 1], 14)))
    if len(xs) != 2 or len(ys) != 2:
        raise GeometryError("polygon is not an axis-aligned rectangle")
    x0, x1 = xs
    y0, y1 = ys
    lx, ly = x1 - x0, y1 - y0
    nx = max(1, round(n * lx))
    ny = max(1, round(n * ly))
    gx = np.linspace(x0, x1, nx + 1)
    gy = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(gx, gy)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a = nid(i, j)
            b = nid(i + 1, j)
            c = nid(i + 1, j + 1)
            d = nid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    triangles = np.asarray(tris, dtype=int)
    h = float(np.hypot(lx / nx, ly / ny))

    # boundary edges in ccw traversal order per polygon side
    side_chains = {
        "bottom": [nid(i, 0) for i in range(nx + 1)],
        "right": [nid(nx, j) for j in range(ny + 1)],
        "top": [nid(i, ny) for i in range(nx, -1, -1)],
        "left": [nid(0, j) for j in range(ny, -1, -1)],
    }
    # map polygon sides (vertex i -> i+1) to the four rectangle sides
    corner_of = {}
    for name, chain in side_chains.items():
        corner_of[name] = (nodes[chain[0]], nodes[chain[-1]])
    side_names = []
    for i in range(4):
        a, b = spec.side(i)
        found = None
        for name, (ca, cb) in corner_of.items():
            if np.allclose(a, ca) and np.allclose(b, cb):
                found = name
                break
        if found is None:
            raise GeometryError(f"polygon side {i} does not match the rectangle")
        side_names.append(found)

    edge_nodes = []
    edge_tags = []
    edge_t = []
    edge_sides = []
    tag_running = {tag: 0.0 for tag in BoundaryTag}
    for i, name in enumerate(side_names):
        tag = spec.side_tags[i]
        chain = side_chains[name]
        s = tag_running[tag]
        for k in range(len(chain) - 1):
            a, b = chain[k], chain[k + 1]
            le = float(np.hypot(*(nodes[b] - nodes[a])))
            edge_nodes.append((a, b))
            edge_tags.append(tag)
            edge_t.append((s, s + le))
            edge_sides.append(i)
            s += le
        tag_running[tag] = s

    return Mesh(
        nodes=nodes,
        triangles=triangles,
        edge_nodes=np.asarray(edge_nodes, dtype=int),
        edge_tags=tuple(edge_tags),
        edge_t=np.asarray(edge_t, dtype=float),
        edge_sides=np.asarray(edge_sides, dtype=int),
        h=h,
        domain=spec,
    )


def trace_sample(mesh: Mesh, tag: BoundaryTag, m: int) -> BoundaryCurve:
    """m equispaced-in-arc-length samples along the tagged boundary portion.

    At a corner sample between two sides the normal of the following side is
    used.
    """
    if m < 2:
        raise GeometryError("need at least two samples")
    idx = mesh.boundary_edges_with_tag(tag)
    if idx.size == 0:
        raise GeometryError(f"tag {tag.value} absent from mesh boundary")
    edge_side = mesh.edge_sides[idx]
    edge_t = mesh.edge_t[idx]

    # connected polyline components (the tagged portion may be a disjoint
    # union of sides; never interpolate across a gap)
    comps = []
    for k, i in enumerate(idx):
        n0, n1 = mesh.edge_nodes[i]
        if k == 0 or n0 != comps[-1][0][-1]:
            comps.append(([int(n0)], [float(edge_t[k, 0])]))
        comps[-1][0].append(int(n1))
        comps[-1][1].append(float(edge_t[k, 1]))
    components = tuple(
        (np.asarray(ts, dtype=float), mesh.nodes[np.asarray(ns, dtype=int)])
        for ns, ts in comps
    )

    t_lo = components[0][0][0]
    t_hi = components[-1][0][-1]
    s = np.linspace(t_lo, t_hi, m)
    pts = np.empty((m, 2))
    normals = np.empty((m, 2))
    starts = edge_t[:, 0]
    for k, sk in enumerate(s):
        for ts, cpts in components:
            if ts[0] - 1e-14 <= sk <= ts[-1] + 1e-14:
                pts[k, 0] = np.interp(sk, ts, cpts[:, 0])
                pts[k, 1] = np.interp(sk, ts, cpts[:, 1])
                break
        else:
            raise GeometryError(f"sample parameter {sk:g} not on the portion")
        # a sample exactly at an edge start belongs to that (following) edge
        e = int(np.clip(np.searchsorted(starts, sk + 1e-14) - 1, 0, idx.size - 1))
        normals[k] = mesh.domain.side_normal(int(edge_side[e]))
    comp = tuple(
        (a.copy(), b.copy()) for a, b in mesh.domain.complement_segments(tag)
    )
    return BoundaryCurve(tag=tag, t=s, points=pts, normals=normals,
                         complement=comp, components=components)


def inner_portion(curve: BoundaryCurve, rho: float) -> BoundaryCurve:
    """Sub-curve of points at exact Euclidean distance > rho from the
    boundary complement of the curve's tag.

    Endpoints are located by bisection along the curve.  If several runs of
    samples qualify, the longest run is returned.
    """
    if rho < 0:
        raise GeometryError("rho must be nonnegative")
    if rho == 0.0:
        return curve
    if not curve.complement:
        raise GeometryError("curve carries no complement geometry")
    if rho >= 0.5 * curve.arc_length():
        raise EmptyPortionError(
            f"rho={rho:g} is not below half the arc length {curve.arc_length():g}"
        )

    segs = [(np.asarray(a, float), np.asarray(b, float)) for a, b in curve.complement]

    def dist(s: float) -> float:
        p = curve.point_at(s)
        return min(point_segment_distance(p, a, b) for a, b in segs)

    d = np.array([dist(s) for s in curve.t])
    mask = d > rho
    if not np.any(mask):
        raise EmptyPortionError(f"no boundary points at distance > {rho:g}")

    # longest contiguous run of qualifying samples
    runs = []
    start = None
    for i, ok in enumerate(mask):
        if ok and start is None:
            start = i
        if not ok and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(mask) - 1))
    i0, i1 = max(runs, key=lambda r: curve.t[r[1]] - curve.t[r[0]])

    def bisect(s_out: float, s_in: float) -> float:
        for _ in range(80):
            sm = 0.5 * (s_out + s_in)
            if dist(sm) > rho:
                s_in = sm
            else:
                s_out = sm
        return s_in

    t_lo = curve.t[i0]
    if i0 > 0:
        t_lo = bisect(curve.t[i0 - 1], curve.t[i0])
    t_hi = curve.t[i1]
    if i1 < len(curve) - 1:
        t_hi = bisect(curve.t[i1 + 1], curve.t[i1])

    ts = [t_lo] + [float(s) for s in curve.t[i0:i1 + 1] if t_lo < s < t_hi] + [t_hi]
    ts = np.asarray(ts)
    pts = np.array([curve.point_at(s) for s in ts])
    nrm = np.array([curve.normal_at(s) for s in ts])
    return BoundaryCurve(tag=curve.tag, t=ts, points=pts, normals=nrm,
                         complement=curve.complement,
                         components=curve.components)


def export_mesh_csv(mesh: Mesh, out_dir) -> None:
    """Write nodes.csv, tris.csv and bedges.csv into out_dir."""
    from pathlib import Path

    from corrinv.csvio import write_csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(
        out / "nodes.csv",
        ["id", "x", "y"],
        [(i, p[0], p[1]) for i, p in enumerate(mesh.nodes)],
    )
    write_csv(
        out / "tris.csv",
        ["id", "n0", "n1", "n2"],
        [(i, *map(int, t)) for i, t in enumerate(mesh.triangles)],
    )
    write_csv(
        out / "bedges.csv",
        ["id", "n0", "n1", "tag", "t0", "t1"],
        [
            (i, int(e[0]), int(e[1]), mesh.edge_tags[i].value, tt[0], tt[1])
            for i, (e, tt) in enumerate(zip(mesh.edge_nodes, mesh.edge_t))
        ],
    )
