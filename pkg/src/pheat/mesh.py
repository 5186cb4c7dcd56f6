"""Conforming triangulations of the study domains with uniform red refinement.

Meshes are immutable after construction.  Refinement returns a new mesh that
keeps a reference to its parent together with the parent-triangle -> children
map, so point location can descend the hierarchy and coarse functions can be
evaluated exactly on descendant meshes.

The slit domain (-1,1)^2 \\ (-1,0]x{0} is represented by duplicating every
vertex that lies on the open cut.  Triangles above and below the cut then
share no degrees of freedom across it, which is exactly the conformity the
continuous problem requires; both copies carry the Dirichlet tag.
"""

from dataclasses import dataclass, field

import numpy as np

DOMAINS = ("unit_square", "centered_square", "shifted_square", "slit")

DIRICHLET = "dirichlet"

_EPS_ON_CUT = 1e-12


class PointOutsideDomain(Exception):
    """Raised when locate_point finds no containing triangle."""


@dataclass(frozen=True)
class MeshQuality:
    """Shape diagnostics of a triangulation.

    gamma is max_T h_T / rho_T where h_T is the triangle diameter (longest
    edge) and rho_T = 2 r_T the inscribed-circle diameter, r_T = 2 area / perimeter.
    """

    h_max: float
    h_min: float
    gamma: float
    quasi_uniformity_ratio: float


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of a polygonal (possibly slit) domain.

    Attributes
    ----------
    domain : str
        One of DOMAINS.
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, positively oriented
    boundary_edges : (nb, 2) int array
        Vertex index pairs lying on the boundary (slit cut edges included,
        once per side).
    boundary_tags : tuple of str, one tag per boundary edge
    level : int, refinement depth
    parent : Mesh or None
    child_map : (nt_parent, 4) int array or None
        For each parent triangle the indices of its four children in this
        mesh (three corner children then the center child).
    """

    domain: str
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: tuple = ()
    level: int = 0
    parent: "Mesh | None" = None
    child_map: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=np.int64))
        object.__setattr__(self, "boundary_edges", np.asarray(self.boundary_edges, dtype=np.int64))
        if not self.boundary_tags:
            object.__setattr__(self, "boundary_tags",
                               tuple(DIRICHLET for _ in range(len(self.boundary_edges))))

    # ------------------------------------------------------------------
    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def triangle_coords(self, indices=None):
        """Vertex coordinates per triangle, shape (nt, 3, 2)."""
        tris = self.triangles if indices is None else self.triangles[indices]
        return self.vertices[tris]

    def signed_areas(self):
        xy = self.triangle_coords()
        d1 = xy[:, 1] - xy[:, 0]
        d2 = xy[:, 2] - xy[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def parent_of(self):
        """Index of the parent triangle for each triangle (requires parent)."""
        if self.parent is None:
            raise ValueError("root mesh has no parent")
        return np.repeat(np.arange(self.parent.num_triangles), 4)

    def ancestor_triangles(self, ancestor):
        """Map each triangle to its containing triangle of `ancestor`.

        `ancestor` must lie on this mesh's parent chain (or be this mesh).
        """
        chain = [self]
        m = self
        while m is not ancestor:
            if m.parent is None:
                raise ValueError("mesh does not descend from the given ancestor")
            m = m.parent
            chain.append(m)
        idx = np.arange(self.num_triangles)
        for m in chain[:-1]:
            idx = m.parent_of()[idx]
        return idx

    def edge_use_counts(self):
        """Dict mapping each undirected edge to the number of adjacent triangles."""
        counts = {}
        t = self.triangles
        for a, b in ((0, 1), (1, 2), (2, 0)):
            for i, j in zip(t[:, a], t[:, b]):
                key = (min(i, j), max(i, j))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_conforming(self):
        """Every edge belongs to two triangles or is a listed boundary edge."""
        counts = self.edge_use_counts()
        boundary = {(min(i, j), max(i, j)) for i, j in self.boundary_edges}
        for key, c in counts.items():
            if c == 2 and key not in boundary:
                continue
            if c == 1 and key in boundary:
                continue
            return False
        return boundary <= set(counts)

    # ------------------------------------------------------------------
    def dump(self, fh):
        """Plain-text dump: header, one vertex per line, one triangle per line."""
        fh.write(f"vertices {self.num_vertices} triangles {self.num_triangles}\n")
        for x, y in self.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in self.triangles:
            fh.write(f"{i} {j} {k}\n")


# ----------------------------------------------------------------------
# coarse templates
# ----------------------------------------------------------------------

def _oriented(vertices, triangles):
    """Flip triangles with negative signed area."""
    tris = np.array(triangles, dtype=np.int64)
    verts = np.asarray(vertices, dtype=float)
    xy = verts[tris]
    d1 = xy[:, 1] - xy[:, 0]
    d2 = xy[:, 2] - xy[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tris[area2 < 0] = tris[area2 < 0][:, [0, 2, 1]]
    return verts, tris


def _quadrant_split(corners, origin_index):
    """Split a square into two triangles by the diagonal through `origin_index`."""
    o = origin_index
    a, b, c, d = corners[o], corners[(o + 1) % 4], corners[(o + 2) % 4], corners[(o + 3) % 4]
    return [(a, b, c), (a, c, d)]


def make_initial_mesh(domain):
    """Fixed, documented coarse template for each supported domain.

    unit_square     : (0,1)^2, two triangles split by the (0,0)-(1,1) diagonal.
    centered_square : (-1,1)^2, four axis-aligned unit squares, each split by
                      its diagonal through the origin (8 triangles); the origin
                      is a mesh vertex.
    shifted_square  : (1,3)x(-1,1), same 8-triangle pattern around (2,0).
    slit            : centered_square template with the vertices on the open
                      cut (-1,0]x{0} duplicated; the tip (0,0) stays single.
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}, expected one of {DOMAINS}")

    if domain == "unit_square":
        verts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
        tris = [(0, 1, 2), (0, 2, 3)]
        bnd = [(0, 1), (1, 2), (2, 3), (3, 0)]
        v, t = _oriented(verts, tris)
        return Mesh(domain, v, t, np.array(bnd))

    cx, cy = (2.0, 0.0) if domain == "shifted_square" else (0.0, 0.0)
    # 3x3 grid of vertices around the center
    coords = [(cx + dx, cy + dy) for dy in (-1.0, 0.0, 1.0) for dx in (-1.0, 0.0, 1.0)]
    index = {c: i for i, c in enumerate(coords)}
    center = index[(cx, cy)]

    tris = []
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        sq = [(cx, cy), (cx + sx, cy), (cx + sx, cy + sy), (cx, cy + sy)]
        for tri in _quadrant_split([index[c] for c in sq], 0):
            tris.append(tri)
    bnd = []
    ring = [(cx - 1, cy - 1), (cx, cy - 1), (cx + 1, cy - 1), (cx + 1, cy),
            (cx + 1, cy + 1), (cx, cy + 1), (cx - 1, cy + 1), (cx - 1, cy)]
    for a, b in zip(ring, ring[1:] + ring[:1]):
        bnd.append((index[a], index[b]))

    if domain != "slit":
        v, t = _oriented(coords, tris)
        return Mesh(domain, v, t, np.array(bnd))

    # duplicate cut vertices: y == 0 and -1 <= x < 0 (the tip x = 0 stays single)
    verts = [list(c) for c in coords]
    cut = [i for i, (x, y) in enumerate(coords) if y == 0.0 and -1.0 <= x < 0.0]
    upper_copy = {}
    for i in cut:
        upper_copy[i] = len(verts)
        verts.append(list(coords[i]))

    def relabel(tri):
        # triangles strictly above the cut use the duplicated (upper) copies
        ys = [verts[i][1] for i in tri]
        xs = [verts[i][0] for i in tri]
        above = sum(ys) > 0 and min(xs) < 0
        return tuple(upper_copy.get(i, i) if above and i in upper_copy else i for i in tri)

    tris = [relabel(t) for t in tris]
    # outer boundary edges along x = -1 above the cut attach to the upper copy of (-1,0)
    relabeled_bnd = []
    for a, b in bnd:
        (xa, ya), (xb, yb) = verts[a], verts[b]
        if xa == -1.0 and xb == -1.0 and max(ya, yb) > 0:
            a = upper_copy.get(a, a) if ya == 0.0 else a
            b = upper_copy.get(b, b) if yb == 0.0 else b
        relabeled_bnd.append((a, b))
    bnd = relabeled_bnd
    # both sides of the cut are boundary
    lower_left = index[(-1.0, 0.0)]
    for i, j in [(lower_left, center)]:
        bnd.append((i, j))                                # lower side keeps originals
        bnd.append((upper_copy[lower_left], center))      # upper side uses the copies
    v, t = _oriented(verts, tris)
    return Mesh(domain, v, t, np.array(bnd))


# ----------------------------------------------------------------------
# refinement
# ----------------------------------------------------------------------

def refine_uniform(mesh):
    """Red refinement: each triangle is split into 4 via edge midpoints.

    Midpoints are keyed by the (sorted) endpoint index pair, so the
    duplicated slit edges receive duplicated midpoints and the cut stays
    open after refinement.  Children of triangle t occupy slots 4t..4t+3.
    """
    verts = [tuple(v) for v in mesh.vertices]
    midpoint = {}

    def mid(i, j):
        key = (min(i, j), max(i, j))
        if key not in midpoint:
            midpoint[key] = len(verts)
            verts.append(((verts[i][0] + verts[j][0]) / 2.0,
                          (verts[i][1] + verts[j][1]) / 2.0))
        return midpoint[key]

    tris = np.empty((4 * mesh.num_triangles, 3), dtype=np.int64)
    child_map = np.arange(4 * mesh.num_triangles).reshape(-1, 4)
    for t, (a, b, c) in enumerate(mesh.triangles):
        mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
        tris[4 * t + 0] = (a, mab, mca)
        tris[4 * t + 1] = (b, mbc, mab)
        tris[4 * t + 2] = (c, mca, mbc)
        tris[4 * t + 3] = (mab, mbc, mca)

    bnd = []
    tags = []
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        m = mid(i, j)
        bnd.append((i, m))
        bnd.append((m, j))
        tags.extend((tag, tag))

    return Mesh(mesh.domain, np.array(verts), tris, np.array(bnd), tuple(tags),
                level=mesh.level + 1, parent=mesh, child_map=child_map)


def refine_to_level(domain, level):
    """Coarse template refined `level` times (hierarchy retained)."""
    m = make_initial_mesh(domain)
    for _ in range(level):
        m = refine_uniform(m)
    return m


# ----------------------------------------------------------------------
# diagnostics and queries
# ----------------------------------------------------------------------

def mesh_quality(mesh):
    xy = mesh.triangle_coords()
    e0 = np.linalg.norm(xy[:, 1] - xy[:, 0], axis=1)
    e1 = np.linalg.norm(xy[:, 2] - xy[:, 1], axis=1)
    e2 = np.linalg.norm(xy[:, 0] - xy[:, 2], axis=1)
    h = np.maximum(np.maximum(e0, e1), e2)
    perim = e0 + e1 + e2
    area = np.abs(mesh.signed_areas())
    inradius = 2.0 * area / perim
    rho = 2.0 * inradius
    return MeshQuality(h_max=float(h.max()), h_min=float(h.min()),
                       gamma=float((h / rho).max()),
                       quasi_uniformity_ratio=float(h.max() / h.min()))


def barycentric_coordinates(mesh, tri_index, x):
    """Barycentric coordinates of point x in the given triangle."""
    a, b, c = mesh.vertices[mesh.triangles[tri_index]]
    T = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    lam12 = np.linalg.solve(T, np.asarray(x, dtype=float) - a)
    return np.array([1.0 - lam12[0] - lam12[1], lam12[0], lam12[1]])


def _contains(mesh, tri_index, x, tol):
    lam = barycentric_coordinates(mesh, tri_index, x)
    return (lam.min() >= -tol), lam


def _on_cut(mesh, x):
    return (mesh.domain == "slit" and abs(x[1]) <= _EPS_ON_CUT
            and -1.0 <= x[0] < -_EPS_ON_CUT)


def locate_point(mesh, x, slit_side=None, tol=1e-10):
    """Find (triangle index, barycentric coordinates) containing x.

    Descends the refinement hierarchy from the root template, so lookup
    costs O(level).  For slit meshes, points on the open cut are ambiguous
    and require slit_side in {"above", "below"}.
    """
    x = np.asarray(x, dtype=float)
    if _on_cut(mesh, x) and slit_side not in ("above", "below"):
        raise ValueError("point lies on the slit cut; pass slit_side='above' or 'below'")

    def side_ok(m, t):
        if slit_side is None or not _on_cut(mesh, x):
            return True
        cy = m.vertices[m.triangles[t]].mean(axis=0)[1]
        return cy > 0 if slit_side == "above" else cy < 0

    chain = [mesh]
    while chain[-1].parent is not None:
        chain.append(chain[-1].parent)
    chain.reverse()

    root = chain[0]
    found = None
    for t in range(root.num_triangles):
        ok, lam = _contains(root, t, x, tol)
        if ok and side_ok(root, t):
            found = t
            break
    if found is None:
        raise PointOutsideDomain(f"point {x} not inside the level-0 mesh")

    for child_mesh in chain[1:]:
        nxt = None
        for t in child_mesh.child_map[found]:
            ok, lam = _contains(child_mesh, t, x, tol)
            if ok and side_ok(child_mesh, t):
                nxt = t
                break
        if nxt is None:
            raise PointOutsideDomain(f"point {x} lost during hierarchy descent")
        found = nxt

    lam = barycentric_coordinates(mesh, found, x)
    lam = np.clip(lam, 0.0, None)
    lam = lam / lam.sum()
    return found, lam
