"""Adaptive quadrilateral mesh of the square reservoir (0, 2a)^2.

The mesh is a quadtree: a cell at level l is addressed by (l, i, j) and
covers [i h_l, (i+1) h_l] x [j h_l, (j+1) h_l] with h_l = 2a / 2^l.  Leaf
cells tile the domain; refinement keeps the mesh 1-irregular (edge
neighbors differ by at most one level), so every hanging vertex sits at
the midpoint of exactly one coarse edge.

Vertex identity uses exact integer lattice coordinates in units of
2a / 2^LMAX, which makes vertex matching and hanging-node detection exact.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["QuadMesh", "FieldTransfer", "generate_uniform", "flag_cells",
           "refine", "seed_crack"]

_LMAX = 24  # deepest representable level


@dataclass(frozen=True)
class FieldTransfer:
    """Maps nodal vectors from an old mesh to a refined mesh.

    Identity on vertices that persist, bilinear interpolation on vertices
    created by refinement.
    """

    matrix: sp.csr_matrix  # (n_new, n_old)

    def apply(self, nodal):
        return self.matrix @ np.asarray(nodal, dtype=float)

    def apply_displacement(self, u):
        """Transfer an interleaved (u_x, u_y) vector."""
        u = np.asarray(u, dtype=float).reshape(-1, 2)
        return np.column_stack([self.matrix @ u[:, 0], self.matrix @ u[:, 1]]).ravel()


def _corner_keys(level, i, j):
    s = 1 << (_LMAX - level)
    x0, y0 = i * s, j * s
    # counterclockwise: SW, SE, NE, NW
    return ((x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s))


class QuadMesh:
    """Quadtree mesh with compiled numpy views for assembly."""

    def __init__(self, a, leaves):
        if not leaves:
            raise ValueError("mesh needs at least one cell")
        self.a = float(a)
        self._unit = 2.0 * self.a / (1 << _LMAX)
        self._leaves = set(leaves)
        self._compile()

    # ------------------------------------------------------------------
    # compiled arrays
    # ------------------------------------------------------------------
    def _compile(self):
        cells = sorted(self._leaves)
        vkeys = set()
        for (l, i, j) in cells:
            vkeys.update(_corner_keys(l, i, j))
        vkeys = sorted(vkeys)
        v_index = {k: n for n, k in enumerate(vkeys)}

        self.cells = cells
        self.cell_index = {k: n for n, k in enumerate(cells)}
        self.v_index = v_index
        self.vkeys = vkeys
        self.n_cells = len(cells)
        self.n_vertices = len(vkeys)
        self.vertices = np.array(vkeys, dtype=float) * self._unit
        self.cell_level = np.array([c[0] for c in cells], dtype=np.int32)
        self.cell_h = 2.0 * self.a / (1 << self.cell_level).astype(float)
        self.conn = np.array(
            [[v_index[k] for k in _corner_keys(*c)] for c in cells], dtype=np.int64
        )
        self.cell_origin = self.vertices[self.conn[:, 0]]
        self._levels_present = sorted({c[0] for c in cells}, reverse=True)

        # hanging vertices: midpoint of a leaf edge that exists as a vertex
        hanging = {}
        for (l, i, j) in cells:
            ck = _corner_keys(l, i, j)
            for e in range(4):
                k1, k2 = ck[e], ck[(e + 1) % 4]
                mid = ((k1[0] + k2[0]) // 2, (k1[1] + k2[1]) // 2)
                m = v_index.get(mid)
                if m is not None:
                    hanging[m] = (v_index[k1], v_index[k2])
        self.hanging = hanging

        top = 1 << _LMAX
        keys = np.array(vkeys, dtype=np.int64)
        self.vertex_keys = keys
        self.key_top = top
        self.on_boundary = (
            (keys[:, 0] == 0) | (keys[:, 0] == top)
            | (keys[:, 1] == 0) | (keys[:, 1] == top)
        )

        # local cell size per vertex: smallest incident cell
        h_loc = np.full(self.n_vertices, np.inf)
        np.minimum.at(h_loc, self.conn.ravel(),
                      np.repeat(self.cell_h, 4))
        self.vertex_h = h_loc

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------
    def h_min(self):
        return float(self.cell_h.min())

    def h_max(self):
        return float(self.cell_h.max())

    def is_one_irregular(self):
        """Every leaf's edge neighbors differ by at most one level."""
        for (l, i, j) in self.cells:
            for (i2, j2) in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
                if not (0 <= i2 < (1 << l) and 0 <= j2 < (1 << l)):
                    continue
                cover = self._covering_leaf(l, i2, j2)
                if cover is not None and l - cover[0] > 1:
                    return False
        return True

    def _covering_leaf(self, level, i, j):
        """Leaf at level <= `level` covering cell coords, or None if finer."""
        for lev in range(level, -1, -1):
            key = (lev, i >> (level - lev), j >> (level - lev))
            if key in self._leaves:
                return key
        return None

    def locate(self, x, y):
        """Index of the leaf cell containing (x, y); right/top edges closed."""
        if not (0.0 <= x <= 2.0 * self.a and 0.0 <= y <= 2.0 * self.a):
            raise ValueError(f"point ({x}, {y}) outside the domain")
        for l in self._levels_present:
            n = 1 << l
            h = 2.0 * self.a / n
            i = min(int(x / h), n - 1)
            j = min(int(y / h), n - 1)
            key = (l, i, j)
            if key in self._leaves:
                return self.cell_index[key]
        raise RuntimeError("point not covered by any leaf")  # pragma: no cover

    def interp(self, nodal, x, y):
        """Bilinear interpolation of a nodal field at one point."""
        c = self.locate(x, y)
        return self._eval(nodal, c, x, y)[0]

    def grad(self, nodal, x, y):
        """Gradient of the Q1 interpolant at one point (cellwise value)."""
        return self._eval(nodal, c := self.locate(x, y), x, y)[1]

    def _eval(self, nodal, c, x, y):
        h = self.cell_h[c]
        x0, y0 = self.cell_origin[c]
        s, t = (x - x0) / h, (y - y0) / h
        n = np.asarray(nodal, dtype=float)[self.conn[c]]
        shape = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
        dx = np.array([-(1 - t), (1 - t), t, -t]) / h
        dy = np.array([-(1 - s), -s, s, (1 - s)]) / h
        return float(shape @ n), np.array([dx @ n, dy @ n])


def generate_uniform(a, level):
    """Uniform mesh of (0, 2a)^2 with (2^level)^2 congruent square cells."""
    if level < 0 or level > _LMAX:
        raise ValueError(f"level must lie in [0, {_LMAX}], got {level}")
    n = 1 << level
    return QuadMesh(a, {(level, i, j) for i in range(n) for j in range(n)})


def flag_cells(mesh, phi_nodal, tol_phi, max_level):
    """Cells below max_level with at least one vertex below the threshold."""
    phi = np.asarray(phi_nodal, dtype=float)
    low = (phi[mesh.conn] < tol_phi).any(axis=1)
    flagged = np.nonzero(low & (mesh.cell_level < max_level))[0]
    return set(int(c) for c in flagged)


def refine(mesh, flags):
    """Split flagged leaves into 4 children, restoring 1-irregularity.

    Returns the refined mesh and the nodal transfer.  An empty flag set
    returns an identical mesh with an identity transfer.
    """
    leaves = set(mesh._leaves)
    old_keys = mesh.v_index
    stencil = {}  # new vertex key -> ((key, w), ...)

    def split(key):
        l, i, j = key
        if l + 1 > _LMAX:
            raise ValueError("refinement exceeds the representable depth")
        ck = _corner_keys(l, i, j)
        mids = []
        for e in range(4):
            k1, k2 = ck[e], ck[(e + 1) % 4]
            mids.append(((k1[0] + k2[0]) // 2, (k1[1] + k2[1]) // 2))
        center = ((ck[0][0] + ck[2][0]) // 2, (ck[0][1] + ck[2][1]) // 2)
        for e, m in enumerate(mids):
            if m not in old_keys and m not in stencil:
                stencil[m] = ((ck[e], 0.5), (ck[(e + 1) % 4], 0.5))
        if center not in stencil:
            stencil[center] = tuple((k, 0.25) for k in ck)
        leaves.remove(key)
        for di in (0, 1):
            for dj in (0, 1):
                leaves.add((l + 1, 2 * i + di, 2 * j + dj))

    def covering_leaf(level, i, j):
        for lev in range(level, -1, -1):
            key = (lev, i >> (level - lev), j >> (level - lev))
            if key in leaves:
                return key
        return None

    stack = [mesh.cells[c] for c in sorted(flags)]
    while stack:
        key = stack[-1]
        if key not in leaves:
            stack.pop()
            continue
        l, i, j = key
        need = []
        for (i2, j2) in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if not (0 <= i2 < (1 << l) and 0 <= j2 < (1 << l)):
                continue
            cover = covering_leaf(l, i2, j2)
            if cover is not None and cover[0] < l:
                need.append(cover)
        if need:
            stack.extend(need)
        else:
            stack.pop()
            split(key)

    new_mesh = QuadMesh(mesh.a, leaves)

    rows, cols, vals = [], [], []
    for key, new_idx in new_mesh.v_index.items():
        old_idx = old_keys.get(key)
        if old_idx is not None:
            rows.append(new_idx)
            cols.append(old_idx)
            vals.append(1.0)
        else:
            for k, w in stencil[key]:
                rows.append(new_idx)
                cols.append(old_keys[k])
                vals.append(w)
    T = sp.csr_matrix(
        (vals, (rows, cols)), shape=(new_mesh.n_vertices, mesh.n_vertices)
    )
    return new_mesh, FieldTransfer(T)


def seed_crack(mesh, geom, return_distance=False):
    """Initial phase field: 0 on a one-node-thick layer along the crack.

    The crack is the segment y = a, x in [a - l0, a + l0].  A vertex is
    seeded when its distance to the segment is at most half its local cell
    size, which puts exactly the node row on the crack line to zero on a
    uniform mesh.
    """
    a, l0 = geom.a, geom.l0
    if not (0.0 < a - l0 and a + l0 < 2.0 * a):
        raise ValueError("crack segment must lie inside the domain")
    x = mesh.vertices[:, 0]
    y = mesh.vertices[:, 1]
    dx = np.maximum(np.abs(x - a) - l0, 0.0)
    dist = np.hypot(dx, y - a)
    phi0 = np.where(dist <= 0.5 * mesh.vertex_h, 0.0, 1.0)
    if return_distance:
        return phi0, dist
    return phi0
