"""Q1 discretization: DOF layout, constraints and block assembly.

Unknowns are nodal (u_x, u_y, phi).  Displacement DOFs come first
(vertex v owns 2v and 2v+1), phase-field DOFs follow, which gives the
2x2 block structure

    M = [[M_uu, 0.0 ], [M_pu, M_pp]],   F = [F_u, F_p],

with F the Newton right-hand side (the negative energy gradient).  The
upper-right block vanishes because the displacement equation sees the
time-lagged phase field.

Assembly is vectorized over cells with 2x2 Gauss quadrature per cell and
broadcasts through the constitutive layer in `physics`.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .physics import Sym2, degradation, split_energy, split_stress

__all__ = [
    "DofMap",
    "ConstraintSet",
    "BlockSystem",
    "LoadState",
    "Discretization",
    "assemble_residual",
    "assemble_system",
    "total_energy",
    "lumped_mass_diagonal",
    "extrapolate_phase",
]

# reference Q1 tables: nodes SW, SE, NE, NW; 2x2 Gauss points
_G = 1.0 / np.sqrt(3.0)
_QX = np.array([-_G, _G, _G, -_G])
_QY = np.array([-_G, -_G, _G, _G])
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])
_N = 0.25 * (1.0 + np.outer(_QX, _XI)) * (1.0 + np.outer(_QY, _ETA))  # (q, i)
_DN = np.empty((4, 4, 2))  # (q, i, d) on [-1, 1]^2
_DN[:, :, 0] = 0.25 * _XI[None, :] * (1.0 + np.outer(_QY, _ETA))
_DN[:, :, 1] = 0.25 * _ETA[None, :] * (1.0 + np.outer(_QX, _XI))

# boundary sides: local edge nodes and outward normal
_SIDES = {
    "xmin": ((0, 3), (-1.0, 0.0)),
    "xmax": ((1, 2), (1.0, 0.0)),
    "ymin": ((0, 1), (0.0, -1.0)),
    "ymax": ((3, 2), (0.0, 1.0)),
}


@dataclass(frozen=True)
class DofMap:
    """Global numbering: displacement block before the phase-field block."""

    n_vertices: int

    @property
    def n_u(self):
        return 2 * self.n_vertices

    @property
    def n_phi(self):
        return self.n_vertices

    @property
    def n_total(self):
        return self.n_u + self.n_phi

    def u_dof(self, vertex, comp):
        return 2 * vertex + comp

    def phi_dof(self, vertex):
        return self.n_u + vertex


@dataclass
class LoadState:
    """Spatially constant given loads at one time instant."""

    dp: float = 0.0                 # p - p0
    dtheta: float = 0.0             # theta - theta0
    c_th: float = 0.0               # thermal back-stress coefficient
    grad_p: tuple = (0.0, 0.0)      # given grad(p - p0)
    grad_theta: tuple = (0.0, 0.0)  # given grad(theta - theta0)


@dataclass
class BlockSystem:
    """Sparse 2x2 block Jacobian and the Newton right-hand side."""

    M_uu: sp.csr_matrix
    M_pu: sp.csr_matrix
    M_pp: sp.csr_matrix
    F_u: np.ndarray
    F_p: np.ndarray
    constrained: bool = False

    def full_matrix(self):
        """Stacked (N_u + N_phi) square matrix; the u-phi block is zero."""
        return sp.bmat(
            [[self.M_uu, None], [self.M_pu, self.M_pp]], format="csr"
        )

    def full_rhs(self):
        return np.concatenate([self.F_u, self.F_p])


class ConstraintSet:
    """Dirichlet, hanging-node and active-set eliminations.

    Hanging chains (a master that is itself hanging on a coarser edge) are
    resolved recursively, so the distribution matrices reference free DOFs
    only.  Applying the set to an already-constrained system is a no-op.
    """

    def __init__(self, mesh, dofmap, neumann_sides=frozenset()):
        self.mesh = mesh
        self.dofmap = dofmap
        self.neumann_sides = frozenset(neumann_sides)

        kx, ky = mesh.vertex_keys[:, 0], mesh.vertex_keys[:, 1]
        side_of = {
            "xmin": kx == 0, "xmax": kx == mesh.key_top,
            "ymin": ky == 0, "ymax": ky == mesh.key_top,
        }
        dirichlet = np.zeros(mesh.n_vertices, dtype=bool)
        for side, on_side in side_of.items():
            if side not in self.neumann_sides:
                dirichlet |= on_side
        self.dirichlet_vertices = dirichlet

        self._hanging_weights = self._resolve_chains(mesh.hanging)

        self.u_constrained = np.zeros(dofmap.n_u, dtype=bool)
        for v in np.nonzero(dirichlet)[0]:
            self.u_constrained[2 * v] = True
            self.u_constrained[2 * v + 1] = True
        self.phi_constrained = np.zeros(dofmap.n_phi, dtype=bool)
        for v in self._hanging_weights:
            self.u_constrained[2 * v] = True
            self.u_constrained[2 * v + 1] = True
            self.phi_constrained[v] = True

        self.C_u = self._distribution(dofmap.n_u, vector=True)
        self.C_phi = self._distribution(dofmap.n_phi, vector=False)

    def _resolve_chains(self, hanging):
        resolved = {}

        def resolve(v):
            if v in resolved:
                return resolved[v]
            weights = {}
            for m in hanging[v]:
                if m in hanging:
                    for mm, w in resolve(m).items():
                        weights[mm] = weights.get(mm, 0.0) + 0.5 * w
                else:
                    weights[m] = weights.get(m, 0.0) + 0.5
            resolved[v] = weights
            return weights

        for v in hanging:
            resolve(v)
        return resolved

    def _distribution(self, n, vector):
        rows, cols, vals = [], [], []
        constrained = self.u_constrained if vector else self.phi_constrained
        free = ~constrained
        idx = np.nonzero(free)[0]
        rows.extend(idx)
        cols.extend(idx)
        vals.extend(np.ones(idx.size))
        for v, weights in self._hanging_weights.items():
            for m, w in weights.items():
                if vector:
                    if self.dirichlet_vertices[m]:
                        continue  # homogeneous master contributes zero
                    for comp in (0, 1):
                        rows.append(2 * v + comp)
                        cols.append(2 * m + comp)
                        vals.append(w)
                else:
                    rows.append(v)
                    cols.append(m)
                    vals.append(w)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    # ------------------------------------------------------------------
    def apply(self, system, active_phi=None):
        """Condense hanging relations, then stamp identity rows.

        `active_phi` is an optional boolean mask over phase-field DOFs;
        flagged rows/columns are eliminated (delta phi = 0).  Idempotent:
        a constrained system is returned unchanged.
        """
        if system.constrained:
            return system
        Cu, Cp = self.C_u, self.C_phi
        M_uu = (Cu.T @ system.M_uu @ Cu).tocsr()
        M_pp = (Cp.T @ system.M_pp @ Cp).tocsr()
        M_pu = (Cp.T @ system.M_pu @ Cu).tocsr()
        F_u = Cu.T @ system.F_u
        F_p = Cp.T @ system.F_p

        phi_fixed = self.phi_constrained.copy()
        if active_phi is not None:
            keep = sp.diags((~active_phi).astype(float))
            M_pp = (keep @ M_pp @ keep).tocsr()
            M_pu = (keep @ M_pu).tocsr()
            F_p = F_p * ~active_phi
            phi_fixed |= active_phi

        M_uu = M_uu + sp.diags(self.u_constrained.astype(float))
        M_pp = M_pp + sp.diags(phi_fixed.astype(float))
        return BlockSystem(M_uu.tocsr(), M_pu, M_pp.tocsr(), F_u, F_p,
                           constrained=True)

    def constrain_residual(self, F_u, F_p, active_phi=None):
        """Distribute a raw residual pair; constrained entries become zero."""
        F_u = self.C_u.T @ F_u
        F_p = self.C_phi.T @ F_p
        if active_phi is not None:
            F_p = F_p * ~active_phi
        return F_u, F_p

    def distribute_u(self, u):
        return self.C_u @ u

    def distribute_phi(self, phi):
        return self.C_phi @ phi


class Discretization:
    """Mesh + DOF map + cached element tables + constraints."""

    def __init__(self, mesh, neumann_sides=frozenset(), neumann_tractions=None):
        self.mesh = mesh
        self.dofmap = DofMap(mesh.n_vertices)
        self.constraints = ConstraintSet(mesh, self.dofmap, neumann_sides)
        self.neumann_tractions = neumann_tractions or {}

        h = mesh.cell_h
        self.wdet = np.broadcast_to((0.25 * h * h)[:, None], (mesh.n_cells, 4)).copy()
        self.dn = _DN[None, :, :, :] * (2.0 / h)[:, None, None, None]  # (c,q,i,d)

        n_c = mesh.n_cells
        B = np.zeros((n_c, 4, 3, 8))
        B[:, :, 0, 0::2] = self.dn[:, :, :, 0]
        B[:, :, 1, 1::2] = self.dn[:, :, :, 1]
        B[:, :, 2, 0::2] = self.dn[:, :, :, 1]
        B[:, :, 2, 1::2] = self.dn[:, :, :, 0]
        self.B = B
        divB = np.zeros((n_c, 4, 8))
        divB[:, :, 0::2] = self.dn[:, :, :, 0]
        divB[:, :, 1::2] = self.dn[:, :, :, 1]
        self.divB = divB

        conn = mesh.conn
        self.edofs_u = np.empty((n_c, 8), dtype=np.int64)
        self.edofs_u[:, 0::2] = 2 * conn
        self.edofs_u[:, 1::2] = 2 * conn + 1

    # ------------------------------------------------------------------
    # pointwise field evaluation at quadrature points
    # ------------------------------------------------------------------
    def scalar_qp(self, nodal, cells=slice(None)):
        return np.asarray(nodal)[self.mesh.conn[cells]] @ _N.T

    def scalar_grad_qp(self, nodal, cells=slice(None)):
        vals = np.asarray(nodal)[self.mesh.conn[cells]]
        return np.einsum("ci,cqid->cqd", vals, self.dn[cells])

    def displacement_cell(self, u, cells=slice(None)):
        conn = self.mesh.conn[cells]
        return np.stack([u[2 * conn], u[2 * conn + 1]], axis=-1)  # (c, i, 2)

    def strain_qp(self, u, cells=slice(None)):
        uc = self.displacement_cell(u, cells)
        dn = self.dn[cells]
        exx = np.einsum("ci,cqi->cq", uc[:, :, 0], dn[:, :, :, 0])
        eyy = np.einsum("ci,cqi->cq", uc[:, :, 1], dn[:, :, :, 1])
        exy = 0.5 * (
            np.einsum("ci,cqi->cq", uc[:, :, 0], dn[:, :, :, 1])
            + np.einsum("ci,cqi->cq", uc[:, :, 1], dn[:, :, :, 0])
        )
        return Sym2(exx, eyy, exy)

    def displacement_qp(self, u, cells=slice(None)):
        uc = self.displacement_cell(u, cells)
        return np.einsum("cid,qi->cqd", uc, _N)


def _positive(x):
    return np.maximum(x, 0.0)


def _phi_coefficients(strain, u_q, load, mat, model):
    """Shared phase-field factor s(u): d/dphi of the bulk terms is phi_+ s."""
    psi = split_energy(strain, mat.mu, mat.K_d, model.split)
    press = -(mat.alpha_B - 1.0) * load.dp
    therm = (3.0 * mat.alpha_theta * mat.K_d + load.c_th) * load.dtheta
    gvec = np.asarray(load.grad_p) + load.c_th * np.asarray(load.grad_theta)
    div_u = strain.trace()
    s_lin = 2.0 * (1.0 - model.kappa_reg) * psi.psi_plus \
        + 2.0 * (press - therm) * div_u \
        + 2.0 * np.einsum("cqd,d->cq", u_q, gvec)
    return psi, s_lin, press, therm, gvec


def assemble_residual(disc, u, phi, phi_tilde, load, mat, model,
                      return_noise=False):
    """Newton right-hand side F = -grad E at the given state.

    The displacement rows see the time-lagged phase field `phi_tilde`
    (both in the degradation and the pressure/thermal weights); the
    phase-field rows use the current `phi`.  Rows are raw: Dirichlet,
    hanging and active-set elimination happen in ConstraintSet.apply.

    With `return_noise` the absolute-value assembly is scattered as well
    and its norm returned; times machine epsilon it bounds the roundoff
    floor of the residual (the attainable accuracy of the Newton test).
    """
    mesh, wdet = disc.mesh, disc.wdet
    strain = disc.strain_qp(u)
    stresses = split_stress(strain, mat.mu, mat.K_d, model.split)
    phi_q = disc.scalar_qp(phi)
    grad_phi = disc.scalar_grad_qp(phi)
    phit_p = _positive(disc.scalar_qp(phi_tilde))
    phi_p = _positive(phi_q)
    u_q = disc.displacement_qp(u)

    psi, s_lin, press, therm, gvec = _phi_coefficients(
        strain, u_q, load, mat, model
    )
    g_t = degradation(phit_p, model.kappa_reg)

    # displacement rows
    sigv = np.stack(
        [
            g_t * stresses.sigma_plus.xx + stresses.sigma_minus.xx,
            g_t * stresses.sigma_plus.yy + stresses.sigma_minus.yy,
            g_t * stresses.sigma_plus.xy + stresses.sigma_minus.xy,
        ],
        axis=-1,
    )
    grad_u = np.einsum("cqam,cqa->cqm", disc.B, sigv)
    grad_u += ((press - therm) * phit_p * phit_p)[:, :, None] * disc.divB
    if gvec.any():
        Gm = np.zeros((4, 8))
        Gm[:, 0::2] = gvec[0] * _N
        Gm[:, 1::2] = gvec[1] * _N
        grad_u += (phit_p * phit_p)[:, :, None] * Gm[None, :, :]
    elem_u = -np.einsum("cq,cqm->cm", wdet, grad_u)

    # phase-field rows
    eps_pf, Gc = model.eps, mat.Gc
    mass = phi_p * s_lin + (Gc / eps_pf) * (phi_q - 1.0)
    elem_p = -np.einsum("cq,cq,qi->ci", wdet, mass, _N)
    elem_p -= Gc * eps_pf * np.einsum("cq,cqd,cqid->ci", wdet, grad_phi, disc.dn)

    F_u = np.bincount(disc.edofs_u.ravel(), weights=elem_u.ravel(),
                      minlength=disc.dofmap.n_u)
    F_p = np.bincount(mesh.conn.ravel(), weights=elem_p.ravel(),
                      minlength=disc.dofmap.n_phi)
    F_u += _neumann_load(disc, load)
    if not return_noise:
        return F_u, F_p
    A_u = np.bincount(disc.edofs_u.ravel(), weights=np.abs(elem_u).ravel(),
                      minlength=disc.dofmap.n_u)
    A_p = np.bincount(mesh.conn.ravel(), weights=np.abs(elem_p).ravel(),
                      minlength=disc.dofmap.n_phi)
    return F_u, F_p, A_u, A_p


def _neumann_load(disc, load):
    """Boundary term of F: + <tau_tilde, basis> on the Neumann sides."""
    F = np.zeros(disc.dofmap.n_u)
    mesh = disc.mesh
    for side, traction in disc.neumann_tractions.items():
        locals_, normal = _SIDES[side]
        h = mesh.cell_h
        keys = mesh.vertex_keys
        if side == "xmin":
            on = keys[mesh.conn[:, 0], 0] == 0
        elif side == "xmax":
            on = keys[mesh.conn[:, 1], 0] == mesh.key_top
        elif side == "ymin":
            on = keys[mesh.conn[:, 0], 1] == 0
        else:
            on = keys[mesh.conn[:, 2], 1] == mesh.key_top
        cells = np.nonzero(on)[0]
        gp = np.array([0.5 - 0.5 * _G, 0.5 + 0.5 * _G])  # edge points in (0,1)
        for c in cells:
            i1, i2 = locals_
            v1, v2 = mesh.conn[c, i1], mesh.conn[c, i2]
            p1, p2 = mesh.vertices[v1], mesh.vertices[v2]
            for s in gp:
                xg = p1 + s * (p2 - p1)
                tau = np.asarray(traction(xg[0], xg[1]), dtype=float)
                tau_tilde = tau - load.dp * np.asarray(normal) \
                    + load.c_th * load.dtheta * np.asarray(normal)
                w = 0.5 * h[c]  # 1D Gauss weight x edge Jacobian
                F[2 * v1:2 * v1 + 2] += w * (1.0 - s) * tau_tilde
                F[2 * v2:2 * v2 + 2] += w * s * tau_tilde
    return F


def _jacobian_chunk(disc, u, phi, phi_tilde, load, mat, model, cells):
    strain = disc.strain_qp(u, cells)
    stresses = split_stress(strain, mat.mu, mat.K_d, model.split)
    phi_q = disc.scalar_qp(phi, cells)
    phit_p = _positive(disc.scalar_qp(phi_tilde, cells))
    phi_p = _positive(phi_q)
    u_q = disc.displacement_qp(u, cells)
    wdet = disc.wdet[cells]
    B = disc.B[cells]
    divB = disc.divB[cells]
    dn = disc.dn[cells]

    psi, s_lin, press, therm, gvec = _phi_coefficients(
        strain, u_q, load, mat, model
    )
    g_t = degradation(phit_p, model.kappa_reg)

    cmat = g_t[:, :, None, None] * stresses.tangent_plus + stresses.tangent_minus
    m_uu = np.einsum("cqam,cqab,cqbn,cq->cmn", B, cmat, B, wdet, optimize=True)

    sigp_v = np.stack(
        [stresses.sigma_plus.xx, stresses.sigma_plus.yy, stresses.sigma_plus.xy],
        axis=-1,
    )
    row = 2.0 * (1.0 - model.kappa_reg) * np.einsum("cqa,cqam->cqm", sigp_v, B)
    row += 2.0 * (press - therm) * divB
    if gvec.any():
        Gm = np.zeros((4, 8))
        Gm[:, 0::2] = gvec[0] * _N
        Gm[:, 1::2] = gvec[1] * _N
        row += 2.0 * Gm[None, :, :]
    m_pu = np.einsum("cq,qi,cqm->cim", wdet * phi_p, _N, row, optimize=True)

    ind = (phi_q > 0.0).astype(float)
    eps_pf, Gc = model.eps, mat.Gc
    mass_coef = ind * s_lin + Gc / eps_pf
    m_pp = np.einsum("cq,qi,qj->cij", wdet * mass_coef, _N, _N)
    m_pp += Gc * eps_pf * np.einsum("cq,cqid,cqjd->cij", wdet, dn, dn, optimize=True)
    return m_uu, m_pu, m_pp


def assemble_system(disc, u, phi, phi_tilde, load, mat, model, threads=1):
    """Assemble the block Jacobian and the Newton right-hand side (raw)."""
    n_c = disc.mesh.n_cells
    if threads > 1:
        bounds = np.linspace(0, n_c, threads + 1, dtype=int)
        chunks = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda sl: _jacobian_chunk(disc, u, phi, phi_tilde, load, mat,
                                           model, sl),
                chunks,
            ))
        m_uu = np.concatenate([p[0] for p in parts])
        m_pu = np.concatenate([p[1] for p in parts])
        m_pp = np.concatenate([p[2] for p in parts])
    else:
        m_uu, m_pu, m_pp = _jacobian_chunk(
            disc, u, phi, phi_tilde, load, mat, model, slice(None)
        )

    dofmap = disc.dofmap
    eu = disc.edofs_u
    conn = disc.mesh.conn
    M_uu = sp.csr_matrix(
        (m_uu.ravel(),
         (np.repeat(eu, 8, axis=1).ravel(), np.tile(eu, (1, 8)).ravel())),
        shape=(dofmap.n_u, dofmap.n_u),
    )
    M_pu = sp.csr_matrix(
        (m_pu.ravel(),
         (np.repeat(conn, 8, axis=1).ravel(), np.tile(eu, (1, 4)).ravel())),
        shape=(dofmap.n_phi, dofmap.n_u),
    )
    M_pp = sp.csr_matrix(
        (m_pp.ravel(),
         (np.repeat(conn, 4, axis=1).ravel(), np.tile(conn, (1, 4)).ravel())),
        shape=(dofmap.n_phi, dofmap.n_phi),
    )
    F_u, F_p = assemble_residual(disc, u, phi, phi_tilde, load, mat, model)
    return BlockSystem(M_uu, M_pu, M_pp, F_u, F_p)


def total_energy(disc, u, phi, phi_mech, load, mat, model):
    """Regularized energy functional.

    `phi_mech` enters the degradation and the pressure/thermal weights
    (pass phi for the plain functional, the extrapolated field to probe
    the displacement residual); the fracture term always uses `phi`.
    """
    strain = disc.strain_qp(u)
    psi = split_energy(strain, mat.mu, mat.K_d, model.split)
    phi_q = disc.scalar_qp(phi)
    grad_phi = disc.scalar_grad_qp(phi)
    phim_p = _positive(disc.scalar_qp(phi_mech))
    g = degradation(phim_p, model.kappa_reg)
    wdet = disc.wdet

    press = -(mat.alpha_B - 1.0) * load.dp
    therm = (3.0 * mat.alpha_theta * mat.K_d + load.c_th) * load.dtheta
    gvec = np.asarray(load.grad_p) + load.c_th * np.asarray(load.grad_theta)
    div_u = strain.trace()
    u_q = disc.displacement_qp(u)

    dens = g * psi.psi_plus + psi.psi_minus
    dens += (press - therm) * phim_p ** 2 * div_u
    dens += phim_p ** 2 * np.einsum("cqd,d->cq", u_q, gvec)
    dens += mat.Gc * (
        (1.0 - phi_q) ** 2 / (2.0 * model.eps)
        + 0.5 * model.eps * (grad_phi ** 2).sum(axis=-1)
    )
    E = float((wdet * dens).sum())
    if disc.neumann_tractions:
        E -= float(_neumann_load(disc, load) @ u)
    return E


def lumped_mass_diagonal(mesh):
    """Row-sum lumped Q1 mass diagonal over phase-field DOFs."""
    contrib = np.repeat(0.25 * mesh.cell_h ** 2, 4)
    return np.bincount(mesh.conn.ravel(), weights=contrib,
                       minlength=mesh.n_vertices)


def extrapolate_phase(phi_prev, phi_prev2, t_prev, t_prev2, t_now):
    """Linear extrapolation of the phase field to the new time level.

    With a single history level (phi_prev2 is None) the previous field is
    returned unchanged (startup rule for the first two steps).
    """
    if phi_prev2 is None:
        return np.array(phi_prev, dtype=float, copy=True)
    if t_prev == t_prev2:
        raise ValueError("history times must differ for extrapolation")
    w2 = (t_now - t_prev) / (t_prev2 - t_prev)
    w1 = (t_now - t_prev2) / (t_prev - t_prev2)
    return w2 * np.asarray(phi_prev2, dtype=float) \
        + w1 * np.asarray(phi_prev, dtype=float)
