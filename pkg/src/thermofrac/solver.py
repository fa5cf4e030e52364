"""Combined Newton / primal-dual active-set solver and the linear solver.

One time step solves the constrained minimization by the loop:
assemble -> update active set -> eliminate -> GMRES -> backtracking line
search -> update, until the active set is stable AND the inactive-set
residual has dropped by the prescribed relative tolerance (both criteria
simultaneously).  Crack irreversibility (phi can only decrease) is what
the active set enforces.

The linear systems are solved by restarted GMRES with a block-diagonal
preconditioner built from approximate inverses of M_uu and M_pp.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import assemble_residual, assemble_system, lumped_mass_diagonal

__all__ = [
    "LinearSolveError",
    "NewtonError",
    "NewtonIteration",
    "NewtonReport",
    "gmres_solve",
    "build_preconditioner",
    "update_active_set",
    "solve_block_triangular",
    "solve_time_step",
]

log = logging.getLogger(__name__)


class LinearSolveError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class NewtonIteration:
    residual: float        # inactive-set residual norm used for the stopping test
    active_size: int
    omega: float           # accepted line-search step (0 before the first solve)
    gmres_iters: int


@dataclass
class NewtonReport:
    iterations: list = field(default_factory=list)
    converged: bool = False
    r0: float = 0.0
    final_active: np.ndarray = None
    final_delta_phi: np.ndarray = None

    @property
    def n_iterations(self):
        return len(self.iterations)

    @property
    def gmres_average(self):
        counts = [it.gmres_iters for it in self.iterations if it.gmres_iters > 0]
        return float(np.mean(counts)) if counts else 0.0

    @property
    def residual_history(self):
        return [it.residual for it in self.iterations]


# ---------------------------------------------------------------------------
# GMRES with left preconditioning
# ---------------------------------------------------------------------------

def gmres_solve(A, b, precond=None, tol=1.0e-8, restart=100, max_iter=2000,
                x0=None):
    """Restarted GMRES; stops on the relative preconditioned residual.

    Parameters
    ----------
    A : scipy sparse matrix (or object supporting @ on vectors)
    b : ndarray
    precond : callable or None
        Applies the approximate inverse, z = P^-1 r.
    tol : float
        Convergence when ||P^-1 (b - A x)|| <= tol * ||P^-1 b||.
    restart : int
        Krylov space dimension per cycle.
    max_iter : int
        Total Arnoldi steps across restarts.

    Returns
    -------
    (x, iterations)

    Raises
    ------
    LinearSolveError
        When max_iter is exhausted before convergence.
    """
    n = b.shape[0]
    P = precond if precond is not None else (lambda r: r)
    x = np.zeros(n) if x0 is None else x0.astype(float).copy()

    beta0 = np.linalg.norm(P(b))
    if beta0 == 0.0:
        return np.zeros(n), 0

    iters = 0
    while True:
        r = P(b - A @ x)
        beta = np.linalg.norm(r)
        if beta <= tol * beta0:
            return x, iters
        if iters >= max_iter:
            raise LinearSolveError(
                f"GMRES: no convergence within {max_iter} iterations "
                f"(residual {beta / beta0:.3e})"
            )

        m = restart
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta

        j_used = 0
        breakdown = False
        for j in range(m):
            if iters >= max_iter:
                break
            w = P(A @ V[j])
            iters += 1
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] <= 1.0e-14 * beta
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            # apply stored Givens rotations, then the new one
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom if denom else 1.0
            sn[j] = H[j + 1, j] / denom if denom else 0.0
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            j_used = j + 1
            if abs(g[j + 1]) <= tol * beta0 or breakdown:
                break

        if j_used > 0:
            y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used])
            x = x + V[:j_used].T @ y
        if breakdown:
            return x, iters


# ---------------------------------------------------------------------------
# block-diagonal preconditioner
# ---------------------------------------------------------------------------

def build_preconditioner(system, mode="ilu"):
    """Approximate inverse of diag(M_uu, M_pp) applied blockwise.

    `mode` selects the per-block approximation: 'ilu' (incomplete LU,
    the default), 'direct' (sparse LU, exact) or 'jacobi' (diagonal).
    Factorization breakdown falls back to Jacobi with a logged warning.
    """
    n_u = system.M_uu.shape[0]

    def jacobi(M):
        d = M.diagonal()
        d = np.where(d == 0.0, 1.0, d)
        return lambda r: r / d

    solvers = []
    for name, M in (("uu", system.M_uu), ("pp", system.M_pp)):
        if mode == "jacobi":
            solvers.append(jacobi(M))
            continue
        try:
            if mode == "direct":
                lu = spla.splu(M.tocsc())
            else:
                lu = spla.spilu(M.tocsc(), drop_tol=1.0e-4, fill_factor=10)
            solvers.append(lu.solve)
        except Exception as err:  # factorization breakdown
            log.warning("block %s factorization failed (%s); Jacobi fallback",
                        name, err)
            solvers.append(jacobi(M))

    def apply(r):
        z = np.empty_like(r)
        z[:n_u] = solvers[0](r[:n_u])
        z[n_u:] = solvers[1](r[n_u:])
        return z

    return apply


def solve_block_triangular(system, rtol=1.0e-12):
    """Exploit M_uphi = 0: forward-solve the two blocks directly.

    Returns the same update as solving the full 2x2 system.
    """
    lu_u = spla.splu(system.M_uu.tocsc())
    du = lu_u.solve(system.F_u)
    lu_p = spla.splu(system.M_pp.tocsc())
    dp = lu_p.solve(system.F_p - system.M_pu @ du)
    return np.concatenate([du, dp])


# ---------------------------------------------------------------------------
# primal-dual active set
# ---------------------------------------------------------------------------

def update_active_set(residual_phi, delta_phi, b_diag, c, threshold=0.0):
    """Active DOFs of the bound constraint: (B^-1)_ii R_i + c dU_i > 0.

    `residual_phi` is the constrained Newton right-hand side on the
    phase-field block, `delta_phi` the previous update (previous step's
    last update on the first iteration, zero at t = 0).  `threshold`
    replaces the exact zero of the rule; passing a tiny positive value
    keeps floating-point noise from flipping membership of DOFs whose
    multiplier is numerically zero (genuinely pinned DOFs sit many orders
    of magnitude above it).
    """
    if np.any(b_diag <= 0.0):
        raise ValueError("lumped mass diagonal must be strictly positive")
    return residual_phi / b_diag + c * delta_phi > threshold


# ---------------------------------------------------------------------------
# combined Newton loop (one time step)
# ---------------------------------------------------------------------------

def solve_time_step(disc, u0, phi0, phi_tilde, phi_bound, load, mat, model,
                    active_c, threads=1, gmres_tol=1.0e-8, gmres_restart=100,
                    precond="ilu", prev_active=None, prev_delta_phi=None,
                    residual_floor=0.0, max_line_search=12):
    """Solve one loading step with the combined Newton / active-set loop.

    Convergence requires simultaneously a stable active set and
    R_tilde <= tol_newton * R_tilde_0 (inactive-set residual), after which
    the converged phase field satisfies phi <= phi_bound + 1e-8 nodewise.

    Returns
    -------
    (u, phi, NewtonReport)

    Raises
    ------
    NewtonError
        On non-convergence within model.max_newton iterations, line-search
        stagnation, or an irreversibility violation at convergence.
    """
    cons = disc.constraints
    n_phi = disc.dofmap.n_phi
    u = np.array(u0, dtype=float, copy=True)
    phi = np.array(phi0, dtype=float, copy=True)
    b_diag = lumped_mass_diagonal(disc.mesh)
    eligible = ~cons.phi_constrained

    report = NewtonReport()
    active_prev = prev_active
    dphi_prev = np.zeros(n_phi) if prev_delta_phi is None else prev_delta_phi
    r0 = None
    phi_bound = np.asarray(phi_bound, dtype=float)

    def inactive_norm(fu, fp, active):
        return float(np.hypot(np.linalg.norm(fu), np.linalg.norm(fp * ~active)))

    def project(p):
        # keep iterates feasible (the loop's own assumption): clamp to the
        # bound, then restore hanging-node conformity
        return cons.distribute_phi(np.minimum(p, phi_bound))

    noise_guard = 1.0e-12 * active_c
    for _ in range(model.max_newton):
        fu_raw, fp_raw, amag = assemble_residual(
            disc, u, phi, phi_tilde, load, mat, model, return_noise=True
        )
        fu, fp = cons.constrain_residual(fu_raw, fp_raw)
        active = update_active_set(fp, dphi_prev, b_diag, active_c,
                                   threshold=noise_guard) & eligible
        rt = inactive_norm(fu, fp, active)
        if r0 is None:
            r0 = rt
            report.r0 = rt
        # attainable precision of the residual in float64
        floor = max(residual_floor, 8.0 * np.finfo(float).eps * amag)

        stable = active_prev is not None and np.array_equal(active, active_prev)
        if stable and rt <= max(model.tol_newton * r0, floor):
            report.iterations.append(
                NewtonIteration(rt, int(active.sum()), 0.0, 0)
            )
            report.converged = True
            break
        active_prev = active

        system = assemble_system(disc, u, phi, phi_tilde, load, mat, model,
                                 threads=threads)
        sys_c = cons.apply(system, active_phi=active)
        P = build_preconditioner(sys_c, mode=precond)
        delta_c, n_gmres = gmres_solve(
            sys_c.full_matrix(), sys_c.full_rhs(), precond=P,
            tol=gmres_tol, restart=gmres_restart,
        )
        du = cons.distribute_u(delta_c[: disc.dofmap.n_u])
        dphi = cons.distribute_phi(delta_c[disc.dofmap.n_u:])

        omega = 1.0
        accepted = False
        for _ in range(max_line_search + 1):
            phi_trial = project(phi + omega * dphi)
            fu_t, fp_t = assemble_residual(
                disc, u + omega * du, phi_trial, phi_tilde, load, mat, model,
            )
            fu_t, fp_t = cons.constrain_residual(fu_t, fp_t)
            if inactive_norm(fu_t, fp_t, active) < rt:
                accepted = True
                break
            omega *= 0.5
        if not accepted:
            report.iterations.append(NewtonIteration(rt, int(active.sum()), 0.0,
                                                     n_gmres))
            raise NewtonError("line search stagnated", report=report)

        u += omega * du
        dphi_prev = phi_trial - phi
        phi = phi_trial
        report.iterations.append(
            NewtonIteration(rt, int(active.sum()), omega, n_gmres)
        )
    else:
        raise NewtonError(
            f"no convergence in {model.max_newton} Newton iterations",
            report=report,
        )

    report.final_active = active
    report.final_delta_phi = dphi_prev
    viol = float((phi - phi_bound).max())
    if viol > 1.0e-8:
        raise NewtonError(
            f"irreversibility violated by {viol:.3e} at convergence",
            report=report,
        )
    if float(phi.max()) > 1.0 + 1.0e-8:
        raise NewtonError("phase field exceeded 1 at convergence", report=report)
    return u, phi, report
