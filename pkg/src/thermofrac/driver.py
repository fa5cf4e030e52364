"""Quasi-static time loop with predictor-corrector mesh adaptivity.

Each loading step is solved, then cells whose phase field dropped below
the refinement threshold are split, the state is transferred and the same
step is re-solved, until no cell below the maximum level is flagged (the
mesh follows the fracture).  Coarsening never happens; irreversibility
makes it unnecessary.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .fem import Discretization, LoadState, extrapolate_phase
from .mesh import flag_cells, generate_uniform, refine, seed_crack
from .params import resolve_active_set_c, validate_eps_resolution
from .postprocess import (EnergyRecord, crack_length, energies, max_cod,
                          tensile_indicator, write_vtk)
from .solver import NewtonError, solve_time_step
from .thermal import coupling_at

__all__ = ["SimulationState", "RunResult", "StepFailure", "prepare_initial",
           "run_simulation"]


class StepFailure(RuntimeError):
    """A loading step did not converge; carries the failing step index."""

    def __init__(self, step, cause):
        super().__init__(f"step {step} failed: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class SimulationState:
    """Current solution plus the two history levels.

    `phi_prev` doubles as the irreversibility bound for the next step.
    """

    u: np.ndarray
    phi: np.ndarray
    phi_prev: np.ndarray
    t_prev: float = 0.0
    phi_prev2: np.ndarray | None = None
    t_prev2: float | None = None
    completed_steps: int = 0

    def extrapolated(self, t_now):
        """Time-lagged phase field for the displacement block."""
        if self.completed_steps < 2:
            return np.array(self.phi_prev, copy=True)
        return extrapolate_phase(self.phi_prev, self.phi_prev2,
                                 self.t_prev, self.t_prev2, t_now)


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    step_seconds: list = field(default_factory=list)
    mesh: object = None
    disc: object = None
    state: SimulationState = None


def prepare_initial(mat, model, loads, geom):
    """Uniform mesh, pre-refined around the seeded crack, plus the state.

    Seeding and flagging iterate until the crack zone reaches max_level;
    the seed is re-applied after each round so its thickness follows the
    local cell size.
    """
    validate_eps_resolution(model, geom)
    mesh = generate_uniform(geom.a, model.initial_level)
    for _ in range(model.max_level - model.initial_level + 1):
        phi0 = seed_crack(mesh, geom)
        flags = flag_cells(mesh, phi0, model.tol_phi, model.max_level)
        if not flags:
            break
        mesh, _ = refine(mesh, flags)
    disc = Discretization(mesh)
    phi0 = disc.constraints.distribute_phi(seed_crack(mesh, geom))
    state = SimulationState(
        u=np.zeros(disc.dofmap.n_u),
        phi=phi0.copy(),
        phi_prev=phi0.copy(),
    )
    return mesh, disc, state


def run_simulation(mat, model, loads, geom, n_steps=None, threads=1,
                   out_dir=None, precond="ilu", collect_states=False):
    """Run the scenario; returns records and the final mesh/state.

    Per-step record fields aggregate over predictor-corrector rounds
    (Newton iterations are summed, GMRES averages are taken over all
    Newton iterations of the step).

    Raises
    ------
    StepFailure
        When a step's Newton loop cannot converge.
    """
    n_steps = model.n_steps if n_steps is None else n_steps
    mesh, disc, state = prepare_initial(mat, model, loads, geom)
    active_c = resolve_active_set_c(mat, model)

    # Settle the 0/1 seed into its optimal transition profile by one
    # zero-load relaxation (quadratic in phi, the seed row stays pinned).
    # The first real step then lags a resolved diffuse crack instead of a
    # one-node-wide one.
    try:
        _, phi_rel, settle_report = solve_time_step(
            disc, state.u, state.phi, state.phi, state.phi, LoadState(),
            mat, model, active_c, threads=threads, precond=precond,
        )
    except NewtonError as err:
        raise StepFailure(0, err) from err
    state.phi = phi_rel
    state.phi_prev = phi_rel.copy()

    result = RunResult()
    if out_dir is not None:
        write_vtk(f"{out_dir}/step_00000.vtk", mesh, state.u, state.phi,
                  tensile_indicator(disc, state.u))

    carried_active = settle_report.final_active
    carried_delta = settle_report.final_delta_phi
    states = [] if collect_states else None

    for n in range(1, n_steps + 1):
        t_n = n * model.dt
        tic = time.perf_counter()
        coup = coupling_at(t_n, mat, model, loads, geom)
        load = LoadState(
            dp=loads.pressure_at(n) - loads.p0,
            dtheta=loads.theta - loads.theta0,
            c_th=coup.c_theta,
        )

        step_reports = []
        u_guess = state.u
        phi_guess = state.phi
        phi_bound = state.phi_prev
        phi_tilde = state.extrapolated(t_n)
        for _ in range(2 * (model.max_level - model.initial_level) + 3):
            try:
                u_new, phi_new, report = solve_time_step(
                    disc, u_guess, phi_guess, phi_tilde, phi_bound, load,
                    mat, model, active_c, threads=threads, precond=precond,
                    prev_active=carried_active, prev_delta_phi=carried_delta,
                )
            except NewtonError as err:
                raise StepFailure(n, err) from err
            step_reports.append(report)
            flags = flag_cells(mesh, phi_new, model.tol_phi, model.max_level)
            if not flags:
                break
            mesh, transfer = refine(mesh, flags)
            disc = Discretization(mesh)
            u_guess = transfer.apply_displacement(u_new)
            phi_bound = transfer.apply(phi_bound)
            phi_guess = np.minimum(transfer.apply(phi_new), phi_bound)
            phi_tilde = transfer.apply(phi_tilde)
            state.phi_prev = phi_bound
            state.phi_prev2 = (None if state.phi_prev2 is None
                               else transfer.apply(state.phi_prev2))
            carried_active = None
            carried_delta = None

        # accept the step and roll histories
        state.phi_prev2 = state.phi_prev
        state.t_prev2 = state.t_prev
        state.phi_prev = phi_new
        state.t_prev = t_n
        state.u = u_new
        state.phi = phi_new
        state.completed_steps = n
        carried_active = step_reports[-1].final_active
        carried_delta = step_reports[-1].final_delta_phi

        e_mech, e_frac = energies(disc, u_new, phi_new, mat, model)
        iters = [it for rep in step_reports for it in rep.iterations]
        gmres_counts = [it.gmres_iters for it in iters if it.gmres_iters > 0]
        record = EnergyRecord(
            step=n,
            time=t_n,
            max_cod=max_cod(mesh, u_new, phi_new, geom),
            crack_length=crack_length(mesh, phi_new, geom),
            E_mech=e_mech,
            E_frac=e_frac,
            newton_iters=len(iters),
            gmres_avg=float(np.mean(gmres_counts)) if gmres_counts else 0.0,
            active_set_size=step_reports[-1].iterations[-1].active_size,
        )
        result.records.append(record)
        result.reports.append(step_reports)
        result.step_seconds.append(time.perf_counter() - tic)
        if out_dir is not None:
            write_vtk(f"{out_dir}/step_{n:05d}.vtk", mesh, u_new, phi_new,
                      tensile_indicator(disc, u_new))
        if collect_states:
            states.append((phi_bound.copy(), phi_new.copy()))

    result.mesh = mesh
    result.disc = disc
    result.state = state
    if collect_states:
        result.bound_pairs = states
    return result
