"""Quantities of interest and file output.

The crack opening displacement (aperture) is the line integral of
u . grad(phi) across the crack: grad(phi) has opposite signs on the two
faces, so the integral picks up the displacement jump without tracking
the faces explicitly.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .physics import crack_density, degradation, heaviside_plus, split_energy

__all__ = [
    "EnergyRecord",
    "cod_at",
    "cod_profile",
    "max_cod",
    "energies",
    "crack_length",
    "tensile_indicator",
    "write_vtk",
    "write_csv",
]


@dataclass
class EnergyRecord:
    """One row of the per-step time series."""

    step: int
    time: float
    max_cod: float
    crack_length: float
    E_mech: float
    E_frac: float
    newton_iters: int
    gmres_avg: float
    active_set_size: int


def _eval_u_gradphi(mesh, u, phi, x, y):
    c = mesh.locate(x, y)
    h = mesh.cell_h[c]
    x0, y0 = mesh.cell_origin[c]
    s, t = (x - x0) / h, (y - y0) / h
    conn = mesh.conn[c]
    shape = np.array([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])
    dx = np.array([-(1 - t), (1 - t), t, -t]) / h
    dy = np.array([-(1 - s), -s, s, (1 - s)]) / h
    ux = float(shape @ u[2 * conn])
    uy = float(shape @ u[2 * conn + 1])
    pv = phi[conn]
    return ux * float(dx @ pv) + uy * float(dy @ pv)


def cod_at(mesh, u, phi, x0):
    """Aperture at abscissa x0: integral of u . grad(phi) along x = x0.

    Sampled at step h_min/2 over the full height with bilinear
    interpolation of u and cellwise Q1 gradients of phi, composite
    trapezoid rule.  Raises ValueError when x0 lies outside the domain.
    """
    if not 0.0 <= x0 <= 2.0 * mesh.a:
        raise ValueError(f"x0 = {x0} outside the domain")
    step = 0.5 * mesh.h_min()
    n = int(round(2.0 * mesh.a / step))
    ys = np.linspace(0.0, 2.0 * mesh.a, n + 1)
    vals = np.array([_eval_u_gradphi(mesh, u, phi, x0, y) for y in ys])
    return float(np.trapezoid(vals, ys))


def cod_profile(mesh, u, phi, xs):
    return np.array([cod_at(mesh, u, phi, x) for x in xs])


def max_cod(mesh, u, phi, geom, n_samples=41):
    """Largest aperture sampled across the initial crack span."""
    xs = np.linspace(geom.a - geom.l0, geom.a + geom.l0, n_samples)
    return float(cod_profile(mesh, u, phi, xs).max())


def energies(disc, u, phi, mat, model):
    """Mechanical and fracture energy of a converged state (Formulation-3
    terms, 2x2 Gauss quadrature).

    Returns
    -------
    (E_mech, E_frac) : J/m (per unit thickness)
    """
    strain = disc.strain_qp(u)
    psi = split_energy(strain, mat.mu, mat.K_d, model.split)
    phi_q = np.maximum(disc.scalar_qp(phi), 0.0)
    grad_phi = disc.scalar_grad_qp(phi)
    g = degradation(phi_q, model.kappa_reg)
    e_mech = float((disc.wdet * (g * psi.psi_plus + psi.psi_minus)).sum())
    gamma = crack_density(disc.scalar_qp(phi), grad_phi, model.eps)
    e_frac = float(mat.Gc * (disc.wdet * gamma).sum())
    return e_mech, e_frac


def crack_length(mesh, phi, geom):
    """Measure of {phi <= 0.5} along the crack line y = a, h_min/2 sampling."""
    step = 0.5 * mesh.h_min()
    n = int(round(2.0 * mesh.a / step))
    xs = np.linspace(0.0, 2.0 * mesh.a, n + 1)
    vals = np.array([mesh.interp(phi, x, geom.a) for x in xs])
    return float((vals <= 0.5).sum() * step)


def tensile_indicator(disc, u):
    """Cellwise mean of the tensile Heaviside H+(tr eps) for visualization."""
    strain = disc.strain_qp(u)
    return heaviside_plus(strain.trace()).mean(axis=1)


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------

def _g17(x):
    return f"{x:.17g}"


def write_vtk(path, mesh, u, phi, theta_u=None):
    """Legacy ASCII VTK unstructured grid with the solution fields.

    Point data: vector `displacement`, scalar `phi`; cell data: scalar
    `theta_u` (0 written when not supplied) and `level`.
    """
    n_v, n_c = mesh.n_vertices, mesh.n_cells
    if theta_u is None:
        theta_u = np.zeros(n_c)
    lines = [
        "# vtk DataFile Version 3.0",
        "thermofrac snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n_v} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{_g17(x)} {_g17(y)} 0")
    lines.append(f"CELLS {n_c} {5 * n_c}")
    for quad in mesh.conn:
        lines.append("4 " + " ".join(str(v) for v in quad))
    lines.append(f"CELL_TYPES {n_c}")
    lines.extend(["9"] * n_c)
    lines.append(f"POINT_DATA {n_v}")
    lines.append("VECTORS displacement double")
    for v in range(n_v):
        lines.append(f"{_g17(u[2 * v])} {_g17(u[2 * v + 1])} 0")
    lines.append("SCALARS phi double 1")
    lines.append("LOOKUP_TABLE default")
    for v in range(n_v):
        lines.append(_g17(phi[v]))
    lines.append(f"CELL_DATA {n_c}")
    lines.append("SCALARS theta_u double 1")
    lines.append("LOOKUP_TABLE default")
    for c in range(n_c):
        lines.append(_g17(theta_u[c]))
    lines.append("SCALARS level int 1")
    lines.append("LOOKUP_TABLE default")
    for c in range(n_c):
        lines.append(str(int(mesh.cell_level[c])))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as err:
        raise OSError(f"cannot write VTK file {path}: {err}") from err


CSV_HEADER = ["step", "time", "max_cod", "crack_length", "E_mech", "E_frac",
              "newton_iters", "gmres_avg", "active_set_size"]


def write_csv(records, path):
    """Per-step time series, one row per record, 17 significant digits."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in records:
                writer.writerow([
                    r.step, _g17(r.time), _g17(r.max_cod), _g17(r.crack_length),
                    _g17(r.E_mech), _g17(r.E_frac), r.newton_iters,
                    _g17(r.gmres_avg), r.active_set_size,
                ])
    except OSError as err:
        raise OSError(f"cannot write CSV file {path}: {err}") from err
