"""Convergence and series verification against the analytic oracles.

Uniform-level runs of the stationary cases are compared with the
closed-form aperture: the profile over the crack and its maximum.  The
regularization length is coupled to the level (eps = EPS_FACTOR * h), so
refining the mesh also sharpens the diffuse crack and the numerical
aperture converges toward the sharp-crack formula.
"""

from dataclasses import dataclass, replace

import numpy as np

from .analytic import AnalyticCase, cod_analytic_2d, max_width_series
from .driver import run_simulation
from .postprocess import cod_profile
from .thermal import coupling_at

__all__ = ["EPS_FACTOR", "LevelResult", "convergence_study", "series_study"]

EPS_FACTOR = 2.0  # eps / h on uniform verification meshes
PROFILE_SAMPLES = 81


@dataclass
class LevelResult:
    level: int
    h: float
    max_cod_num: float
    max_cod_ana: float
    rel_err: float
    l2_profile_err: float


def _uniform_model(model, geom, level):
    h = 2.0 * geom.a / 2 ** level
    return replace(model, initial_level=level, max_level=level,
                   eps=EPS_FACTOR * h)


def run_level(mat, model, loads, geom, level, threads=1):
    """Run one uniform level and compare the final COD profile."""
    model_l = _uniform_model(model, geom, level)
    result = run_simulation(mat, model_l, loads, geom, threads=threads)

    t_end = model_l.n_steps * model_l.dt
    coup = coupling_at(t_end, mat, model_l, loads, geom)
    case = AnalyticCase(
        l0=geom.l0, E=mat.E, nu=mat.nu,
        p=loads.pressure_at(model_l.n_steps), p0=loads.p0,
        theta=loads.theta, theta0=loads.theta0, c_theta=coup.c_theta,
    )
    xs = geom.a + geom.l0 * np.linspace(-1.0, 1.0, PROFILE_SAMPLES)
    w_num = cod_profile(result.mesh, result.state.u, result.state.phi, xs)
    w_ana = np.array([cod_analytic_2d(x - geom.a, case) for x in xs])
    rel = abs(w_num.max() - w_ana.max()) / w_ana.max()
    l2 = float(np.sqrt(np.trapezoid((w_num - w_ana) ** 2, xs)))
    return LevelResult(level, 2.0 * geom.a / 2 ** level,
                       float(w_num.max()), float(w_ana.max()), float(rel), l2), result


def convergence_study(mat, model, loads, geom, levels, threads=1):
    """Uniform-level sweep; returns one LevelResult per level."""
    return [run_level(mat, model, loads, geom, lv, threads=threads)[0]
            for lv in levels]


def convergence_passes(results, rel_tol=0.15):
    """Acceptance rule for the stationary cases: errors strictly decrease
    with level and the finest level meets the relative tolerance."""
    rel = [r.rel_err for r in results]
    l2 = [r.l2_profile_err for r in results]
    dec_rel = all(b < a for a, b in zip(rel, rel[1:]))
    dec_l2 = all(b < a for a, b in zip(l2, l2[1:]))
    return dec_rel and dec_l2 and rel[-1] <= rel_tol


def series_study(mat, model, loads, geom, level=None, threads=1, n_steps=None):
    """Time series of the maximum aperture vs the analytic decline series.

    Returns (times, w_num, w_ana, LevelResult) where the LevelResult row
    reports the final-time values and the worst pointwise relative error.
    """
    level = model.initial_level if level is None else level
    model_l = _uniform_model(model, geom, level)
    if n_steps is not None:
        model_l = replace(model_l, n_steps=n_steps)
    result = run_simulation(mat, model_l, loads, geom, threads=threads)
    times = np.array([r.time for r in result.records])
    w_num = np.array([r.max_cod for r in result.records])
    case = AnalyticCase.from_params(mat, model_l, loads, geom)
    w_ana = np.array([w for _, w in max_width_series(times, case)])
    rel = np.abs(w_num - w_ana) / w_ana
    row = LevelResult(
        level, 2.0 * geom.a / 2 ** level, float(w_num[-1]), float(w_ana[-1]),
        float(rel.max()), float(np.sqrt(np.trapezoid((w_num - w_ana) ** 2, times))),
    )
    return times, w_num, w_ana, row


def series_passes(w_num, rel_errs_max, rel_tol=0.20):
    """Acceptance rule for the decline series: monotone increasing maximum
    aperture tracking the analytic series pointwise."""
    increasing = bool(np.all(np.diff(w_num) >= -1.0e-12 * w_num.max()))
    return increasing and rel_errs_max <= rel_tol
