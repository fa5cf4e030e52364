"""Closed-form crack opening oracles (Sneddon-Lowengrub / Tran).

These formulas give the aperture of a pressurized, cooled crack of
half-length l0 in an infinite medium and are the quantitative reference
for the finite element results.
"""

import math
from dataclasses import dataclass

from .thermal import c_theta, lambda_theta

__all__ = ["AnalyticCase", "cod_analytic_2d", "cod_analytic_3d", "max_width_series"]


@dataclass(frozen=True)
class AnalyticCase:
    """Inputs of the closed-form aperture formulas."""

    l0: float
    E: float
    nu: float
    p: float
    p0: float
    theta: float = 0.0
    theta0: float = 0.0
    c_theta: float = 0.0
    dim: int = 2

    # thermal-evolution extras used by max_width_series
    beta: float = 0.0
    kappa_theta: float = 1.0e-6
    gamma_T: float = 2.0 / math.pi
    lambda_theta_mode: str = "off"
    lambda_theta_const: float = 0.0

    @classmethod
    def from_params(cls, mat, model, loads, geom, dim=2):
        return cls(
            l0=geom.l0, E=mat.E, nu=mat.nu, p=loads.p_bar, p0=loads.p0,
            theta=loads.theta, theta0=loads.theta0, dim=dim, beta=mat.beta,
            kappa_theta=mat.kappa_theta, gamma_T=model.gamma_T,
            lambda_theta_mode=loads.lambda_theta_mode,
            lambda_theta_const=loads.lambda_theta_const,
        )

    def driving_stress(self, c_th=None):
        c_th = self.c_theta if c_th is None else c_th
        return self.p - self.p0 - c_th * (self.theta - self.theta0)


def _elliptic_profile(x, l0):
    rho = abs(x) / l0
    if rho > 1.0:
        return 0.0, False
    return math.sqrt(1.0 - rho * rho), True


def cod_analytic_2d(x, case, c_th=None):
    """Aperture w(x) of the plane-strain crack, x measured from its center.

    w = 2 (1 - nu^2) l0 / E * sqrt(1 - rho^2) * (p - p0 - C_theta (theta - theta0))

    Points beyond the tips (|x| > l0) return 0.
    """
    shape, on_crack = _elliptic_profile(x, case.l0)
    if not on_crack:
        return 0.0
    return 2.0 * (1.0 - case.nu ** 2) * case.l0 / case.E * shape * case.driving_stress(c_th)


def cod_analytic_3d(x, case, c_th=None):
    """Aperture of the penny-shaped crack, x the radial distance from center.

    Identical to the 2D formula up to the factor 2/pi.
    """
    shape, on_crack = _elliptic_profile(x, case.l0)
    if not on_crack:
        return 0.0
    return 4.0 * (1.0 - case.nu ** 2) * case.l0 / (math.pi * case.E) \
        * shape * case.driving_stress(c_th)


def on_crack(x, l0):
    """True when the evaluation point lies on the crack (|x| <= l0)."""
    return abs(x) <= l0


def max_width_series(times, case, mode=None):
    """Maximum aperture (x = 0) over a list of ascending times (s).

    Composes the decline law with the aperture formula per time point;
    `mode` defaults to the case's lambda_theta_mode.

    Returns
    -------
    list of (t, w_max)
    """
    mode = case.lambda_theta_mode if mode is None else mode
    cod = cod_analytic_2d if case.dim == 2 else cod_analytic_3d
    series = []
    for t in times:
        if mode == "off":
            c_th = 0.0
        elif mode == "constant":
            c_th = c_theta(case.lambda_theta_const, case.E, case.beta, case.nu)
        else:
            lam = lambda_theta(t, case.kappa_theta, case.l0, case.gamma_T)
            c_th = c_theta(lam, case.E, case.beta, case.nu)
        series.append((t, cod(0.0, case, c_th=c_th)))
    return series
