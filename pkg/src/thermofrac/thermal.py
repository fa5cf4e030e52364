"""Hagoort decline constant and the fracture thermal back-stress coefficient.

The decline constant lambda_theta measures the temperature gradient at the
fracture face as cold fluid diffuses heat into the rock; c_theta converts a
temperature difference into an effective normal stress on the crack faces.
Both are closed-form consequences of the heat conduction equation, no
temperature PDE is solved.
"""

import math
from dataclasses import dataclass

__all__ = ["ThermalCoupling", "lambda_theta", "c_theta", "coupling_at"]


def lambda_theta(t, kappa_theta, l0, gamma_T):
    """Hagoort's dimensionless decline constant at time t.

    lambda = asinh( gamma_T / (0.5 l0) * sqrt(pi kappa_theta t) )

    Parameters
    ----------
    t : float
        Time in seconds, t >= 0.
    kappa_theta : float
        Thermal diffusivity (m^2/s), > 0.
    l0 : float
        Crack half-length (m), > 0.
    gamma_T : float
        Dimensionless shape factor (default 2/pi reproduces the reference
        decline values on both day and minute scales).
    """
    if t < 0.0:
        raise ValueError(f"time must be non-negative, got {t}")
    if kappa_theta <= 0.0 or l0 <= 0.0:
        raise ValueError("kappa_theta and l0 must be positive")
    return math.asinh(gamma_T / (0.5 * l0) * math.sqrt(math.pi * kappa_theta * t))


def c_theta(lam_theta, E, beta, nu):
    """Thermal back-stress coefficient C_theta (Pa per degree C).

    C_theta = A_theta * lambda / (2 lambda + 1) with A_theta = E beta / (1 - nu).
    Saturates strictly below A_theta / 2.
    """
    if nu >= 1.0:
        raise ValueError(f"nu must be < 1, got {nu}")
    if lam_theta < 0.0:
        raise ValueError(f"lambda_theta must be >= 0, got {lam_theta}")
    a_theta = E * beta / (1.0 - nu)
    return a_theta * lam_theta / (2.0 * lam_theta + 1.0)


@dataclass(frozen=True)
class ThermalCoupling:
    """Decline constant and back-stress coefficient at one instant."""

    lambda_theta: float
    c_theta: float
    a_theta: float


def coupling_at(t, mat, model, loads, geom):
    """Evaluate the thermal coupling for a scenario at simulation time t (s).

    Mode 'off' forces C_theta = 0; 'constant' uses the configured constant
    decline value independent of t; 'hagoort' evaluates the time-dependent
    decline law.
    """
    a_theta = mat.E * mat.beta / (1.0 - mat.nu)
    if loads.lambda_theta_mode == "off":
        return ThermalCoupling(0.0, 0.0, a_theta)
    if loads.lambda_theta_mode == "constant":
        lam = loads.lambda_theta_const
    else:
        lam = lambda_theta(t, mat.kappa_theta, geom.l0, model.gamma_T)
    return ThermalCoupling(lam, c_theta(lam, mat.E, mat.beta, mat.nu), a_theta)
