"""Constitutive layer: strain measures, vol/dev split, degraded stress/energy.

All functions are pure and broadcast over numpy arrays, so they serve both
pointwise unit checks and bulk quadrature-point evaluation during assembly.
Tensors are symmetric 2x2 and carried as component triples (xx, yy, xy);
fourth-order tangents are returned in 3x3 Voigt form acting on engineering
strain (eps_xx, eps_yy, gamma_xy).
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Sym2",
    "Strain2",
    "SplitEnergies",
    "SplitStresses",
    "split_strain",
    "heaviside_plus",
    "split_energy",
    "split_stress",
    "degradation",
    "driving_force",
    "crack_density",
]

# Voigt building blocks: J = I (x) I, DEV = 2 P with the 1/d projector, d = 2.
_VOIGT_J = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
_VOIGT_DEV = np.array([[1.0, -1.0, 0.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Sym2:
    """Symmetric 2x2 tensor (components broadcastable numpy arrays)."""

    xx: object
    yy: object
    xy: object

    def trace(self):
        return self.xx + self.yy

    def ddot(self, other):
        """Full contraction a : b."""
        return self.xx * other.xx + self.yy * other.yy + 2.0 * self.xy * other.xy


#: strains and stresses share the same container
Strain2 = Sym2


@dataclass(frozen=True)
class SplitEnergies:
    psi_plus: object
    psi_minus: object
    psi_total: object


@dataclass(frozen=True)
class SplitStresses:
    sigma_plus: Sym2
    sigma_minus: Sym2
    tangent_plus: np.ndarray   # (..., 3, 3) Voigt
    tangent_minus: np.ndarray


def split_strain(strain):
    """Additive decomposition into volumetric and deviatoric parts.

    The volumetric projector carries the factor 1/d with d = 2, which makes
    eps_dev : I = 0 hold exactly in plane problems.
    """
    half_tr = 0.5 * strain.trace()
    vol = Sym2(half_tr, half_tr, 0.0 * half_tr)
    dev = Sym2(strain.xx - half_tr, strain.yy - half_tr, strain.xy)
    return vol, dev


def heaviside_plus(tr_eps):
    """1 where tr(eps) > 0, else 0 (tensile indicator; 0 at exactly zero)."""
    return np.where(np.asarray(tr_eps) > 0.0, 1.0, 0.0)


def _branch_weights(tr_eps, mode):
    # 'voldev': degrade tension+shear only; 'none': degrade everything.
    if mode == "voldev":
        h = heaviside_plus(tr_eps)
        return h, 1.0 - h
    if mode == "none":
        one = np.ones_like(np.asarray(tr_eps, dtype=float))
        return one, np.zeros_like(one)
    raise ValueError(f"unknown split mode '{mode}'")


def split_energy(strain, mu, K_d, mode="voldev"):
    """Tensile/compressive split of the strain energy density (Pa).

    psi_vol = K_d/2 (tr eps)^2, psi_dev = mu eps_dev : eps_dev,
    psi_plus = H+ psi_vol + psi_dev, psi_minus = (1 - H+) psi_vol.
    With mode='none' the full density goes into psi_plus.
    """
    tr = strain.trace()
    _, dev = split_strain(strain)
    psi_vol = 0.5 * K_d * tr * tr
    psi_dev = mu * dev.ddot(dev)
    h_plus, h_minus = _branch_weights(tr, mode)
    return SplitEnergies(
        psi_plus=h_plus * psi_vol + psi_dev,
        psi_minus=h_minus * psi_vol,
        psi_total=psi_vol + psi_dev,
    )


def split_stress(strain, mu, K_d, mode="voldev"):
    """Stress split and the matching Voigt tangents.

    sigma_plus = K_d H+ tr(eps) I + 2 mu eps_dev,
    sigma_minus = K_d (1 - H+) tr(eps) I,
    so sigma_plus + sigma_minus equals the isotropic 2 mu eps + lam tr(eps) I.
    Each branch is the strain derivative of the matching energy branch, and
    the tangents are constant w.r.t. strain on either side of tr(eps) = 0.
    """
    tr = strain.trace()
    _, dev = split_strain(strain)
    h_plus, h_minus = _branch_weights(tr, mode)

    kp = K_d * h_plus * tr
    km = K_d * h_minus * tr
    sig_p = Sym2(kp + 2.0 * mu * dev.xx, kp + 2.0 * mu * dev.yy, 2.0 * mu * dev.xy)
    sig_m = Sym2(km, km, 0.0 * km)

    shape = np.shape(h_plus)
    c_p = (K_d * np.asarray(h_plus, dtype=float)).reshape(shape + (1, 1)) * _VOIGT_J \
        + mu * _VOIGT_DEV
    c_m = (K_d * np.asarray(h_minus, dtype=float)).reshape(shape + (1, 1)) * _VOIGT_J \
        + np.zeros(shape + (3, 3))
    return SplitStresses(sig_p, sig_m, c_p, c_m)


def degradation(phi, kappa_reg):
    """Quadratic degradation g = (1 - kappa) phi^2 + kappa."""
    return (1.0 - kappa_reg) * np.asarray(phi) ** 2 + kappa_reg


def driving_force(strain, phi, p, p0, theta, theta0, c_th, div_u, u, grad_p,
                  grad_theta, alpha_B, alpha_theta, K_d, mu, lam, kappa_reg):
    """Pointwise crack driving force conjugate to the phase field (Pa).

    Diagnostic only (never assembled).  Vanishes on the fully broken set
    phi <= 0 through the internal phi_+ clamp.  `u`, `grad_p`, `grad_theta`
    are 2-vectors (last axis) and may broadcast.
    """
    phi_p = np.maximum(np.asarray(phi, dtype=float), 0.0)
    tr = strain.trace()
    psi = 0.5 * lam * tr * tr + mu * strain.ddot(strain)
    u = np.asarray(u, dtype=float)
    grad_p = np.asarray(grad_p, dtype=float)
    grad_theta = np.asarray(grad_theta, dtype=float)
    beta = 2.0 * (1.0 - kappa_reg) * phi_p * psi
    beta -= 2.0 * (alpha_B - 1.0) * (p - p0) * phi_p * div_u
    beta += 2.0 * phi_p * (grad_p * u).sum(axis=-1)
    beta -= 2.0 * (3.0 * alpha_theta * K_d + c_th) * (theta - theta0) * phi_p * div_u
    beta += 2.0 * c_th * phi_p * (grad_theta * u).sum(axis=-1)
    return beta


def crack_density(phi, grad_phi, eps_pf):
    """Crack surface density per unit volume (1/m).

    gamma = (1 - phi)^2 / (2 eps) + eps/2 |grad phi|^2, eps > 0.
    """
    if eps_pf <= 0.0:
        raise ValueError(f"eps_pf must be positive, got {eps_pf}")
    grad_phi = np.asarray(grad_phi, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (1.0 - phi) ** 2 / (2.0 * eps_pf) \
        + 0.5 * eps_pf * (grad_phi ** 2).sum(axis=-1)
