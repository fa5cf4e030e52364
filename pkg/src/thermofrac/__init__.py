"""thermofrac: phase-field fracture in thermo-poroelastic media.

Quasi-static 2D simulator for pressurized, non-isothermal cracks with a
built-in analytic oracle (Sneddon-Lowengrub / Tran) for quantitative
verification of crack opening displacement, crack growth and energies.
"""

from .params import (
    ConfigError,
    Geometry,
    MaterialParams,
    ModelParams,
    ScenarioLoads,
    derive_lame,
    parse_config,
    serialize_config,
)
from .thermal import c_theta, lambda_theta
from .analytic import AnalyticCase, cod_analytic_2d, cod_analytic_3d, max_width_series

__version__ = "0.1.0"

__all__ = [
    "AnalyticCase",
    "ConfigError",
    "Geometry",
    "MaterialParams",
    "ModelParams",
    "ScenarioLoads",
    "c_theta",
    "cod_analytic_2d",
    "cod_analytic_3d",
    "derive_lame",
    "lambda_theta",
    "max_width_series",
    "parse_config",
    "serialize_config",
]
