"""Physical/numerical parameters, scenario presets and the config file format.

All quantities are SI (pressures in Pa, times in s, temperatures in degrees
Celsius).  Parameter containers are frozen dataclasses and can be shared
freely across workers.
"""

import math
from dataclasses import dataclass, fields, replace

__all__ = [
    "ConfigError",
    "MaterialParams",
    "ModelParams",
    "ScenarioLoads",
    "Geometry",
    "derive_lame",
    "parse_config",
    "serialize_config",
    "resolve_active_set_c",
    "SCENARIO_PRESETS",
]


class ConfigError(ValueError):
    """Raised for unknown keys, unparsable values or violated invariants."""

    def __init__(self, message, key=None, line=None):
        loc = ""
        if key is not None:
            loc += f" (key '{key}'"
            loc += f", line {line})" if line is not None else ")"
        elif line is not None:
            loc += f" (line {line})"
        super().__init__(message + loc)
        self.key = key
        self.line = line


def derive_lame(E, nu):
    """Derive the Lame constants and the 2D bulk modulus.

    Parameters
    ----------
    E : float
        Young's modulus (Pa), E > 0.
    nu : float
        Poisson's ratio, 0 <= nu < 0.5.

    Returns
    -------
    (mu, lam, K_d) : tuple of float
        Shear modulus, first Lame parameter and the plane-strain bulk
        modulus K_d = (2/d) mu + lam with d = 2.
    """
    if E <= 0.0:
        raise ConfigError(f"Young's modulus must be positive, got {E}", key="material.E")
    if not 0.0 <= nu < 0.5:
        raise ConfigError(
            f"Poisson's ratio must satisfy 0 <= nu < 0.5, got {nu}", key="material.nu"
        )
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return mu, lam, mu + lam


@dataclass(frozen=True)
class MaterialParams:
    """Geomechanical constants of the thermo-poroelastic skeleton."""

    E: float = 1.5e10            # Young's modulus (Pa)
    nu: float = 0.15             # Poisson's ratio
    Gc: float = 1.0e10           # critical energy release rate (N/m)
    beta: float = 1.0e-5         # linear thermal expansion (1/C)
    kappa_theta: float = 1.0e-6  # thermal diffusivity (m^2/s)
    alpha_B: float = 0.0         # Biot coefficient
    alpha_theta: float = 0.0     # skeleton thermal dilation coefficient (1/C)

    def __post_init__(self):
        derive_lame(self.E, self.nu)  # validates E, nu
        if self.Gc <= 0.0:
            raise ConfigError(f"Gc must be positive, got {self.Gc}", key="material.Gc")
        if self.kappa_theta <= 0.0:
            raise ConfigError(
                f"kappa_theta must be positive, got {self.kappa_theta}",
                key="material.kappa_theta",
            )

    @property
    def mu(self):
        return derive_lame(self.E, self.nu)[0]

    @property
    def lam(self):
        return derive_lame(self.E, self.nu)[1]

    @property
    def K_d(self):
        return derive_lame(self.E, self.nu)[2]


@dataclass(frozen=True)
class ModelParams:
    """Numerical knobs: regularization, tolerances, stepping, refinement."""

    eps: float = 6.25            # phase-field regularization length (m)
    kappa_reg: float = 1.0e-10   # residual stiffness
    tol_phi: float = 0.9         # refinement threshold on phi
    tol_newton: float = 1.0e-10  # relative Newton residual tolerance
    active_set_c: float | None = None  # None -> 100 * Gc / eps
    dt: float = 1.0              # time step (s)
    n_steps: int = 3
    gamma_T: float = 2.0 / math.pi
    split: str = "none"          # 'none' or 'voldev'
    max_level: int = 6
    initial_level: int = 4
    max_newton: int = 50

    def __post_init__(self):
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}", key="model.eps")
        if not 0.0 < self.kappa_reg < 1.0:
            raise ConfigError(
                f"kappa_reg must lie in (0, 1), got {self.kappa_reg}", key="model.kappa_reg"
            )
        if not 0.0 < self.tol_phi < 1.0:
            raise ConfigError(
                f"tol_phi must lie in (0, 1), got {self.tol_phi}", key="model.tol_phi"
            )
        if self.gamma_T <= 0.0:
            raise ConfigError(
                f"gamma_T must be positive, got {self.gamma_T}", key="model.gamma_T"
            )
        if self.split not in ("none", "voldev"):
            raise ConfigError(
                f"split must be 'none' or 'voldev', got '{self.split}'", key="model.split"
            )
        if self.initial_level < 0 or self.max_level < self.initial_level:
            raise ConfigError(
                f"need 0 <= initial_level <= max_level, got "
                f"{self.initial_level}, {self.max_level}",
                key="model.max_level",
            )


@dataclass(frozen=True)
class ScenarioLoads:
    """Given pressure/temperature loading, both spatially constant."""

    p_bar: float = 1.0           # driving pressure (Pa); Case a: 1e-3 KPa
    p0: float = 0.0              # initial (far-field) pressure (Pa)
    theta: float = 0.0           # injected/apparent temperature (C)
    theta0: float = 0.0          # initial temperature (C)
    lambda_theta_mode: str = "off"   # 'off' | 'constant' | 'hagoort'
    lambda_theta_const: float = 0.0  # used when mode == 'constant'
    ramp_alpha: float | None = None  # None -> constant pressure; else p_n = alpha*(n+1)*p_bar

    def __post_init__(self):
        if self.lambda_theta_mode not in ("off", "constant", "hagoort"):
            raise ConfigError(
                f"lambda_theta_mode must be off|constant|hagoort, got "
                f"'{self.lambda_theta_mode}'",
                key="loads.lambda_theta_mode",
            )
        if self.lambda_theta_mode != "off" and self.theta > self.theta0:
            raise ConfigError(
                "thermal scenarios require theta <= theta0 (crack driving force "
                f"positivity), got theta={self.theta}, theta0={self.theta0}",
                key="loads.theta",
            )
        if self.ramp_alpha is None and self.p_bar - self.p0 < 0.0:
            raise ConfigError(
                f"effective pressure p_bar - p0 must be >= 0, got "
                f"{self.p_bar - self.p0}",
                key="loads.p_bar",
            )

    def pressure_at(self, step):
        """Pressure at time step `step` (1-based step number)."""
        if self.ramp_alpha is None:
            return self.p_bar
        return self.ramp_alpha * (step + 1) * self.p_bar


@dataclass(frozen=True)
class Geometry:
    """Square reservoir (0, 2a)^2 with a centered crack on the line y = a."""

    a: float = 100.0   # half-width of the domain (m)
    l0: float = 10.0   # half-length of the initial crack (m)

    def __post_init__(self):
        if not 0.0 < self.l0 < self.a:
            raise ConfigError(
                f"need 0 < l0 < a, got l0={self.l0}, a={self.a}", key="geometry.l0"
            )


def resolve_active_set_c(mat, model):
    """Constant c of the active-set rule; defaults to 100 * Gc / eps."""
    if model.active_set_c is not None:
        return model.active_set_c
    return 100.0 * mat.Gc / model.eps


def validate_eps_resolution(model, geom):
    """Check eps > h for the finest cells refinement can produce."""
    h_min = 2.0 * geom.a / 2 ** model.max_level
    if model.eps <= h_min:
        raise ConfigError(
            f"eps = {model.eps} must exceed the finest cell size "
            f"2a/2^max_level = {h_min}",
            key="model.eps",
        )


# ----------------------------------------------------------------------------
# Scenario presets (Cases a-e).  Values not listed fall back to the Case-a
# defaults of the dataclasses above.
# ----------------------------------------------------------------------------

SCENARIO_PRESETS = {
    # stationary pressurized crack, no thermal effects
    "case_a": {},
    # stationary, fixed decline constant
    "case_b": {
        "loads.lambda_theta_mode": "constant",
        "loads.lambda_theta_const": 1.0e-4,
        "loads.theta0": 100.0,
        "loads.theta": 70.0,
    },
    # one year of cooling at constant pressure, aperture grows, no propagation
    "case_c": {
        "loads.p_bar": 1.5834e7,
        "loads.p0": 1.213e7,
        "loads.theta0": 100.0,
        "loads.theta": 70.0,
        "loads.lambda_theta_mode": "hagoort",
        "model.dt": 86400.0,
        "model.n_steps": 365,
        "model.initial_level": 5,
        "model.max_level": 5,
        "model.eps": 9.375,
    },
    # crack growth driven by a 220 C temperature drop
    "case_d": {
        "material.Gc": 5.5e5,
        "loads.p_bar": 1.5834e7,
        "loads.p0": 1.213e7,
        "loads.theta0": 300.0,
        "loads.theta": 80.0,
        "loads.lambda_theta_mode": "hagoort",
        "model.dt": 86400.0,
        "model.n_steps": 140,
        "model.initial_level": 4,
        "model.max_level": 6,
        "model.eps": 6.25,
        "model.split": "voldev",
    },
    # crack growth driven by ramped pressure plus cooling
    "case_e": {
        "loads.p_bar": 1.5834e7,
        "loads.p0": 1.213e7,
        "loads.theta0": 100.0,
        "loads.theta": 70.0,
        "loads.lambda_theta_mode": "hagoort",
        "loads.ramp_alpha": 0.5,
        "model.dt": 60.0,
        "model.n_steps": 270,
        "model.initial_level": 4,
        "model.max_level": 6,
        "model.eps": 6.25,
        "model.split": "voldev",
    },
}

# key -> (dataclass field, parser)
_FLOAT_KEYS = {
    "material.E": ("E", "mat"),
    "material.nu": ("nu", "mat"),
    "material.Gc": ("Gc", "mat"),
    "material.beta": ("beta", "mat"),
    "material.kappa_theta": ("kappa_theta", "mat"),
    "material.alpha_B": ("alpha_B", "mat"),
    "material.alpha_theta": ("alpha_theta", "mat"),
    "model.eps": ("eps", "model"),
    "model.kappa_reg": ("kappa_reg", "model"),
    "model.tol_phi": ("tol_phi", "model"),
    "model.tol_newton": ("tol_newton", "model"),
    "model.dt": ("dt", "model"),
    "model.gamma_T": ("gamma_T", "model"),
    "loads.p_bar": ("p_bar", "loads"),
    "loads.p0": ("p0", "loads"),
    "loads.theta": ("theta", "loads"),
    "loads.theta0": ("theta0", "loads"),
    "loads.lambda_theta_const": ("lambda_theta_const", "loads"),
    "geometry.a": ("a", "geom"),
    "geometry.l0": ("l0", "geom"),
}
_INT_KEYS = {
    "model.n_steps": ("n_steps", "model"),
    "model.max_level": ("max_level", "model"),
    "model.initial_level": ("initial_level", "model"),
    "model.max_newton": ("max_newton", "model"),
}
_STR_KEYS = {
    "model.split": ("split", "model"),
    "loads.lambda_theta_mode": ("lambda_theta_mode", "loads"),
}
# nullable floats: the literal 'none' clears them
_OPT_FLOAT_KEYS = {
    "model.active_set_c": ("active_set_c", "model"),
    "loads.ramp_alpha": ("ramp_alpha", "loads"),
}


def _parse_value(key, raw, line_no):
    if key in _STR_KEYS:
        return raw
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"expected an integer, got '{raw}'", key=key, line=line_no)
    if key in _OPT_FLOAT_KEYS and raw.lower() == "none":
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got '{raw}'", key=key, line=line_no)


def parse_config(text):
    """Parse a configuration document into the four parameter sets.

    The format is UTF-8 text with one ``key = value`` pair per line and
    ``#`` comments.  A ``scenario = case_X`` line expands the named preset
    first; explicit keys always override preset values.  Unspecified keys
    take the Case-a defaults.

    Returns
    -------
    (MaterialParams, ModelParams, ScenarioLoads, Geometry)

    Raises
    ------
    ConfigError
        For unknown keys, unparsable values or violated invariants, with
        the key name and line number in the message.
    """
    assignments = {}   # key -> (value, line_no)
    scenario = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", line=line_no)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key == "scenario":
            if raw not in SCENARIO_PRESETS:
                raise ConfigError(
                    f"unknown scenario '{raw}' (expected one of "
                    f"{sorted(SCENARIO_PRESETS)})",
                    key="scenario",
                    line=line_no,
                )
            scenario = raw
            continue
        if key not in _FLOAT_KEYS and key not in _INT_KEYS \
                and key not in _STR_KEYS and key not in _OPT_FLOAT_KEYS:
            raise ConfigError("unknown key", key=key, line=line_no)
        assignments[key] = (_parse_value(key, raw, line_no), line_no)

    values = {}
    if scenario is not None:
        values.update(SCENARIO_PRESETS[scenario])
    values.update({k: v for k, (v, _) in assignments.items()})

    groups = {"mat": {}, "model": {}, "loads": {}, "geom": {}}
    for key, value in values.items():
        for table in (_FLOAT_KEYS, _INT_KEYS, _STR_KEYS, _OPT_FLOAT_KEYS):
            if key in table:
                field_name, group = table[key]
                groups[group][field_name] = value
                break

    try:
        mat = MaterialParams(**groups["mat"])
        model = ModelParams(**groups["model"])
        loads = ScenarioLoads(**groups["loads"])
        geom = Geometry(**groups["geom"])
    except ConfigError as err:
        line = assignments.get(err.key, (None, None))[1] if err.key else None
        if line is not None and err.line is None:
            raise ConfigError(str(err), line=line) from None
        raise
    validate_eps_resolution(model, geom)
    return mat, model, loads, geom


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(mat, model, loads, geom):
    """Render all parameters as config text; re-parsing is exact."""
    lines = []
    for table in (_FLOAT_KEYS, _INT_KEYS, _STR_KEYS, _OPT_FLOAT_KEYS):
        for key, (field_name, group) in table.items():
            obj = {"mat": mat, "model": model, "loads": loads, "geom": geom}[group]
            lines.append(f"{key} = {_fmt(getattr(obj, field_name))}")
    return "\n".join(sorted(lines)) + "\n"


def preset_params(name, **overrides):
    """Build the parameter set of a named scenario preset programmatically."""
    text = f"scenario = {name}\n"
    mat, model, loads, geom = parse_config(text)
    for key, val in overrides.items():
        for obj_name, obj in (("mat", mat), ("model", model), ("loads", loads), ("geom", geom)):
            if key in {f.name for f in fields(obj)}:
                if obj_name == "mat":
                    mat = replace(mat, **{key: val})
                elif obj_name == "model":
                    model = replace(model, **{key: val})
                elif obj_name == "loads":
                    loads = replace(loads, **{key: val})
                else:
                    geom = replace(geom, **{key: val})
                break
        else:
            raise ConfigError("unknown parameter", key=key)
    return mat, model, loads, geom
