"""

Scenario configuration (INI files)

"""

import logging
import math
import os
import re
from configparser import ConfigParser, Error as ConfigParserError
from copy import deepcopy
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from spheremimo import ConfigError, DomainError
from spheremimo.channel import JointAngularProfile, Polarization
from spheremimo.modes import mode_count, truncate

_log = logging.getLogger(__name__)

DEFAULT_SCENARIO = Path(__file__).parent / "resources" / "default_scenario.ini"

_SECTION_RE = re.compile(r"^\s*\[(?P<section>[^\]]+)\]")
_OPTION_RE = re.compile(r"^(?P<option>[^\s#;=:][^=:]*?)\s*[=:]")

# Marker for settings without default.
_REQUIRED = object()


class ScenarioConfig:
    """
    Scenario configuration. Essentially a flat mapping of ``section.option`` keys to raw string values,
    remembering the file and line each value came from.
    """

    def __init__(self):
        self._config = {}
        self._origins = {}
        self._sources = []

    @classmethod
    def _key(cls, key: Union[str, Sequence[str]]) -> str:
        """Normalize a key: make lower case and flatten sequences"""
        if not isinstance(key, str):
            key = ".".join(str(k) for k in key)
        return key.lower()

    def _set(self, key: Union[str, Sequence[str]], value: Any, origin: Tuple[Optional[str], Optional[int]] = None):
        key = self._key(key)
        self._config[key] = value
        self._origins[key] = origin or (None, None)

    def set(self, key: Union[str, Sequence[str]], value: Any) -> "ScenarioConfig":
        """Override a value (e.g. from a command line option)."""
        self._set(key, str(value), origin=("<override>", None))
        return self

    def get(self, key: Union[str, Sequence[str]], default=None) -> Any:
        """Get raw setting at given key"""
        return self._config.get(self._key(key), default)

    def __contains__(self, key) -> bool:
        return self._key(key) in self._config

    def origin(self, key: Union[str, Sequence[str]]) -> Tuple[Optional[str], Optional[int]]:
        """File path and line number where the value of `key` was defined."""
        return self._origins.get(self._key(key), (None, None))

    def error(self, key: Union[str, Sequence[str]], message: str) -> ConfigError:
        path, lineno = self.origin(key)
        return ConfigError(message, path=path, lineno=lineno, key=self._key(key))

    def load_ini_file(self, path: Union[str, Path]) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError("Failed to read scenario file: {e}".format(e=e), path=str(path)) from None
        cp = ConfigParser()
        try:
            cp.read_string(text, source=str(path))
        except ConfigParserError as e:
            raise ConfigError(str(e).splitlines()[0], path=str(path), lineno=getattr(e, "lineno", None)) from None
        self._sources.append(path)
        return self.load_config_parser(cp, path=str(path), lines=self._option_lines(text))

    @staticmethod
    def _option_lines(text: str) -> Dict[str, int]:
        """Line numbers of ``section.option`` definitions."""
        lines = {}
        section = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            match = _SECTION_RE.match(line)
            if match:
                section = match.group("section").strip()
                continue
            match = _OPTION_RE.match(line)
            if match and section:
                lines[ScenarioConfig._key((section, match.group("option").strip()))] = lineno
        return lines

    def load_config_parser(self, parser: ConfigParser, path: Optional[str] = None,
                           lines: Optional[Dict[str, int]] = None) -> "ScenarioConfig":
        lines = lines or {}
        for section in parser.sections():
            for option, value in parser.items(section=section):
                key = self._key((section, option))
                self._set(key=key, value=value, origin=(path, lines.get(key)))
        return self

    def dump(self) -> dict:
        return deepcopy(self._config)

    @property
    def sources(self) -> List[str]:
        return [str(s) for s in self._sources]

    def __repr__(self):
        return f"<{type(self).__name__} from {self.sources}>"

    def _raw(self, key: str, default: Any) -> Optional[str]:
        value = self.get(key)
        if value is None or str(value).strip() == "":
            if default is _REQUIRED:
                raise self.error(key, "Missing required setting.")
            return default
        return str(value).strip()

    def get_str(self, key: str, default: Any = None) -> Optional[str]:
        return self._raw(key, default)

    def get_float(self, key: str, default: Any = None) -> Optional[float]:
        value = self._raw(key, default)
        if value is None or not isinstance(value, str):
            return value
        try:
            result = float(value)
        except ValueError:
            raise self.error(key, "Expected a number, got {v!r}.".format(v=value)) from None
        if not math.isfinite(result):
            raise self.error(key, "Expected a finite number, got {v!r}.".format(v=value))
        return result

    def get_int(self, key: str, default: Any = None) -> Optional[int]:
        value = self._raw(key, default)
        if value is None or not isinstance(value, str):
            return value
        try:
            return int(value)
        except ValueError:
            raise self.error(key, "Expected an integer, got {v!r}.".format(v=value)) from None

    def get_float_list(self, key: str, default: Any = None) -> Optional[List[float]]:
        value = self._raw(key, default)
        if value is None or not isinstance(value, str):
            return value
        try:
            result = [float(v) for v in value.split(",") if v.strip()]
        except ValueError:
            raise self.error(key, "Expected a comma separated list of numbers, got {v!r}.".format(v=value)) from None
        if not result or not all(math.isfinite(v) for v in result):
            raise self.error(key, "Expected a non-empty list of finite numbers, got {v!r}.".format(v=value))
        return result


class ConfigLoader:

    @classmethod
    def config_locations(cls, path: Union[str, Path, None] = None) -> Iterator[Path]:
        """Scenario file candidates"""
        # From highest to lowest priority
        if path:
            yield Path(path)
        if "SPHEREMIMO_SCENARIO" in os.environ:
            yield Path(os.environ["SPHEREMIMO_SCENARIO"])
        yield Path.cwd() / "spheremimo-scenario.ini"

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> ScenarioConfig:
        """
        Load the bundled default scenario, overlaid with the first existing candidate file.
        An explicitly given path must exist.
        """
        config = ScenarioConfig().load_ini_file(DEFAULT_SCENARIO)
        if path and not Path(path).exists():
            raise ConfigError("Scenario file not found.", path=str(path))
        for candidate in cls.config_locations(path):
            _log.debug(f"Scenario file candidate: {candidate}")
            if candidate.exists():
                _log.info(f"Loading scenario from {candidate}")
                config.load_ini_file(candidate)
                break
        return config


# Known keys per section; anything else in a scenario file is rejected.
KNOWN_KEYS = {
    "scenario": ["seed", "output_dir"],
    "profile": [
        "tx_theta_mean_deg", "tx_phi_mean_deg", "rx_theta_mean_deg", "rx_phi_mean_deg",
        "tx_theta_spread_deg", "tx_phi_spread_deg", "rx_theta_spread_deg", "rx_phi_spread_deg",
        "rho", "polarization",
    ],
    "antenna": ["n_tx", "n_rx", "plane_side_wavelengths", "r0_wavelengths", "modes"],
    "currents": ["cells", "svd_tol", "gauss_points", "eta"],
    "optimizer": ["max_iter", "epsilon_fraction", "epsilon_floor", "trace_rhos"],
    "quadrature": ["n_theta", "n_phi"],
    "capacity": ["snr_db", "n_realizations", "n_rays"],
    "baseline": ["dipole_spacing_wavelengths"],
}


class Scenario:
    """
    Validated scenario: every physical parameter in typed form.
    Lengths are in wavelengths (λ = 1, k = 2π), angles in degrees.
    """

    wavelength = 1.0

    def __init__(self, **kwargs):
        for name, value in kwargs.items():
            setattr(self, name, value)

    def __repr__(self):
        return "<{c} rho={r} n_tx={t} n_rx={x} r0={r0:.6g}>".format(
            c=type(self).__name__, r=self.rho, t=self.n_tx, x=self.n_rx, r0=self.r0)

    @property
    def k(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def profile_mean_deg(self) -> List[float]:
        return [self.tx_theta_mean_deg, self.tx_phi_mean_deg, self.rx_theta_mean_deg, self.rx_phi_mean_deg]

    @property
    def profile_spreads_deg(self) -> List[float]:
        return [self.tx_theta_spread_deg, self.tx_phi_spread_deg, self.rx_theta_spread_deg, self.rx_phi_spread_deg]

    def profile(self, rho: Optional[float] = None) -> JointAngularProfile:
        return JointAngularProfile.from_degrees(
            self.profile_mean_deg, self.profile_spreads_deg, rho=self.rho if rho is None else rho,
            polarization=self.polarization,
        )

    def to_dict(self) -> dict:
        return {k: v for k, v in vars(self).items() if not k.startswith("_")}

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "Scenario":
        """Validate all settings, raising :py:class:`ConfigError` pointing at the offending line."""
        for key in cfg.dump():
            section, _, option = key.partition(".")
            if option not in KNOWN_KEYS.get(section, []):
                raise cfg.error(key, "Unknown setting.")

        def positive(key, getter=cfg.get_float, default=_REQUIRED):
            value = getter(key, default)
            if value is not None and value <= 0:
                raise cfg.error(key, "Must be positive, got {v!r}.".format(v=value))
            return value

        values = {
            "seed": cfg.get_int("scenario.seed", _REQUIRED),
            "output_dir": cfg.get_str("scenario.output_dir", "out"),
        }
        for side in ("tx", "rx"):
            theta = cfg.get_float(f"profile.{side}_theta_mean_deg", _REQUIRED)
            if not 0 <= theta <= 180:
                raise cfg.error(f"profile.{side}_theta_mean_deg", "Polar angle must be in [0, 180] degrees.")
            values[f"{side}_theta_mean_deg"] = theta
            values[f"{side}_phi_mean_deg"] = cfg.get_float(f"profile.{side}_phi_mean_deg", _REQUIRED)
            values[f"{side}_theta_spread_deg"] = positive(f"profile.{side}_theta_spread_deg")
            values[f"{side}_phi_spread_deg"] = positive(f"profile.{side}_phi_spread_deg")

        polarization = cfg.get_str("profile.polarization", "theta").lower()
        try:
            values["polarization"] = Polarization(polarization)
        except ValueError:
            raise cfg.error("profile.polarization", "Expected one of {p}, got {v!r}.".format(
                p=[p.value for p in Polarization], v=polarization)) from None

        values["rho"] = cls._check_rho(cfg, "profile.rho", [cfg.get_float("profile.rho", _REQUIRED)], values)[0]
        values["trace_rhos"] = cls._check_rho(
            cfg, "optimizer.trace_rhos", cfg.get_float_list("optimizer.trace_rhos", [values["rho"]]), values)

        values["n_tx"] = positive("antenna.n_tx", cfg.get_int)
        values["n_rx"] = positive("antenna.n_rx", cfg.get_int)
        values["plane_side"] = positive("antenna.plane_side_wavelengths")
        values["r0"] = positive("antenna.r0_wavelengths", default=values["plane_side"] / np.sqrt(2))
        try:
            trunc = truncate(2 * np.pi / cls.wavelength, values["r0"])
        except DomainError as e:
            raise cfg.error("antenna.r0_wavelengths", str(e)) from None
        for key, count in (("antenna.n_tx", values["n_tx"]), ("antenna.n_rx", values["n_rx"])):
            if count > trunc.J:
                raise cfg.error(key, "More antennas ({n}) than modes (J={j}).".format(n=count, j=trunc.J))
        modes = cfg.get_int("antenna.modes", None)
        if modes is not None and modes != mode_count(trunc.N):
            raise cfg.error("antenna.modes", "Given number of modes {m} does not match J={j} for r0={r:.6g}.".format(
                m=modes, j=trunc.J, r=values["r0"]))
        if values["plane_side"] / np.sqrt(2) > values["r0"] * (1 + 1e-12):
            raise cfg.error("antenna.plane_side_wavelengths", "Plane exceeds sphere: corner radius {c:.6g} > r0 = {r:.6g}."
                            .format(c=values["plane_side"] / np.sqrt(2), r=values["r0"]))

        values["cells"] = positive("currents.cells", cfg.get_int)
        if math.isqrt(values["cells"]) ** 2 != values["cells"]:
            raise cfg.error("currents.cells", "Total cell count must be a perfect square, got {c}.".format(
                c=values["cells"]))
        values["svd_tol"] = positive("currents.svd_tol")
        values["gauss_points"] = positive("currents.gauss_points", cfg.get_int)
        values["eta"] = positive("currents.eta")

        values["max_iter"] = positive("optimizer.max_iter", cfg.get_int)
        values["epsilon_fraction"] = positive("optimizer.epsilon_fraction")
        if values["epsilon_fraction"] >= 1:
            raise cfg.error("optimizer.epsilon_fraction", "Must be below 1.")
        values["epsilon_floor"] = cfg.get_float("optimizer.epsilon_floor", 1e-12)
        if values["epsilon_floor"] < 0:
            raise cfg.error("optimizer.epsilon_floor", "Must not be negative.")

        values["n_theta"] = positive("quadrature.n_theta", cfg.get_int)
        values["n_phi"] = positive("quadrature.n_phi", cfg.get_int)
        for key in ("quadrature.n_theta", "quadrature.n_phi"):
            if cfg.get_int(key) < 2:
                raise cfg.error(key, "At least 2 nodes required.")

        values["snr_db"] = cfg.get_float_list("capacity.snr_db", _REQUIRED)
        values["n_realizations"] = positive("capacity.n_realizations", cfg.get_int)
        values["n_rays"] = positive("capacity.n_rays", cfg.get_int)

        values["dipole_spacing"] = cfg.get_float("baseline.dipole_spacing_wavelengths", _REQUIRED)
        if values["dipole_spacing"] < 0:
            raise cfg.error("baseline.dipole_spacing_wavelengths", "Must not be negative.")
        extent = math.hypot((max(values["n_tx"], values["n_rx"]) - 1) * values["dipole_spacing"] / 2,
                            cls.wavelength / 4)
        if extent > values["r0"] * (1 + 1e-12):
            raise cfg.error("baseline.dipole_spacing_wavelengths",
                            "Dipole array exceeds sphere: extent {e:.6g} > r0 = {r:.6g}.".format(e=extent, r=values["r0"]))

        return cls(**values)

    @staticmethod
    def _check_rho(cfg: ScenarioConfig, key: str, rhos: List[float], values: dict) -> List[float]:
        for rho in rhos:
            try:
                JointAngularProfile.from_degrees(
                    [values["tx_theta_mean_deg"], values["tx_phi_mean_deg"],
                     values["rx_theta_mean_deg"], values["rx_phi_mean_deg"]],
                    [values["tx_theta_spread_deg"], values["tx_phi_spread_deg"],
                     values["rx_theta_spread_deg"], values["rx_phi_spread_deg"]],
                    rho=rho,
                )
            except DomainError as e:
                raise cfg.error(key, str(e)) from None
        return rhos


def load_scenario(path: Union[str, Path, None] = None, overrides: Optional[Dict[str, Any]] = None) -> Scenario:
    """Load and validate a scenario, with optional ``section.option`` overrides."""
    cfg = ConfigLoader.load(path)
    for key, value in (overrides or {}).items():
        cfg.set(key, value)
    return Scenario.from_config(cfg)
