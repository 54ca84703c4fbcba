"""System and algorithm configuration.

All physical quantities are stored in linear units (Watts, meters); dB/dBm
inputs are converted once at load time.  Config files are flat ``key = value``
text so they stay diffable and parser-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# Geometry of the simulated deployment (meters, surface-local frame).
BS_POSITION = (-10.0, -5.0, 10.0)
USER_REGION_CENTER = (0.0, -10.0, 0.0)
USER_REGION_EDGE = 40.0


class ConfigError(ValueError):
    """Raised when a config file fails to parse or violates an invariant."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watts(x_dbm: float) -> float:
    return 10.0 ** (x_dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class SystemConfig:
    """Physical scenario parameters.  Immutable after construction."""

    carrier_frequency: float = 3e9      # Hz
    num_bs_antennas: int = 8            # M
    num_elements: int = 8               # N
    num_users: int = 4                  # J
    num_paths: int = 2                  # L, shared by all links
    ref_gain: float = 1e-3              # channel power gain at 1 m, linear
    pathloss_exponent: float = 2.2
    max_power: float = 1.0              # Watts
    noise_power: float = 1e-12          # Watts, same for every user
    region_side_lambda: float = 2.5     # A in wavelength multiples
    min_distance_lambda: float = 0.5    # D0 in wavelength multiples
    bs_position: tuple = BS_POSITION
    user_region_center: tuple = USER_REGION_CENTER
    user_region_edge: float = USER_REGION_EDGE
    user_weights: tuple | None = None   # None -> inverse expected-gain weights

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def region_side(self) -> float:
        """Side length A of the square element region, meters."""
        return self.region_side_lambda * self.wavelength

    @property
    def min_distance(self) -> float:
        """Minimum pairwise element distance D0, meters."""
        return self.min_distance_lambda * self.wavelength

    def validate(self) -> "SystemConfig":
        if min(self.num_bs_antennas, self.num_elements,
               self.num_users, self.num_paths) < 1:
            raise ConfigError("M, N, J, L must all be >= 1")
        for key, val in (("freq_hz", self.carrier_frequency),
                         ("region_side_lambda", self.region_side_lambda),
                         ("d0_lambda", self.min_distance_lambda),
                         ("pmax", self.max_power),
                         ("noise", self.noise_power),
                         ("beta0", self.ref_gain)):
            if val <= 0:
                raise ConfigError(f"{key} must be positive")
        # D0-feasible packing inside the square region.
        cap = math.floor(self.region_side_lambda / self.min_distance_lambda + 1) ** 2
        if self.num_elements > cap:
            raise ConfigError(
                f"N={self.num_elements} elements cannot honor the minimum "
                f"distance inside the region (capacity {cap})")
        if self.user_weights is not None:
            w = np.asarray(self.user_weights, dtype=float)
            if w.shape != (self.num_users,):
                raise ConfigError("user_weights length must equal J")
            if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ConfigError("user_weights must be positive and sum to 1")
        return self


@dataclass(frozen=True)
class AlgorithmConfig:
    """Penalty schedules, tolerances, and iteration caps."""

    initial_penalty: float = 1e-4       # eta1
    sca_penalty: float = 1e-4           # eta2
    ms_penalty: float = 1e-4            # eta3, binary-amplitude penalty weight
    initial_smoothing: float = 1.0      # rho
    penalty_growth: float = 10.0        # omega_eta, > 1
    smoothing_decay: float = 0.1        # omega_rho, in (0,1)
    initial_step: float = 10.0          # tau_bar
    step_shrink: float = 0.5            # omega_tau, in (0,1)
    armijo_delta: float = 1e-3          # delta, in (0,1)
    inner_tol: float = 1e-6             # eps1
    ao_tol: float = 1e-6                # eps2
    rank_tol: float = 1e-7              # eps3
    max_inner: int = 100                # i_max
    rng_seed: int = 0

    def validate(self) -> "AlgorithmConfig":
        checks = [
            ("eta1", self.initial_penalty > 0),
            ("eta2", self.sca_penalty > 0),
            ("eta3", self.ms_penalty > 0),
            ("rho", self.initial_smoothing > 0),
            ("omega_eta", self.penalty_growth > 1),
            ("smoothing_decay", 0 < self.smoothing_decay < 1),
            ("tau_bar", self.initial_step > 0),
            ("omega_tau", 0 < self.step_shrink < 1),
            ("delta", 0 < self.armijo_delta < 1),
            ("eps1", self.inner_tol > 0),
            ("eps2", self.ao_tol > 0),
            ("eps3", self.rank_tol > 0),
            ("i_max", self.max_inner >= 1),
        ]
        for key, ok in checks:
            if not ok:
                if key == "smoothing_decay":
                    raise ConfigError("smoothing_decay out of (0,1)")
                raise ConfigError(f"{key} out of range")
        return self


# File keys and how they map onto the dataclasses.  dB/dBm keys are
# converted to linear units by the loader.
_SYSTEM_KEYS = {
    "freq_hz": ("carrier_frequency", float),
    "M": ("num_bs_antennas", int),
    "N": ("num_elements", int),
    "J": ("num_users", int),
    "L": ("num_paths", int),
    "alpha0": ("pathloss_exponent", float),
    "region_side_lambda": ("region_side_lambda", float),
    "d0_lambda": ("min_distance_lambda", float),
}
_SYSTEM_DB_KEYS = {
    "beta0_db": ("ref_gain", db_to_linear),
    "pmax_dbm": ("max_power", dbm_to_watts),
    "noise_dbm": ("noise_power", dbm_to_watts),
}
_ALG_KEYS = {
    "eta1": ("initial_penalty", float),
    "eta2": ("sca_penalty", float),
    "eta3": ("ms_penalty", float),
    "rho": ("initial_smoothing", float),
    "omega_eta": ("penalty_growth", float),
    "omega_rho": ("smoothing_decay", float),
    "omega_tau": ("step_shrink", float),
    "tau_bar": ("initial_step", float),
    "delta": ("armijo_delta", float),
    "eps1": ("inner_tol", float),
    "eps2": ("ao_tol", float),
    "eps3": ("rank_tol", float),
    "i_max": ("max_inner", int),
    "seed": ("rng_seed", int),
}

KNOWN_KEYS = set(_SYSTEM_KEYS) | set(_SYSTEM_DB_KEYS) | set(_ALG_KEYS)


def parse_config_text(text: str) -> tuple[SystemConfig, AlgorithmConfig]:
    sys_kw: dict = {}
    alg_kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        try:
            if key in _SYSTEM_KEYS:
                name, conv = _SYSTEM_KEYS[key]
                sys_kw[name] = conv(float(value)) if conv is int else conv(value)
            elif key in _SYSTEM_DB_KEYS:
                name, conv = _SYSTEM_DB_KEYS[key]
                sys_kw[name] = conv(float(value))
            else:
                name, conv = _ALG_KEYS[key]
                alg_kw[name] = conv(float(value)) if conv is int else conv(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for '{key}': {value}") from exc
    return SystemConfig(**sys_kw).validate(), AlgorithmConfig(**alg_kw).validate()


def load_config(path) -> tuple[SystemConfig, AlgorithmConfig]:
    """Load configs from a ``key = value`` text file; defaults fill the gaps."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def dump_config(cfg: SystemConfig, alg: AlgorithmConfig) -> str:
    """Serialize back to the file format (inverse of :func:`load_config`)."""
    lines = [
        f"freq_hz = {cfg.carrier_frequency!r}",
        f"M = {cfg.num_bs_antennas}",
        f"N = {cfg.num_elements}",
        f"J = {cfg.num_users}",
        f"L = {cfg.num_paths}",
        f"beta0_db = {10.0 * math.log10(cfg.ref_gain)!r}",
        f"alpha0 = {cfg.pathloss_exponent!r}",
        f"pmax_dbm = {10.0 * math.log10(cfg.max_power / 1e-3)!r}",
        f"noise_dbm = {10.0 * math.log10(cfg.noise_power / 1e-3)!r}",
        f"region_side_lambda = {cfg.region_side_lambda!r}",
        f"d0_lambda = {cfg.min_distance_lambda!r}",
        f"eta1 = {alg.initial_penalty!r}",
        f"eta2 = {alg.sca_penalty!r}",
        f"eta3 = {alg.ms_penalty!r}",
        f"rho = {alg.initial_smoothing!r}",
        f"omega_eta = {alg.penalty_growth!r}",
        f"omega_rho = {alg.smoothing_decay!r}",
        f"omega_tau = {alg.step_shrink!r}",
        f"tau_bar = {alg.initial_step!r}",
        f"delta = {alg.armijo_delta!r}",
        f"eps1 = {alg.inner_tol!r}",
        f"eps2 = {alg.ao_tol!r}",
        f"eps3 = {alg.rank_tol!r}",
        f"i_max = {alg.max_inner}",
        f"seed = {alg.rng_seed}",
    ]
    return "\n".join(lines) + "\n"


def default_weights(expected_user_gains) -> np.ndarray:
    """Fairness weights, inversely proportional to expected channel gains."""
    gains = np.asarray(expected_user_gains, dtype=float)
    if np.any(gains <= 0):
        raise ValueError("expected user gains must be positive")
    w = 1.0 / gains
    return w / w.sum()


def with_overrides(cfg: SystemConfig, **kw) -> SystemConfig:
    return replace(cfg, **kw).validate()
