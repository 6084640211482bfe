"""Scenario configuration, 2-D geometry and MIMO-OFDM channel synthesis.

Angles follow one convention everywhere in the package: a bearing is
measured from the array broadside (global +y axis for the BS, whose array
lies along the x axis), positive towards +x.  With that reference the
half-wavelength ULA response is ``exp(j*pi*(i - (n-1)/2)*sin(angle))`` and
the visible region is ``[-pi/2, pi/2]``.  The UE frame is the global frame
rotated by the orientation offset, so every UE-side angle is shifted by
``-ue_orientation``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import ConfigError, DegenerateGeometryError

SPEED_OF_LIGHT = 299_792_458.0
MIN_DISTANCE = 1e-9

DEFAULT_TARGETS = ((-10.0, 15.0), (5.0, 15.0), (0.0, 17.0))
DEFAULT_RCS_TARGET = 100.0
DEFAULT_RCS_UE_MONOSTATIC = 10.0
RCS_GAIN_MODELS = ("sqrt", "linear")


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** (value_dbm / 10.0) * 1e-3


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def wrap_angle(angle):
    """Wrap to the half-open interval (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete description of one experiment, stored in SI units.

    ``power_budget`` is in W, ``noise_figure`` is linear and ``noise_psd`` is
    in W/Hz; the dBm/dB forms only exist at the document boundary
    (:func:`load_config`).
    """

    n_tx_bs: int = 16
    n_rx_ue: int = 16
    n_targets: int = 3
    p_bs: tuple = (0.0, 0.0)
    p_ue: tuple = (-5.0, 20.0)
    p_targets: tuple = DEFAULT_TARGETS
    power_budget: float = dbm_to_watt(-20.0)
    carrier_freq: float = 28e9
    bandwidth: float = 120e6
    n_subcarriers: int = 1024
    noise_figure: float = db_to_linear(10.0)
    noise_psd: float = dbm_to_watt(-173.855)
    n_slots: int = 16
    n_pilots_per_slot: int = 100
    clock_bias: float = 1e-6
    ue_orientation: float = 110.0 * math.pi / 180.0
    rcs_bp: tuple = (DEFAULT_RCS_TARGET,) * 3
    rcs_ms: tuple = (DEFAULT_RCS_UE_MONOSTATIC,) + (DEFAULT_RCS_TARGET,) * 3
    rng_seed: int = 0
    rcs_gain: str = "sqrt"
    array_reference: str = "first"

    def __post_init__(self):
        # normalise containers so instances hash and compare by value
        object.__setattr__(self, "p_bs", _point(self.p_bs, "p_bs"))
        object.__setattr__(self, "p_ue", _point(self.p_ue, "p_ue"))
        object.__setattr__(
            self, "p_targets", tuple(_point(p, "p_targets") for p in self.p_targets)
        )
        object.__setattr__(self, "rcs_bp", tuple(float(v) for v in self.rcs_bp))
        object.__setattr__(self, "rcs_ms", tuple(float(v) for v in self.rcs_ms))
        self.validate()

    def validate(self) -> None:
        K = self.n_targets
        if K < 1:
            raise ConfigError("K ≥ 1 required (n_targets must be at least 1)", "n_targets")
        if self.n_tx_bs < 1:
            raise ConfigError("n_tx_bs must be ≥ 1", "n_tx_bs")
        if self.n_rx_ue < 1:
            raise ConfigError("n_rx_ue must be ≥ 1", "n_rx_ue")
        if len(self.p_targets) != K:
            raise ConfigError(
                f"p_targets has {len(self.p_targets)} entries, n_targets is {K}", "p_targets"
            )
        if len(self.rcs_bp) != K:
            raise ConfigError(f"rcs_bp needs K = {K} entries", "rcs_bp")
        if len(self.rcs_ms) != K + 1:
            raise ConfigError(f"rcs_ms needs K + 1 = {K + 1} entries", "rcs_ms")
        if min(self.rcs_bp + self.rcs_ms) <= 0:
            raise ConfigError("all RCS values must be > 0", "rcs_bp" if min(self.rcs_bp) <= 0 else "rcs_ms")
        if not self.power_budget > 0:
            raise ConfigError("power_budget must be > 0", "power_budget")
        if self.n_subcarriers < 2:
            raise ConfigError("n_subcarriers (M) must be ≥ 2", "n_subcarriers")
        if self.n_slots < 2 * K + 2:
            raise ConfigError(
                f"n_slots (L) must be ≥ 2K+2 = {2 * K + 2}", "n_slots"
            )
        if self.n_pilots_per_slot < 1:
            raise ConfigError("n_pilots_per_slot must be ≥ 1", "n_pilots_per_slot")
        for name in ("carrier_freq", "bandwidth", "noise_figure", "noise_psd"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0", name)
        if self.rcs_gain not in RCS_GAIN_MODELS:
            raise ConfigError(f"rcs_gain must be one of {RCS_GAIN_MODELS}", "rcs_gain")
        if self.array_reference not in ARRAY_REFERENCES:
            raise ConfigError(f"array_reference must be one of {ARRAY_REFERENCES}", "array_reference")
        if self.clock_bias < 0:
            raise ConfigError("clock_bias must be ≥ 0", "clock_bias")

    # derived quantities -------------------------------------------------
    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.n_subcarriers

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def noise_power(self) -> float:
        """Per-subcarrier noise power F * N0 * Δf (W)."""
        return self.noise_figure * self.noise_psd * self.subcarrier_spacing

    @property
    def n_observations(self) -> int:
        """Repetitions N of each beam in the Slepian-Bangs sum.

        Beam ``f_l`` is sent on the P pilot symbols of slot ``l``, so summing
        over slots and symbols gives ``P * F F^H``: the slot count is already
        inside the covariance and N equals P.
        """
        return self.n_pilots_per_slot

    @property
    def power_per_subcarrier(self) -> float:
        return self.power_budget / self.n_subcarriers

    def positions(self) -> np.ndarray:
        """Scatterer positions for k = 0..K, where index 0 is the UE."""
        return np.array((self.p_ue,) + self.p_targets, dtype=float)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def with_targets(self, n_targets: int) -> "ScenarioConfig":
        """Default-style scenario with the first ``n_targets`` reference targets."""
        if n_targets > len(DEFAULT_TARGETS):
            raise ConfigError(
                f"only {len(DEFAULT_TARGETS)} default target positions exist", "n_targets"
            )
        return self.replace(
            n_targets=n_targets,
            p_targets=DEFAULT_TARGETS[:n_targets],
            rcs_bp=(DEFAULT_RCS_TARGET,) * n_targets,
            rcs_ms=(DEFAULT_RCS_UE_MONOSTATIC,) + (DEFAULT_RCS_TARGET,) * n_targets,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["p_bs"] = list(self.p_bs)
        d["p_ue"] = list(self.p_ue)
        d["p_targets"] = [list(p) for p in self.p_targets]
        d["rcs_bp"] = list(self.rcs_bp)
        d["rcs_ms"] = list(self.rcs_ms)
        return d

    def scenario_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _point(p, name):
    try:
        x, y = (float(v) for v in p)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: positions must be 2-element arrays", name) from None
    return (x, y)


# document fields carried in dB units at the boundary
_DB_FIELDS = {
    "power_budget": dbm_to_watt,
    "noise_figure": db_to_linear,
    "noise_psd": dbm_to_watt,
}
_INT_FIELDS = {
    "n_tx_bs", "n_rx_ue", "n_targets", "n_subcarriers", "n_slots",
    "n_pilots_per_slot", "rng_seed",
}


def load_config(text: str) -> ScenarioConfig:
    """Parse a flat TOML key-value document into a validated config.

    Keys are the :class:`ScenarioConfig` field names.  ``power_budget`` and
    ``noise_psd`` are given in dBm and dBm/Hz, ``noise_figure`` in dB; every
    other value is SI.  Omitted keys take the default scenario values.  When
    ``n_targets`` is given without positions, the first K default targets
    are used (and likewise for the RCS lists).
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc

    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    values = {}
    for key, raw in doc.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}", key)
        if isinstance(raw, dict):
            raise ConfigError(f"{key}: nested tables are not allowed", key)
        if key in _DB_FIELDS:
            raw = _DB_FIELDS[key](float(raw))
        elif key in _INT_FIELDS:
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigError(f"{key} must be an integer", key)
        values[key] = raw

    K = values.get("n_targets", len(values["p_targets"]) if "p_targets" in values else 3)
    if K < 1:
        raise ConfigError("K ≥ 1 required (n_targets must be at least 1)", "n_targets")
    values["n_targets"] = K
    if "p_targets" not in values:
        if K > len(DEFAULT_TARGETS):
            raise ConfigError(f"p_targets required when n_targets > {len(DEFAULT_TARGETS)}", "p_targets")
        values["p_targets"] = DEFAULT_TARGETS[:K]
    values.setdefault("rcs_bp", (DEFAULT_RCS_TARGET,) * K)
    values.setdefault("rcs_ms", (DEFAULT_RCS_UE_MONOSTATIC,) + (DEFAULT_RCS_TARGET,) * K)
    try:
        return ScenarioConfig(**values)
    except TypeError as exc:  # pragma: no cover - defensive
        raise ConfigError(str(exc)) from exc


def load_config_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return load_config(fh.read())


# ---------------------------------------------------------------------------
# array responses


ARRAY_REFERENCES = ("centered", "first")


def _element_index(n: int, reference: str = "centered") -> np.ndarray:
    if reference == "centered":
        return np.arange(n) - (n - 1) / 2.0
    if reference == "first":
        return np.arange(n, dtype=float)
    raise ConfigError(f"unknown array reference {reference!r}", "array_reference")


def steering_vector(angle: float, n: int, reference: str = "centered") -> np.ndarray:
    """Half-wavelength ULA response.

    ``reference="centered"`` puts the phase origin at the array centre,
    ``"first"`` at element 0.
    """
    idx = _element_index(n, reference)
    return np.exp(1j * np.pi * idx * np.sin(angle))


def steering_derivative(angle: float, n: int, reference: str = "centered") -> np.ndarray:
    """Analytic derivative of :func:`steering_vector` with respect to the angle."""
    idx = _element_index(n, reference)
    return 1j * np.pi * idx * np.cos(angle) * steering_vector(angle, n, reference)


def steering_matrix(angles: Sequence[float], n: int, reference: str = "centered") -> np.ndarray:
    """Stack steering vectors column-wise, shape ``(n, len(angles))``."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    idx = _element_index(n, reference)[:, None]
    return np.exp(1j * np.pi * idx * np.sin(angles)[None, :])


# ---------------------------------------------------------------------------
# geometry


def bearing(d) -> np.ndarray:
    """Broadside-referenced bearing of displacement(s) ``d`` (shape (..., 2))."""
    d = np.asarray(d, dtype=float)
    return np.arctan2(d[..., 0], d[..., 1])


def bearing_gradient(d) -> np.ndarray:
    """Gradient of :func:`bearing` with respect to the displacement."""
    d = np.asarray(d, dtype=float)
    r2 = np.sum(d * d, axis=-1, keepdims=True)
    return np.stack([d[..., 1], -d[..., 0]], axis=-1) / r2


@dataclass(frozen=True)
class ChannelParamSet:
    """Channel-domain parameters for k = 0..K (index 0 is the LOS / UE path)."""

    aod: np.ndarray
    aoa: np.ndarray
    delay_bp: np.ndarray
    delay_ms: np.ndarray
    gain_bp: np.ndarray
    gain_ms: np.ndarray
    phase_bp: np.ndarray = field(repr=False)
    phase_ms: np.ndarray = field(repr=False)

    @property
    def n_paths(self) -> int:
        return len(self.aod)

    def with_gains(self, gain_bp=None, gain_ms=None) -> "ChannelParamSet":
        return dataclasses.replace(
            self,
            gain_bp=self.gain_bp if gain_bp is None else np.asarray(gain_bp, dtype=complex),
            gain_ms=self.gain_ms if gain_ms is None else np.asarray(gain_ms, dtype=complex),
        )


def draw_phases(seed: int, link: int, count: int) -> np.ndarray:
    """Uniform phases on [-pi, pi], one independent stream per (link, path).

    Each path gets its own child of the scenario seed, so appending targets
    never changes the phases of earlier paths.
    """
    out = np.empty(count)
    for k in range(count):
        ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(link), k))
        out[k] = np.random.Generator(np.random.PCG64(ss)).uniform(-np.pi, np.pi)
    return out


def check_geometry(cfg: ScenarioConfig) -> None:
    pts = np.vstack([np.asarray(cfg.p_bs), cfg.positions()])
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < MIN_DISTANCE:
                raise DegenerateGeometryError(
                    f"points {i} and {j} coincide (distance < {MIN_DISTANCE} m)"
                )


def rcs_amplitude(cfg: ScenarioConfig):
    """Amplitude factors of the radar cross sections for (bistatic, monostatic) paths.

    ``"sqrt"`` follows the radar equation (received amplitude grows with the
    square root of the cross section); ``"linear"`` uses the cross section
    itself as an amplitude factor.
    """
    bp = np.asarray(cfg.rcs_bp, dtype=float)
    ms = np.asarray(cfg.rcs_ms, dtype=float)
    if cfg.rcs_gain == "sqrt":
        return np.sqrt(bp), np.sqrt(ms)
    return bp, ms


def derive_channel_params(cfg: ScenarioConfig) -> ChannelParamSet:
    """Map the scenario geometry to per-path angles, delays and gains."""
    check_geometry(cfg)
    K = cfg.n_targets
    c = SPEED_OF_LIGHT
    lam = cfg.wavelength
    p_b = np.asarray(cfg.p_bs)
    p_u = np.asarray(cfg.p_ue)
    p_t = np.asarray(cfg.p_targets, dtype=float).reshape(K, 2)
    pts = cfg.positions()

    aod = wrap_angle(bearing(pts - p_b))
    sources = np.vstack([p_b[None, :], p_t])
    aoa = wrap_angle(bearing(sources - p_u) - cfg.ue_orientation)

    d_bu = np.linalg.norm(p_b - p_u)
    d_bt = np.linalg.norm(p_t - p_b, axis=1)
    d_tu = np.linalg.norm(p_t - p_u, axis=1)
    delay_bp = np.concatenate([[d_bu], d_bt + d_tu]) / c + cfg.clock_bias
    delay_ms = 2.0 * np.concatenate([[d_bu], d_bt]) / c

    phase_bp = draw_phases(cfg.rng_seed, 0, K + 1)
    phase_ms = draw_phases(cfg.rng_seed, 1, K + 1)
    mag_bp = np.empty(K + 1)
    mag_bp[0] = lam / (4 * np.pi * d_bu)
    amp_bp, amp_ms = rcs_amplitude(cfg)
    mag_bp[1:] = amp_bp * lam / ((4 * np.pi) ** 1.5 * d_tu * d_bt)
    d_ms = np.concatenate([[d_bu], d_bt])
    mag_ms = amp_ms * lam / ((4 * np.pi) ** 1.5 * d_ms ** 2)

    return ChannelParamSet(
        aod=aod,
        aoa=aoa,
        delay_bp=delay_bp,
        delay_ms=delay_ms,
        gain_bp=mag_bp * np.exp(1j * phase_bp),
        gain_ms=mag_ms * np.exp(1j * phase_ms),
        phase_bp=phase_bp,
        phase_ms=phase_ms,
    )


def _check_subcarrier(cfg, m):
    if not 1 <= m <= cfg.n_subcarriers:
        raise ValueError(f"subcarrier index must be in 1..{cfg.n_subcarriers}, got {m}")


def channel_matrix_bp(params: ChannelParamSet, cfg: ScenarioConfig, m: int) -> np.ndarray:
    """BS-to-UE channel on subcarrier ``m`` (1-based), shape ``(N_U, N_B)``."""
    _check_subcarrier(cfg, m)
    a_u = steering_matrix(params.aoa, cfg.n_rx_ue, cfg.array_reference)
    a_b = steering_matrix(params.aod, cfg.n_tx_bs, cfg.array_reference)
    w = params.gain_bp * np.exp(-2j * np.pi * m * cfg.subcarrier_spacing * params.delay_bp)
    return (a_u * w[None, :]) @ a_b.conj().T


def channel_matrix_ms(params: ChannelParamSet, cfg: ScenarioConfig, m: int) -> np.ndarray:
    """Round-trip BS channel on subcarrier ``m`` (1-based), shape ``(N_B, N_B)``."""
    _check_subcarrier(cfg, m)
    a_b = steering_matrix(params.aod, cfg.n_tx_bs, cfg.array_reference)
    w = params.gain_ms * np.exp(-2j * np.pi * m * cfg.subcarrier_spacing * params.delay_ms)
    return (a_b * w[None, :]) @ a_b.conj().T
