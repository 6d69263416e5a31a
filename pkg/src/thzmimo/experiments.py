"""Seeded Monte-Carlo sweeps and result tables."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from . import beamforming as bfm
from .channel import generate_channel
from .config import (PROFILES, ConfigError, GmmAngleParams, PulseShape, SystemConfig)
from .estimation import (BeamspaceEstimate, EstimationError, bcrlb, extract_dominant_angles, genie_gamma,
                         gsomp_estimate, hbg_sr_estimate, mmv_ls_estimate, nmse_metric, reconstruct_channel,
                         sbl_per_subcarrier_estimate)
from .frontend import make_pilot_frame, quantization_params, simulate_received_pilots

log = logging.getLogger(__name__)

KINDS = ("nmse_vs_snr", "ber_vs_snr", "se_vs_snr", "adc_sweep", "gain_profile", "psf_compare")
ESTIMATORS = ("hbg_sr", "sbl_per_subcarrier", "mmv_ls", "gsomp")
BEAMFORMERS = ("ttd", "flat", "optimal_digital")
CSV_HEADER = ["experiment", "method", "snr_db", "metric", "value", "trials", "stderr", "failures"]
TRIAL_ERRORS = (EstimationError, np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class ExperimentSpec:
    """What to sweep and how often.

    ``adc_bits`` is only used by ``adc_sweep`` and ``psf_kinds`` only by
    ``psf_compare``; ``gain_sines`` lists the steering sines of
    ``gain_profile``.
    """

    kind: str = "nmse_vs_snr"
    snr_grid: tuple = (0.0, 5.0, 10.0, 15.0)
    trials: int = 10
    estimators: tuple = ("hbg_sr", "sbl_per_subcarrier", "mmv_ls")
    beamformers: tuple = ("ttd", "flat")
    config: SystemConfig = field(default_factory=SystemConfig)
    seed: int = 0
    adc_bits: tuple = (1, 2, 3, math.inf)
    psf_kinds: tuple = ("rrc", "rect")
    gain_sines: tuple = (-0.9, -0.5, 0.3, 0.7, 1.0)
    genie: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"experiment.kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.trials) < 1:
            raise ConfigError("experiment.trials must be >= 1")
        if self.kind != "gain_profile" and len(self.snr_grid) == 0:
            raise ConfigError("experiment.snr_grid must not be empty")
        for e in self.estimators:
            if e not in ESTIMATORS:
                raise ConfigError(f"experiment.estimators: unknown estimator {e!r}")
        for b in self.beamformers:
            if b not in BEAMFORMERS:
                raise ConfigError(f"experiment.beamformers: unknown beamformer {b!r}")
        for b in self.adc_bits:
            quantization_params(b)
        for p in self.psf_kinds:
            PulseShape(kind=p)

    def replace(self, **changes: Any) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    method: str
    snr_db: float
    metric: str
    value: float
    trials: int
    stderr: float
    failures: int = 0


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def lookup(self, method: str, metric: str, snr_db: Optional[float] = None) -> list:
        return [r for r in self.rows if r.method == method and r.metric == metric
                and (snr_db is None or r.snr_db == snr_db)]

    def series(self, method: str, metric: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows = sorted(self.lookup(method, metric), key=lambda r: r.snr_db)
        return (np.array([r.snr_db for r in rows]), np.array([r.value for r in rows]),
                np.array([r.stderr for r in rows]))


# --- configuration files -----------------------------------------------------------------

_SYSTEM_FIELDS = {f.name: f for f in dataclasses.fields(SystemConfig)}
_SPEC_FIELDS = ("kind", "snr_grid", "snr", "trials", "estimators", "beamformers", "seed", "adc_bits",
                "psf_kinds", "gain_sines", "genie")


def parse_snr_range(text: str) -> tuple:
    """``"min:step:max"`` (inclusive) or a comma list of dB values."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"snr range must be 'min:step:max', got {text!r}")
        lo, step, hi = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ConfigError(f"invalid snr range {text!r}")
        n = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return tuple(float(lo + i * step) for i in range(n))
    return tuple(float(p) for p in text.split(",") if p.strip())


def parse_bits(value) -> float:
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity", ".inf", "∞"):
        return math.inf
    b = float(value)
    if not math.isinf(b):
        if not b.is_integer():
            raise ConfigError(f"adc bits must be integers or inf, got {value!r}")
        return int(b)
    return b


def _as_tuple(name: str, value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    raise ConfigError(f"{name} must be a list")


def _system_from_mapping(data: dict, profile: str) -> SystemConfig:
    if profile not in PROFILES:
        raise ConfigError(f"profile must be one of {sorted(PROFILES)}, got {profile!r}")
    kwargs = {}
    for key, value in data.items():
        if key not in _SYSTEM_FIELDS:
            raise ConfigError(f"system: unknown field {key!r}")
        try:
            if key == "psf":
                if not isinstance(value, dict):
                    raise ConfigError("system.psf must be a mapping")
                value = PulseShape(**value)
            elif key in ("gmm_aoa", "gmm_aod"):
                if not isinstance(value, dict):
                    raise ConfigError(f"system.{key} must be a mapping")
                value = GmmAngleParams(**value)
            elif key == "adc_bits":
                value = parse_bits(value)
            elif key in ("normalize_channel", "on_grid"):
                if not isinstance(value, bool):
                    raise ConfigError(f"system.{key} must be a boolean")
            elif isinstance(_SYSTEM_FIELDS[key].default, bool):
                value = bool(value)
            elif isinstance(_SYSTEM_FIELDS[key].default, int):
                if isinstance(value, bool) or not float(value).is_integer():
                    raise ConfigError(f"system.{key} must be an integer")
                value = int(value)
            else:
                value = float(value)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"system.{key}: invalid value {value!r} ({exc})") from exc
        kwargs[key] = value
    return PROFILES[profile](**kwargs)


def _spec_from_mapping(data: dict, config: SystemConfig) -> ExperimentSpec:
    kwargs: dict = {"config": config}
    for key, value in data.items():
        if key not in _SPEC_FIELDS:
            raise ConfigError(f"experiment: unknown field {key!r}")
        try:
            if key == "snr":
                kwargs["snr_grid"] = parse_snr_range(value)
            elif key == "snr_grid":
                kwargs["snr_grid"] = tuple(float(v) for v in _as_tuple(key, value))
            elif key in ("trials", "seed"):
                if isinstance(value, bool) or not float(value).is_integer():
                    raise ConfigError(f"experiment.{key} must be an integer")
                kwargs[key] = int(value)
            elif key == "adc_bits":
                kwargs[key] = tuple(parse_bits(v) for v in _as_tuple(key, value))
            elif key == "gain_sines":
                kwargs[key] = tuple(float(v) for v in _as_tuple(key, value))
            elif key == "genie":
                kwargs[key] = bool(value)
            elif key == "kind":
                kwargs[key] = str(value)
            else:
                kwargs[key] = tuple(str(v) for v in _as_tuple(key, value))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"experiment.{key}: invalid value {value!r} ({exc})") from exc
    return ExperimentSpec(**kwargs)


def load_config_text(text: str, profile: Optional[str] = None) -> tuple[SystemConfig, ExperimentSpec]:
    """Parse YAML configuration text; ``profile`` overrides the file's base profile."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"configuration is not valid YAML: {exc}") from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - {"profile", "system", "experiment"}
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {', '.join(sorted(unknown))}")
    system = data.get("system") or {}
    experiment = data.get("experiment") or {}
    if not isinstance(system, dict) or not isinstance(experiment, dict):
        raise ConfigError("'system' and 'experiment' must be mappings")
    config = _system_from_mapping(system, profile or str(data.get("profile", "paper")))
    return config, _spec_from_mapping(experiment, config)


def parse_config(path, profile: Optional[str] = None) -> tuple[SystemConfig, ExperimentSpec]:
    """Read a YAML configuration file; an empty file gives the full-scale defaults."""
    with open(path) as fh:
        return load_config_text(fh.read(), profile)


def _plain(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def serialize_config(config: SystemConfig, spec: Optional[ExperimentSpec] = None) -> str:
    """YAML text that :func:`load_config_text` maps back to the same objects."""
    system = {}
    for f in dataclasses.fields(SystemConfig):
        v = getattr(config, f.name)
        if dataclasses.is_dataclass(v):
            v = dataclasses.asdict(v)
        system[f.name] = _plain(v)
    doc: dict = {"profile": "paper", "system": system}
    if spec is not None:
        doc["experiment"] = {k: _plain(getattr(spec, k)) for k in _SPEC_FIELDS if k not in ("snr",)}
    return yaml.safe_dump(doc, sort_keys=False)


# --- experiment drivers -------------------------------------------------------------------

def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ``(trial, stream)``; stream 0 draws the channel."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, stream)))


def _noise_config(config: SystemConfig, snr_db: float, **changes) -> SystemConfig:
    return config.replace(noise_power=10 ** (-snr_db / 10), **changes)


def run_estimator(name: str, obs):
    """Return ``(channel_estimate (U, K, n_bs, n_u), beamspace_estimate_or_None)``."""
    cfg = obs.config
    if name == "mmv_ls":
        # under-determined at pilot budgets below n_bs * n_t; expected in sweeps
        with warnings.catch_warnings():
            warnings.filterwarnings("ignore", "sensing matrix is column-rank deficient", RuntimeWarning)
            return mmv_ls_estimate(obs).channels(cfg), None
    if name == "hbg_sr":
        est = hbg_sr_estimate(obs)
    elif name == "sbl_per_subcarrier":
        est = sbl_per_subcarrier_estimate(obs)
    elif name == "gsomp":
        n, K = obs.Y.shape
        # stop once the residual drops to the expected noise energy
        tol = K * float(np.real(np.trace(obs.R)))
        paths = cfg.num_users * (cfg.n_los + cfg.n_nlos * cfg.n_ray)
        est = gsomp_estimate(obs, max_support=min(n, 2 * paths), residual_tol=tol)
    else:
        raise ValueError(f"unknown estimator {name!r}")
    return reconstruct_channel(est.H_b, obs.A_B, obs.A_T, cfg.num_users), est


class _Accumulator:
    def __init__(self):
        self.values: dict = {}
        self.failures: dict = {}
        self.order: list = []

    def _key(self, method, snr, metric):
        key = (method, snr, metric)
        if key not in self.values:
            self.values[key] = {}
            self.failures[key] = 0
            self.order.append(key)
        return key

    def add(self, method, snr, metric, trial, value):
        self.values[self._key(method, snr, metric)][trial] = float(value)

    def fail(self, method, snr, metric):
        self.failures[self._key(method, snr, metric)] += 1

    def table(self, experiment: str) -> ResultTable:
        rows = []
        for key in self.order:
            method, snr, metric = key
            vals = np.array([v for _, v in sorted(self.values[key].items())])
            n = vals.size
            mean = float(np.mean(vals)) if n else math.nan
            se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
            rows.append(ResultRow(experiment, method, snr, metric, mean, n, se, self.failures[key]))
        return ResultTable(rows)


def _observe(config: SystemConfig, seed: int, trial: int, snr_index: int, snr_db: float, **changes):
    base = trial_rng(seed, trial, 0)
    cfg = _noise_config(config, snr_db, **changes)
    channel = generate_channel(cfg, base)
    frame = make_pilot_frame(cfg, base)
    rng = trial_rng(seed, trial, 1 + snr_index)
    qp = quantization_params(cfg.adc_bits) if cfg.quantized else None
    obs = simulate_received_pilots(channel, frame, cfg, qp, rng)
    return cfg, channel, obs, rng


def _nmse_sweep(spec: ExperimentSpec, acc: _Accumulator, label=lambda e: e, bound: bool = True, **changes):
    for t in range(spec.trials):
        for i, snr in enumerate(spec.snr_grid):
            cfg, channel, obs, _ = _observe(spec.config, spec.seed, t, i, snr, **changes)
            energy = float(np.sum(np.abs(channel.H) ** 2))
            for name in spec.estimators:
                try:
                    H_hat, _ = run_estimator(name, obs)
                    err = float(np.sum(np.abs(H_hat - channel.H) ** 2))
                except TRIAL_ERRORS as exc:
                    log.warning("trial %d, %s at %g dB failed: %s", t, name, snr, exc)
                    acc.fail(label(name), snr, "nmse")
                    acc.fail(label(name), snr, "mse")
                    continue
                acc.add(label(name), snr, "nmse", t, err / energy)
                acc.add(label(name), snr, "mse", t, err)
            if bound and channel.beamspace is not None:
                b = bcrlb(obs, genie_gamma(channel.beamspace))
                acc.add(label("bcrlb"), snr, "mse", t, b)
                acc.add(label("bcrlb"), snr, "nmse", t, b / energy)


def _link_sweep(spec: ExperimentSpec, acc: _Accumulator, metrics=("se", "ber")):
    # SE and BER share the link; both are recorded so one sweep serves either plot
    for t in range(spec.trials):
        for i, snr in enumerate(spec.snr_grid):
            cfg, channel, obs, rng = _observe(spec.config, spec.seed, t, i, snr)
            qp = quantization_params(cfg.adc_bits)
            csi = []
            for name in spec.estimators:
                try:
                    H_hat, est = run_estimator(name, obs)
                    source = est if est is not None else _ls_beamspace(H_hat, obs)
                    csi.append((name, H_hat, extract_dominant_angles(source, cfg)))
                except TRIAL_ERRORS as exc:
                    log.warning("trial %d, %s at %g dB failed: %s", t, name, snr, exc)
                    for bf in spec.beamformers:
                        for metric in metrics:
                            acc.fail(f"{bf}+{name}", snr, metric)
            if spec.genie and channel.beamspace is not None:
                csi.append(("genie", channel.H, extract_dominant_angles(channel.beamspace, cfg)))
            for name, H_hat, angles in csi:
                for bf in spec.beamformers:
                    method = f"{bf}+{name}"
                    try:
                        if bf == "optimal_digital":
                            link = bfm.digital_link(channel, H_hat, cfg, cfg.noise_power)
                        else:
                            S = 1 if bf == "flat" else None
                            former = bfm.build_ttd_hybrid_combiner(angles, H_hat, cfg, S=S)
                            link = bfm.hybrid_link(channel, former, cfg, cfg.noise_power, qp)
                        values = {}
                        if "se" in metrics:
                            values["se"] = bfm.spectral_efficiency(link.H_eff, link.noise_cov, link.n_s)
                        if "ber" in metrics:
                            values["ber"] = bfm.ber_simulation(link, cfg.num_data, rng)
                    except TRIAL_ERRORS as exc:
                        log.warning("trial %d, %s at %g dB failed: %s", t, method, snr, exc)
                        for metric in metrics:
                            acc.fail(method, snr, metric)
                        continue
                    for metric, value in values.items():
                        acc.add(method, snr, metric, t, value)


def _ls_beamspace(H_hat: np.ndarray, obs) -> np.ndarray:
    """Project an unstructured estimate onto the dictionaries for angle selection."""
    cfg = obs.config
    out = []
    for u in range(cfg.num_users):
        blk = np.einsum("kag,ukan,knt->utgk", obs.A_B.conj(), H_hat[u:u + 1], obs.A_T)[0]
        out.append(blk.reshape(cfg.grid_tu * cfg.grid_bs, -1))
    return np.concatenate(out, axis=0)


def _gain_profile(spec: ExperimentSpec, acc: _Accumulator):
    cfg = spec.config
    sines = list(spec.gain_sines)
    profiles = {}
    for bf, S in (("ttd", None), ("flat", 1)):
        prof = bfm.gain_profile(sines, cfg, S=S)
        profiles[bf] = prof
        for j, psi in enumerate(sines):
            acc.add(f"{bf}@{psi:+.4f}", math.nan, "min_gain", 0, prof[j].min())
            acc.add(f"{bf}@{psi:+.4f}", math.nan, "mean_gain", 0, prof[j].mean())
    return {"gain_profile": (sines, profiles)}


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Run every trial of ``spec`` and aggregate means and standard errors.

    The table is a pure function of the spec (including its seed).
    """
    acc = _Accumulator()
    extras: dict = {}
    if spec.kind == "nmse_vs_snr":
        _nmse_sweep(spec, acc)
    elif spec.kind == "adc_sweep":
        for bits in spec.adc_bits:
            tag = "inf" if math.isinf(bits) else str(int(bits))
            _nmse_sweep(spec, acc, label=lambda e, tag=tag: f"{e}@b={tag}", bound=False, adc_bits=bits)
    elif spec.kind == "psf_compare":
        for kind in spec.psf_kinds:
            psf = dataclasses.replace(spec.config.psf, kind=kind)
            _nmse_sweep(spec, acc, label=lambda e, kind=kind: f"{e}@{kind}", bound=False, psf=psf)
    elif spec.kind in ("se_vs_snr", "ber_vs_snr"):
        _link_sweep(spec, acc)
    elif spec.kind == "gain_profile":
        extras = _gain_profile(spec, acc)
    table = acc.table(spec.kind)
    table.extras = extras
    return table


def _fmt(x) -> str:
    return f"{float(x):.8e}"


def write_results_csv(table: ResultTable, path) -> None:
    """Write the table with every number in 9-significant-digit scientific notation.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_rows(table, path)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(table, fh)


def _write_rows(table: ResultTable, fh) -> None:
    wr = csv.writer(fh, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    for r in table.rows:
        wr.writerow([r.experiment, r.method, _fmt(r.snr_db), r.metric, _fmt(r.value), r.trials,
                     _fmt(r.stderr), r.failures])


def read_results_csv(path) -> ResultTable:
    rows = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {rd.fieldnames}")
        for rec in rd:
            rows.append(ResultRow(rec["experiment"], rec["method"], float(rec["snr_db"]), rec["metric"],
                                  float(rec["value"]), int(rec["trials"]), float(rec["stderr"]),
                                  int(rec["failures"])))
    return ResultTable(rows)
