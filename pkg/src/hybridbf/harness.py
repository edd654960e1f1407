"""
Monte Carlo experiment driver.

An experiment is described by an INI-style file with typed keys (see
:data:`CONFIG_SCHEMA` and ``configs/*.ini``). Unknown sections or keys are
errors.

SNR convention: ``SNR = P / sigma^2`` with ``P = K`` (unit power per
stream); sweeping SNR therefore sweeps the noise power.

Seeding: trial ``t`` uses seed ``root_seed + t``. Channels are drawn from
``default_rng(seed)`` and the beam-sweep / CSI-training noise from
``default_rng([seed, 1])``, so every scheme and every sweep value of a trial
sees the same channels (and A-MM and TSH the same sweep outcome).
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .amm import AmmConfig, AngleRange, beam_sweep, build_codebook, run_amm, solve_beam_nulling
from .array_channel import SystemConfig, generate_channels, steering_matrix
from .baselines import run_fully_digital, run_tsh
from .beamformers import AnalogBeamformer, DigitalBeamformer, check_hybrid, check_power
from .exceptions import ConfigError
from .metrics import RateReport, beam_pattern, nulling_depth, sum_rate
from .pwmmse import VARIANTS, run_pwmmse

__all__ = [
    "SCHEMES",
    "CONFIG_SCHEMA",
    "ExperimentConfig",
    "SchemeOutcome",
    "ResultRow",
    "RunResult",
    "load_config",
    "parse_config",
    "run_scheme",
    "evaluate_trial",
    "run_experiment",
    "cmd_sumrate",
    "cmd_beampattern",
    "cmd_convergence",
]

log = logging.getLogger(__name__)

SCHEMES = ("pwmmse", "amm", "fully_digital", "tsh")
SWEEP_AXES = ("snr_db", "n_bs")
FLOAT_FMT = "{:.12g}"


# ---------------------------------------------------------------------------
# configuration

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_or_inf(text: str) -> float:
    return math.inf if text.strip().lower() in ("inf", "infinity") else float(text)


def _optional(parse):
    def inner(text: str):
        return None if text.strip().lower() in ("", "match", "none") else parse(text)
    return inner


def _list(parse):
    def inner(text: str):
        return [parse(item) for item in text.replace("\n", ",").split(",") if item.strip()]
    return inner


def _range_deg(text: str):
    lo, hi = text.split(":")
    return (float(lo), float(hi))


# section -> key -> (parser, default, ExperimentConfig attribute)
CONFIG_SCHEMA = {
    "system": {
        "n_bs": (int, None, "n_bs"),
        "n_rf": (int, None, "n_rf"),
        "snr_db": (float, 10.0, "snr_db"),
    },
    "channel": {
        "n_paths": (int, 3, "n_paths"),
        "los_var": (float, 1.0, "los_var"),
        "nlos_var": (float, 0.01, "nlos_var"),
    },
    "pwmmse": {
        "variant": (str, "derived-optimal", "variant"),
        "max_iters": (int, 20, "pwmmse_max_iters"),
        "rel_tol": (float, 1e-4, "pwmmse_rel_tol"),
    },
    "amm": {
        "lambda": (float, 1000.0, "amm_lambda"),
        "samples_per_range": (int, 10, "amm_samples"),
        "max_iters": (int, 50, "amm_max_iters"),
        "rel_tol": (float, 1e-6, "amm_rel_tol"),
    },
    "sweeping": {
        "codebook_size": (_optional(int), None, "codebook_size"),
        "sweep_snr_db": (_optional(_float_or_inf), None, "sweep_snr_db"),
        "eff_csi_snr_db": (_optional(_float_or_inf), None, "eff_csi_snr_db"),
    },
    "experiment": {
        "schemes": (_list(str.strip), list(SCHEMES), "schemes"),
        "trials": (int, 200, "trials"),
        "root_seed": (int, 0, "root_seed"),
        "output_path": (str, "results.csv", "output_path"),
        "record_timing": (_bool, False, "record_timing"),
        "workers": (int, 1, "workers"),
    },
    "sweep": {
        "axis": (str, "snr_db", "sweep_axis"),
        "values": (_list(float), None, "sweep_values"),
    },
    "beampattern": {
        "ranges_deg": (_list(_range_deg), None, "ranges_deg"),
        "users": (_list(int), [0], "pattern_users"),
        "grid_size": (int, 20000, "grid_size"),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment (mirrors the INI sections)."""

    n_bs: int
    n_rf: int
    snr_db: float = 10.0
    n_paths: int = 3
    los_var: float = 1.0
    nlos_var: float = 0.01
    variant: str = "derived-optimal"
    pwmmse_max_iters: int = 20
    pwmmse_rel_tol: float = 1e-4
    amm_lambda: float = 1000.0
    amm_samples: int = 10
    amm_max_iters: int = 50
    amm_rel_tol: float = 1e-6
    codebook_size: Optional[int] = None
    sweep_snr_db: Optional[float] = None
    eff_csi_snr_db: Optional[float] = None
    schemes: tuple = SCHEMES
    trials: int = 200
    root_seed: int = 0
    output_path: str = "results.csv"
    record_timing: bool = False
    workers: int = 1
    sweep_axis: str = "snr_db"
    sweep_values: Optional[tuple] = None
    ranges_deg: Optional[tuple] = None
    pattern_users: tuple = (0,)
    grid_size: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.sweep_values is None:
            default = self.snr_db if self.sweep_axis == "snr_db" else self.n_bs
            object.__setattr__(self, "sweep_values", (default,))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        object.__setattr__(self, "pattern_users", tuple(self.pattern_users))
        if self.ranges_deg is not None:
            object.__setattr__(self, "ranges_deg", tuple(tuple(r) for r in self.ranges_deg))
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not self.schemes:
            raise ConfigError("no schemes selected")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown:
            raise ConfigError(f"unknown schemes {unknown}; known: {list(SCHEMES)}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
        if not self.sweep_values:
            raise ConfigError("sweep values are empty")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        # fail early on impossible geometries
        for value in self.sweep_values:
            self.system(value)
        self.amm_config()

    def system(self, sweep_value=None) -> SystemConfig:
        n_bs, snr_db = self.n_bs, self.snr_db
        if sweep_value is not None:
            if self.sweep_axis == "n_bs":
                if float(sweep_value) != int(sweep_value):
                    raise ConfigError(f"n_bs sweep value {sweep_value} is not an integer")
                n_bs = int(sweep_value)
            else:
                snr_db = float(sweep_value)
        try:
            return SystemConfig.from_snr_db(n_bs, self.n_rf, snr_db)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def amm_config(self) -> AmmConfig:
        try:
            return AmmConfig(lam=self.amm_lambda, samples_per_range=self.amm_samples,
                             max_iters=self.amm_max_iters, rel_tol=self.amm_rel_tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def operating_snr_db(self, sweep_value=None) -> float:
        if sweep_value is not None and self.sweep_axis == "snr_db":
            return float(sweep_value)
        return self.snr_db

    def angle_ranges(self) -> list:
        if self.ranges_deg is None:
            raise ConfigError("[beampattern] ranges_deg is required")
        if len(self.ranges_deg) != self.n_rf:
            raise ConfigError(f"need {self.n_rf} ranges, got {len(self.ranges_deg)}")
        return [AngleRange.from_degrees(lo, hi) for lo, hi in self.ranges_deg]


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kwargs = {}
    for section in parser.sections():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        schema = CONFIG_SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            parse, _, attr = schema[key]
            try:
                kwargs[attr] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    for required in ("n_bs", "n_rf"):
        if required not in kwargs:
            raise ConfigError(f"[system] {required} is required")
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# running schemes

@dataclass
class SchemeOutcome:
    scheme: str
    report: RateReport
    precoder: np.ndarray
    analog: Optional[AnalogBeamformer] = None
    digital: Optional[DigitalBeamformer] = None
    iterations: int = 0
    traces: list = field(default_factory=list)


def _db_to_linear(db):
    return math.inf if db is None or math.isinf(db) else 10 ** (db / 10)


def _trial_seed(config: ExperimentConfig, trial: int) -> int:
    return config.root_seed + trial


def run_scheme(scheme: str, channels, cfg: SystemConfig, config: ExperimentConfig,
               trial_seed: int, operating_snr_db: float) -> SchemeOutcome:
    """Run one scheme on one channel draw and verify its output constraints."""
    noise_seed = [trial_seed, 1]
    sweep_snr = _db_to_linear(operating_snr_db if config.sweep_snr_db is None
                              else config.sweep_snr_db)
    csi_snr = _db_to_linear(operating_snr_db if config.eff_csi_snr_db is None
                            else config.eff_csi_snr_db)
    if scheme == "pwmmse":
        analog, digital, state = run_pwmmse(channels, cfg, config.pwmmse_max_iters,
                                            config.pwmmse_rel_tol, config.variant)
        check_hybrid(analog, digital)
        out = SchemeOutcome(scheme, sum_rate(channels, analog, digital, cfg),
                            analog.matrix @ digital.matrix, analog, digital,
                            state.iterations, [state.objective_trace])
    elif scheme == "fully_digital":
        fd, state = run_fully_digital(channels, cfg, config.pwmmse_max_iters,
                                      config.pwmmse_rel_tol, config.variant)
        check_power(fd.matrix, cfg.k_users)
        out = SchemeOutcome(scheme, sum_rate(channels, None, fd, cfg), fd.matrix,
                            iterations=state.iterations, traces=[state.objective_trace])
    elif scheme == "amm":
        codebook = build_codebook(cfg, config.codebook_size)
        sweep = beam_sweep(channels, codebook, cfg, sweep_snr, noise_seed)
        analog, traces = run_amm(sweep.codewords, sweep.ranges, cfg, config.amm_config())
        check_hybrid(analog)
        out = SchemeOutcome(scheme, sum_rate(channels, analog, None, cfg), analog.matrix,
                            analog, None, max(len(t) for t in traces), traces)
    elif scheme == "tsh":
        codebook = build_codebook(cfg, config.codebook_size)
        analog, digital = run_tsh(channels, codebook, cfg, sweep_snr, csi_snr, noise_seed)
        check_hybrid(analog, digital)
        out = SchemeOutcome(scheme, sum_rate(channels, analog, digital, cfg),
                            analog.matrix @ digital.matrix, analog, digital, 0)
    else:
        raise ConfigError(f"unknown scheme {scheme!r}")
    return out


def evaluate_trial(config: ExperimentConfig, sweep_value, trial: int) -> dict:
    """
    Run every configured scheme on the channels of one (sweep value, trial).

    Returns ``{scheme: (SchemeOutcome | Exception, wall_seconds)}``.
    """
    cfg = config.system(sweep_value)
    seed = _trial_seed(config, trial)
    channels = generate_channels(seed, cfg, config.los_var, config.nlos_var, config.n_paths)
    snr_db = config.operating_snr_db(sweep_value)
    results = {}
    for scheme in config.schemes:
        start = time.perf_counter()
        try:
            outcome = run_scheme(scheme, channels, cfg, config, seed, snr_db)
        except Exception as exc:  # recorded as a failed row
            log.error("scheme %s failed at sweep=%s trial=%d: %s", scheme, sweep_value, trial, exc)
            outcome = exc
        results[scheme] = (outcome, time.perf_counter() - start)
    return results


# ---------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class ResultRow:
    scheme: str
    sweep_value: float
    trial: int
    sum_rate: float
    per_user_rates: tuple
    iterations: int
    wall_time: float

    @property
    def failed(self) -> bool:
        return self.iterations < 0 or math.isnan(self.sum_rate)


def _fmt(x) -> str:
    return FLOAT_FMT.format(x)


@dataclass
class RunResult:
    k_users: int
    rows: list = field(default_factory=list)

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.rows)

    def header(self) -> list:
        return (["scheme", "sweep_value", "trial", "sum_rate"]
                + [f"rate_user_{k + 1}" for k in range(self.k_users)] + ["iters", "wall_ms"])

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            for r in self.rows:
                writer.writerow([r.scheme, _fmt(r.sweep_value), r.trial, _fmt(r.sum_rate)]
                                + [_fmt(x) for x in r.per_user_rates]
                                + [r.iterations, _fmt(1e3 * r.wall_time)])

    @classmethod
    def read_csv(cls, path) -> "RunResult":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            k = sum(1 for h in header if h.startswith("rate_user_"))
            result = cls(k_users=k)
            for rec in reader:
                result.rows.append(ResultRow(
                    scheme=rec[0], sweep_value=float(rec[1]), trial=int(rec[2]),
                    sum_rate=float(rec[3]), per_user_rates=tuple(float(x) for x in rec[4:4 + k]),
                    iterations=int(rec[4 + k]), wall_time=float(rec[5 + k]) / 1e3))
        return result

    def mean_sum_rate(self, scheme: str, sweep_value) -> float:
        vals = [r.sum_rate for r in self.rows
                if r.scheme == scheme and r.sweep_value == sweep_value and not r.failed]
        return float(np.mean(vals)) if vals else math.nan

    def summary(self) -> list:
        """``(scheme, sweep_value, mean_sum_rate, n_ok, n_failed)`` in row order."""
        seen, out = [], []
        for r in self.rows:
            key = (r.scheme, r.sweep_value)
            if key not in seen:
                seen.append(key)
        for scheme, value in seen:
            group = [r for r in self.rows if r.scheme == scheme and r.sweep_value == value]
            n_fail = sum(r.failed for r in group)
            out.append((scheme, value, self.mean_sum_rate(scheme, value),
                        len(group) - n_fail, n_fail))
        return out

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["scheme", "sweep_value", "mean_sum_rate", "n_ok", "n_failed"])
            for scheme, value, mean, n_ok, n_fail in self.summary():
                writer.writerow([scheme, _fmt(value), _fmt(mean), n_ok, n_fail])


def _rows_for(config: ExperimentConfig, sweep_value, trial: int, results: dict, k: int):
    rows = []
    for scheme, (outcome, wall) in results.items():
        wall = wall if config.record_timing else 0.0
        if isinstance(outcome, Exception):
            rows.append(ResultRow(scheme, float(sweep_value), trial, math.nan,
                                  (math.nan,) * k, -1, wall))
        else:
            rows.append(ResultRow(scheme, float(sweep_value), trial, outcome.report.sum_rate,
                                  tuple(float(x) for x in outcome.report.per_user_rates),
                                  int(outcome.iterations), wall))
    return rows


def _trial_rows(args):
    config, sweep_value, trial = args
    results = evaluate_trial(config, sweep_value, trial)
    return _rows_for(config, sweep_value, trial, results, config.n_rf)


def run_experiment(config: ExperimentConfig,
                   inspect: Callable[[str, float, int, object], None] | None = None,
                   workers: int | None = None) -> RunResult:
    """
    Run every scheme on every (sweep value, trial) pair.

    `inspect`, if given, is called in-process as
    ``inspect(scheme, sweep_value, trial, outcome)`` for every scheme run,
    where `outcome` is a :class:`SchemeOutcome` or the raised exception; it
    forces serial execution. Rows come back sorted by scheme, sweep value
    and trial in configuration order, whatever the execution order.
    """
    workers = config.workers if workers is None else workers
    tasks = [(config, v, t) for v in config.sweep_values for t in range(config.trials)]
    rows = []
    if inspect is not None or workers <= 1:
        for _, value, trial in tasks:
            results = evaluate_trial(config, value, trial)
            if inspect is not None:
                for scheme, (outcome, _) in results.items():
                    inspect(scheme, value, trial, outcome)
            rows.extend(_rows_for(config, value, trial, results, config.n_rf))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_trial_rows, tasks, chunksize=max(1, len(tasks) // (4 * workers))):
                rows.extend(chunk)
    scheme_pos = {s: i for i, s in enumerate(config.schemes)}
    value_pos = {float(v): i for i, v in enumerate(config.sweep_values)}
    rows.sort(key=lambda r: (scheme_pos[r.scheme], value_pos[r.sweep_value], r.trial))
    return RunResult(k_users=config.n_rf, rows=rows)


# ---------------------------------------------------------------------------
# subcommands

def cmd_sumrate(config: ExperimentConfig, out_dir, axis: str | None = None) -> RunResult:
    """Sum-rate sweep; writes the per-trial CSV and a ``*_summary.csv``."""
    if axis is not None and config.sweep_axis != axis:
        raise ConfigError(f"this command sweeps {axis!r} but the config sweeps "
                          f"{config.sweep_axis!r}")
    result = run_experiment(config)
    out = Path(out_dir) / config.output_path
    result.write_csv(out)
    result.write_summary_csv(out.with_name(out.stem + "_summary.csv"))
    return result


def _write_pattern(path, pattern) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["aod_sine", "aod_deg", "gain_db"])
        for s, g in zip(pattern.angles, pattern.gains_db):
            writer.writerow([_fmt(s), _fmt(np.degrees(np.arcsin(s))), _fmt(g)])


def cmd_beampattern(config: ExperimentConfig, out_dir,
                    inspect: Callable[[int, str, np.ndarray], None] | None = None) -> dict:
    """
    Beam nulling demo on fixed angle ranges (``[beampattern] ranges_deg``).

    Every subarray starts from a quiescent beam steered at the center of its
    user's range and runs the MM iterations. For each user in
    ``[beampattern] users`` the A-MM and quiescent patterns are written to
    ``beampattern_user<k>_{amm,quiescent}.csv``; ``nulling_depths.csv`` lists
    the peak-normalised maximum gain of both beams inside every range.
    `inspect`, if given, is called as ``inspect(user, beam, vector)``.

    Returns ``{(user, beam, range_index): depth_db}``.
    """
    if "amm" not in config.schemes:
        raise ConfigError("beampattern needs the amm scheme enabled")
    cfg = config.system()
    ranges = config.angle_ranges()
    quiescent = steering_matrix([r.center for r in ranges], cfg.n_s).T
    amm_cfg = config.amm_config()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    depths = {}
    for user in config.pattern_users:
        f, _ = solve_beam_nulling(quiescent[user], user, ranges, cfg, amm_cfg)
        for beam, vec in (("amm", f), ("quiescent", quiescent[user])):
            if inspect is not None:
                inspect(user, beam, vec)
            pattern = beam_pattern(vec, config.grid_size, cfg, user_index=user)
            _write_pattern(out_dir / f"beampattern_user{user}_{beam}.csv", pattern)
            for j, r in enumerate(ranges):
                depths[(user, beam, j)] = nulling_depth(pattern, r)
    with open(out_dir / "nulling_depths.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user", "beam", "range_index", "lo_deg", "hi_deg", "max_gain_db"])
        for (user, beam, j), depth in depths.items():
            lo, hi = config.ranges_deg[j]
            writer.writerow([user, beam, j, _fmt(lo), _fmt(hi), _fmt(depth)])
    return depths


def cmd_convergence(config: ExperimentConfig, out_dir) -> dict:
    """
    Objective traces of the iterative schemes on trial 0 at the first sweep
    value, written to ``convergence.csv``. Returns ``{series: trace}``.
    """
    wanted = [s for s in ("pwmmse", "amm") if s in config.schemes]
    if not wanted:
        raise ConfigError("convergence needs pwmmse or amm enabled")
    value = config.sweep_values[0]
    cfg = config.system(value)
    seed = _trial_seed(config, 0)
    channels = generate_channels(seed, cfg, config.los_var, config.nlos_var, config.n_paths)
    series = {}
    for scheme in wanted:
        outcome = run_scheme(scheme, channels, cfg, config, seed, config.operating_snr_db(value))
        if scheme == "pwmmse":
            series["pwmmse"] = outcome.traces[0]
        else:
            for q, trace in enumerate(outcome.traces):
                series[f"amm_user{q}"] = trace
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["series", "iteration", "objective"])
        for name, trace in series.items():
            for i, obj in enumerate(trace, start=1):
                writer.writerow([name, i, _fmt(obj)])
    return series


def with_overrides(config: ExperimentConfig, seed: int | None = None,
                   trials: int | None = None, workers: int | None = None) -> ExperimentConfig:
    changes = {}
    if seed is not None:
        changes["root_seed"] = seed
    if trials is not None:
        changes["trials"] = trials
    if workers is not None:
        changes["workers"] = workers
    return replace(config, **changes) if changes else config
