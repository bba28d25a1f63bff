"""Monte Carlo experiment driver.

Each channel realization ``l`` owns ``RngStream(master_seed, l)``; the
channel, the source block and the noise are drawn from separate purposes of
that stream, so every precoder and SNR point sees the same draws. Trials may
run on a process pool but are always reduced in trial order, which keeps the
CSV output byte-identical for any worker count.
"""

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import bound as _bound
from .errors import ConfigError, ContractViolation
from .model import (
    ChannelRealization, PrecoderSet, RngStream, Scenario, empirical_sum_mse,
    mmse_receiver, sample_channel, sample_sources, sum_mse, transmit,
)
from .precoders import (
    amrt, full_power, mrt, mrt_optimized, nusvd_directions, optimize_gains, projected_gradient,
)
from .sdp import siso_precoder
from .two_user import two_user_optimal

__all__ = [
    "PRECODERS", "PRESETS", "CSV_HEADER", "ExperimentConfig", "ResultRow", "design",
    "run_experiment", "run_trials", "reproduce_figure", "power_allocation", "write_csv",
    "read_csv", "load_config", "config_from_dict", "parse_snr_range",
]

PRECODERS = ("none", "amrt", "gradient", "sdp", "mrt", "mrt_opt", "nusvd", "nusvd_opt",
             "two_user_closed")
CSV_HEADER = ("snr_db", "precoder", "sdr_db", "sdr_analytic_db", "stderr_db", "trials", "elapsed_ms")
POWER_CSV_HEADER = ("rho", "user", "mean_power", "trials")
BOUND_CSV_HEADER = ("snr_db", "sdr_opt_db", "sdr_opt_unnormalized_db", "trials")
CONFIG_SCHEMA_VERSION = 1

_DB = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """One Monte Carlo sweep: a scenario, an SNR grid and a set of precoders.

    SNR grid entries are either a common SNR in dB or one value per user.
    `empirical` switches on the M-symbol decoding path next to the exact
    analytic sum-MSE; `timing` fills the ``elapsed_ms`` column, which is
    otherwise left empty so that repeated runs give identical files.
    """

    K: int
    Nt: int
    Nr: int
    rho: float
    snr_grid_db: tuple
    precoders: tuple
    M: int = 1000
    L: int = 200
    master_seed: int = 0
    workers: int = 1
    noise_var: float = 1.0
    empirical: bool = False
    timing: bool = False

    def __post_init__(self):
        grid = tuple(tuple(float(v) for v in s) if isinstance(s, (list, tuple)) else float(s)
                     for s in self.snr_grid_db)
        object.__setattr__(self, "snr_grid_db", grid)
        object.__setattr__(self, "precoders", tuple(self.precoders))
        self.validate()

    def validate(self) -> None:
        """Reject bad sizes and precoder/scenario combinations before any work starts."""
        if self.M < 1 or self.L < 1:
            raise ContractViolation("M and L must be >= 1")
        if self.workers < 1:
            raise ContractViolation("workers must be >= 1")
        if not self.snr_grid_db:
            raise ContractViolation("empty SNR grid")
        if not self.precoders:
            raise ContractViolation("no precoders selected")
        for s in self.snr_grid_db:
            if isinstance(s, tuple) and len(s) != self.K:
                raise ContractViolation(f"per-user SNR entry {s} does not have {self.K} values")
        for name in self.precoders:
            if name not in PRECODERS:
                raise ContractViolation(f"unknown precoder {name!r}")
            if name == "sdp" and (self.Nt != 1 or self.Nr != 1):
                raise ContractViolation("sdp requires Nt = Nr = 1")
            if name == "two_user_closed" and (self.K != 2 or self.Nt != 1):
                raise ContractViolation("two_user_closed requires K = 2 and Nt = 1")
            if name in ("nusvd", "nusvd_opt") and self.Nr < self.K:
                raise ContractViolation("nusvd requires Nr >= K")
        self.scenario(self.snr_grid_db[0])

    def scenario(self, snr_db) -> Scenario:
        return Scenario.from_snr_db(self.K, self.Nt, self.Nr, self.rho, snr_db, self.noise_var)


@dataclass(frozen=True)
class ResultRow:
    snr_db: object
    precoder: str
    sdr_db: float
    sdr_analytic_db: float
    stderr_db: float
    trials: int
    elapsed_ms: Optional[float] = None


def design(name: str, scn: Scenario, channel: ChannelRealization, cache: Optional[dict] = None) -> PrecoderSet:
    """Build the precoder called `name` for one channel draw.

    `cache` may hold SNR-independent intermediate results (the Nu-SVD
    directions) shared between calls on the same channel.
    """
    if name == "none":
        return full_power(scn, channel)
    if name == "amrt":
        return amrt(scn, channel)
    if name == "gradient":
        return projected_gradient(scn, channel)
    if name == "sdp":
        return siso_precoder(channel, scn.source, scn.T, scn.noise_var)
    if name == "mrt":
        return mrt(scn, channel)
    if name == "mrt_opt":
        return mrt_optimized(scn, channel)
    if name in ("nusvd", "nusvd_opt"):
        if cache is None:
            cache = {}
        if "nusvd" not in cache:
            cache["nusvd"] = nusvd_directions(channel)[0]
        d = cache["nusvd"]
        if name == "nusvd_opt":
            return optimize_gains(d, scn, channel)
        return PrecoderSet(np.sqrt(scn.T)[:, None] * d.u, {"design": "nusvd", **d.meta})
    if name == "two_user_closed":
        h1, h2 = channel.blocks
        sol = two_user_optimal(h1, h2, scn.T[0], scn.T[1], scn.rho, scn.noise_var)
        return PrecoderSet(sol.precoders, {"design": "two_user_closed", "region": sol.region})
    raise ContractViolation(f"unknown precoder {name!r}")


def _trial(cfg: ExperimentConfig, l: int):
    """All SNR points and precoders for channel realization `l`.

    Returns analytic and empirical sum-MSE, design time and per-user powers,
    each indexed ``[snr, precoder, ...]``.
    """
    rng = RngStream(cfg.master_seed, l)
    scn0 = cfg.scenario(cfg.snr_grid_db[0])
    channel = sample_channel(scn0, rng)
    H = channel.H
    Cs = scn0.source.Cs
    S, Pn = len(cfg.snr_grid_db), len(cfg.precoders)
    xi = np.empty((S, Pn))
    xi_emp = np.full((S, Pn), np.nan)
    elapsed = np.empty((S, Pn))
    powers = np.empty((S, Pn, cfg.K))
    s = sample_sources(scn0.source, cfg.M, rng) if cfg.empirical else None
    cache: dict = {}
    for i, snr in enumerate(cfg.snr_grid_db):
        scn = cfg.scenario(snr)
        for j, name in enumerate(cfg.precoders):
            t0 = time.perf_counter()
            pre = design(name, scn, channel, cache)
            elapsed[i, j] = time.perf_counter() - t0
            P = pre.P
            xi[i, j] = sum_mse(H, P, Cs, scn.noise_var)
            powers[i, j] = pre.powers
            if cfg.empirical:
                y = transmit(H, P, s, scn.noise_var, rng)
                W = mmse_receiver(H, P, Cs, scn.noise_var)
                xi_emp[i, j] = empirical_sum_mse(s, W.conj().T @ y)
    return xi, xi_emp, elapsed, powers


def _trial_batch(args):
    cfg, ls = args
    return [_trial(cfg, l) for l in ls]


def run_trials(cfg: ExperimentConfig):
    """Raw per-trial arrays stacked along a leading trial axis, in trial order."""
    cfg.validate()
    if cfg.workers == 1 or cfg.L == 1:
        out = [_trial(cfg, l) for l in range(cfg.L)]
    else:
        chunks = np.array_split(np.arange(cfg.L), min(cfg.L, 4 * cfg.workers))
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            # map() yields in submission order: the reduction below never sees completion order
            out = [r for batch in pool.map(_trial_batch, [(cfg, [int(l) for l in c]) for c in chunks])
                   for r in batch]
    return tuple(np.stack([o[i] for o in out]) for i in range(4))


def _sdr_and_stderr(K: int, xi: np.ndarray):
    m = xi.mean(axis=0)
    sd = xi.std(axis=0, ddof=1) if xi.shape[0] > 1 else np.zeros_like(m)
    return 10 * np.log10(K / m), _DB * sd / (math.sqrt(xi.shape[0]) * m)


def run_experiment(cfg: ExperimentConfig) -> List[ResultRow]:
    """One row per (SNR, precoder), SNR-major.

    The SDR of a row is ``10 log10(K / mean(xi_l))``: distortions are averaged
    over the L realizations first. With the empirical path on, ``sdr_db``
    and its standard error come from the decoded symbols and
    ``sdr_analytic_db`` from the exact sum-MSE; otherwise both are analytic.
    """
    xi, xi_emp, elapsed, _ = run_trials(cfg)
    sdr_a, se_a = _sdr_and_stderr(cfg.K, xi)
    if cfg.empirical:
        sdr, se = _sdr_and_stderr(cfg.K, xi_emp)
    else:
        sdr, se = sdr_a, se_a
    ms = elapsed.sum(axis=0) * 1e3
    rows = []
    for i, snr in enumerate(cfg.snr_grid_db):
        for j, name in enumerate(cfg.precoders):
            rows.append(ResultRow(snr, name, float(sdr[i, j]), float(sdr_a[i, j]), float(se[i, j]),
                                  cfg.L, float(ms[i, j]) if cfg.timing else None))
    return rows


# --- presets --------------------------------------------------------------

_SNR_SWEEP = tuple(range(-20, 31, 5))
_RHO_SWEEP = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
GOLDEN_CHANNEL = ((1.0, 1.0), (1.0, 0.5))


def _preset_2x2(L):
    return {f"rho{r}": ExperimentConfig(2, 1, 2, r, _SNR_SWEEP, ("none", "two_user_closed", "gradient", "amrt"), L=L)
            for r in (0.8, 0.95)}


def _preset_1xnr(L):
    return {f"nr{n}_rho{r}": ExperimentConfig(2, 1, n, r, (5.0, 20.0), ("two_user_closed",), L=L)
            for r in (0.0, 0.5, 0.8, 0.95, 0.99) for n in range(1, 9)}


def _preset_comnr(L):
    out = {}
    for n in (1, 2, 5):
        pre = ("none", "gradient", "amrt") + (("sdp",) if n == 1 else ())
        out[f"nr{n}"] = ExperimentConfig(10, 1, n, 0.95, _SNR_SWEEP, pre, L=L)
    return out


def _preset_10x2(L):
    pre = ("gradient", "amrt", "mrt_opt", "nusvd_opt", "nusvd")
    return {f"rho{r}": ExperimentConfig(10, 2, 10, r, _SNR_SWEEP, pre, L=L) for r in (0.4, 0.99)}


PRESETS = {
    "2x2": _preset_2x2,
    "powerAllocation": None,
    "Fig2-1xNR": _preset_1xnr,
    "comNR": _preset_comnr,
    "10-2x10": _preset_10x2,
}
# presets whose curves are drawn next to the separation bound
_BOUND_PRESETS = ("2x2", "comNR")


def power_allocation(K, Nt, Nr, snr_db, rhos, L: int, master_seed: int = 0, workers: int = 1,
                     channel: Optional[ChannelRealization] = None) -> List[dict]:
    """Mean per-user transmit power of the sum-MSE optimal precoder versus correlation.

    Two users use the closed form, more users the projected gradient. A
    fixed `channel` replaces the random draws (then ``L`` is ignored).
    """
    name = "two_user_closed" if K == 2 and Nt == 1 else "gradient"
    rows = []
    for rho in rhos:
        if channel is not None:
            scn = Scenario.from_snr_db(K, Nt, Nr, rho, snr_db)
            p = design(name, scn, channel).powers[None, :]
        else:
            cfg = ExperimentConfig(K, Nt, Nr, rho, (tuple(snr_db),), (name,), L=L,
                                   master_seed=master_seed, workers=workers)
            p = run_trials(cfg)[3][:, 0, 0, :]
        for k, v in enumerate(p.mean(axis=0)):
            rows.append({"rho": rho, "user": k + 1, "mean_power": float(v), "trials": p.shape[0]})
    return rows


def _power_presets(L, seed, workers):
    golden = ChannelRealization.from_columns(*GOLDEN_CHANNEL)
    return {
        "2user_snr30_5": power_allocation(2, 1, 2, (30.0, 5.0), _RHO_SWEEP, L, seed, workers),
        "4user_siso": power_allocation(4, 1, 1, (35.0, 25.0, 15.0, 5.0), _RHO_SWEEP, L, seed, workers),
        "golden": power_allocation(2, 1, 2, tuple(10 * np.log10([700.0, 200.0])), (0.95, 0.99), 1,
                                   channel=golden),
    }


def reproduce_figure(name: str, scale: str = "desk", out_dir=None, workers: int = 1,
                     L: Optional[int] = None, master_seed: int = 0, bound: bool = True) -> Dict[str, list]:
    """Run a figure preset and optionally write one CSV per sub-scenario.

    Parameters
    ----------
    name : str
        One of :data:`PRESETS`.
    scale : {"desk", "full"}
        ``desk`` uses L=200 realizations, ``full`` L=1000; `L` overrides both.
    out_dir : path, optional
        Directory receiving ``<name>_<label>.csv`` files.

    Returns
    -------
    dict
        Sub-scenario label to its rows (:class:`ResultRow` or dicts for the
        power-allocation and bound tables).
    """
    if name not in PRESETS:
        raise ContractViolation(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    if scale not in ("desk", "full"):
        raise ContractViolation(f"unknown scale {scale!r}")
    L = L or (200 if scale == "desk" else 1000)
    results: Dict[str, list] = {}
    if name == "powerAllocation":
        results.update(_power_presets(L, master_seed, workers))
    else:
        for label, cfg in PRESETS[name](L).items():
            cfg = replace(cfg, workers=workers, master_seed=master_seed)
            results[label] = run_experiment(cfg)
            if bound and name in _BOUND_PRESETS and cfg.rho < 1:
                scn = cfg.scenario(cfg.snr_grid_db[0])
                results[label + "_bound"] = _bound.sdr_bound_curve(scn, cfg.snr_grid_db, L, master_seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for label, rows in results.items():
            path = out / f"{name}_{label}.csv"
            if label.endswith("_bound"):
                write_table(rows, path, BOUND_CSV_HEADER)
            elif name == "powerAllocation":
                write_table(rows, path, POWER_CSV_HEADER)
            else:
                write_csv(rows, path)
    return results


# --- CSV and config I/O ---------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ";".join(_fmt(x) for x in v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def _write_rows(lines, header, path) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(lines)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def write_csv(rows: Sequence[ResultRow], path=None) -> str:
    """Write result rows (6 significant digits, LF endings); returns the text."""
    lines = [[_fmt(getattr(r, h)) for h in CSV_HEADER] for r in rows]
    return _write_rows(lines, CSV_HEADER, path)


def write_table(rows: Sequence[dict], path=None, header=None) -> str:
    header = tuple(header or (rows[0].keys() if rows else ()))
    return _write_rows([[_fmt(r[h]) for h in header] for r in rows], header, path)


def _parse_snr(text: str):
    parts = text.split(";")
    return float(parts[0]) if len(parts) == 1 else tuple(float(p) for p in parts)


def read_csv(path) -> List[ResultRow]:
    """Inverse of :func:`write_csv` (values carry the 6 written digits)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ConfigError(f"{path}: unexpected header {','.join(header)}")
        rows = []
        for n, rec in enumerate(reader, start=2):
            if len(rec) != len(CSV_HEADER):
                raise ConfigError(f"{path}:{n}: expected {len(CSV_HEADER)} fields, got {len(rec)}")
            rows.append(ResultRow(_parse_snr(rec[0]), rec[1], float(rec[2]), float(rec[3]),
                                  float(rec[4]), int(rec[5]), float(rec[6]) if rec[6] else None))
    return rows


_REQUIRED = ("K", "Nt", "Nr", "rho", "snr_grid_db", "precoders")
_FIELD_TYPES = {"K": int, "Nt": int, "Nr": int, "M": int, "L": int, "master_seed": int, "workers": int,
                "rho": float, "noise_var": float, "empirical": bool, "timing": bool}


def config_from_dict(data: dict, source: str = "<config>") -> ExperimentConfig:
    """Validate a field mapping and build an :class:`ExperimentConfig`.

    Every problem is reported as :class:`ConfigError` naming the field.
    """
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    data = dict(data)
    version = data.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema_version {version!r}")
    known = {f.name for f in fields(ExperimentConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{source}: unknown field '{key}'")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(f"{source}: missing required field '{key}'")
    for key, typ in _FIELD_TYPES.items():
        if key not in data:
            continue
        v = data[key]
        ok = isinstance(v, bool) if typ is bool else (
            isinstance(v, (int, float)) and not isinstance(v, bool) and (typ is float or float(v).is_integer()))
        if not ok:
            raise ConfigError(f"{source}: field '{key}' must be of type {typ.__name__}, got {v!r}")
        data[key] = typ(v)
    grid = data["snr_grid_db"]
    if not isinstance(grid, list) or not grid:
        raise ConfigError(f"{source}: field 'snr_grid_db' must be a non-empty list")
    pre = data["precoders"]
    if isinstance(pre, str):
        pre = [pre]
    if not isinstance(pre, list) or not all(isinstance(p, str) for p in pre):
        raise ConfigError(f"{source}: field 'precoders' must be a list of names")
    data["precoders"] = pre
    try:
        return ExperimentConfig(**data)
    except (ContractViolation, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Read a JSON experiment description; see :func:`config_from_dict`."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_dict(data, str(path))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["snr_grid_db"] = [list(s) if isinstance(s, tuple) else s for s in cfg.snr_grid_db]
    d["precoders"] = list(cfg.precoders)
    d["schema_version"] = CONFIG_SCHEMA_VERSION
    return d


def parse_snr_range(text: str) -> tuple:
    """``"a:b:step"`` to the inclusive grid ``a, a+step, ..., b``; a single number is one point."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"bad SNR range {text!r}; expected a:b:step") from None
    if len(vals) == 1:
        return (vals[0],)
    if len(vals) != 3 or vals[2] <= 0 or vals[1] < vals[0]:
        raise ConfigError(f"bad SNR range {text!r}; expected a:b:step with step > 0 and a <= b")
    a, b, step = vals
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return tuple(round(a + i * step, 10) for i in range(n))
