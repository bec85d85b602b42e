"""Experiment configuration, trial scheduling and result emission."""

from __future__ import annotations

import configparser
import csv
import io
import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .bayes_model import PriorSpec
from .gen_error import LambdaEstimate, run_trial
from .mcmc import ConfigError, DivergenceError, McmcConfig
from .rlct_bounds import RlctBound, format_fraction, tensor_rlct_bound
from .tensor_core import ModelSpec

__all__ = [
    "ExperimentConfig",
    "CellReport",
    "TABLE1_CELLS",
    "QUICK_MCMC",
    "load_config",
    "run_experiment",
    "write_reports",
    "CSV_COLUMNS",
]

TABLE1_CELLS = tuple(
    ModelSpec(d, d, d, 2 * h0, h0, 100) for d in (2, 3, 4) for h0 in range(1, 6)
)

QUICK_MCMC = McmcConfig(total_iters=12000, burn_in=4000, thin=20, target_samples=300)
QUICK_COUNTS = {"datasets_per_cell": 1, "truth_redraws": 3, "n_test": 2000}

CSV_COLUMNS = [
    "I", "J", "K", "H", "H0", "n", "core_term", "m1", "m2", "m3", "lambda_bound",
    "lambda_hat", "lambda_std", "tightness_ratio", "accept_rate", "rhat",
]
RHAT_WARN = 1.2


@dataclass
class ExperimentConfig:
    cells: list = field(default_factory=lambda: list(TABLE1_CELLS))
    prior: PriorSpec = field(default_factory=PriorSpec)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    datasets_per_cell: int = 2
    truth_redraws: int = 5
    n_test: int = 10000
    master_seed: int = 0
    workers: int = 1
    output_path: str | None = None
    format: str = "csv"
    bounds_only: bool = False
    dump_chains: str | None = None

    def validate(self) -> None:
        if not self.cells:
            raise ConfigError("at least one cell is required")
        for name in ("workers", "datasets_per_cell", "truth_redraws", "n_test"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {self.format!r}")


# -- config file -------------------------------------------------------------

_SECTION_KEYS = {
    "experiment": {
        "master_seed": int, "seed": int, "workers": int, "datasets_per_cell": int,
        "truth_redraws": int, "n_test": int, "output": str, "format": str,
        "bounds_only": "bool", "dump_chains": str,
    },
    "prior": {"kind": str, "scale": float, "sigma": float, "half_width": float},
    "mcmc": {
        "total_iters": int, "burn_in": int, "thin": int, "target_samples": int,
        "initial_step": float, "adapt_window": int, "target_accept": float,
        "chains": int, "seed": int, "adapt": "bool", "init": str,
        "overdispersed_scale": float,
    },
}
_CELL_KEYS = ("I", "J", "K", "H", "H0", "n")


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line number of ``[section]`` or of ``key`` inside it."""
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None:
            name = re.split(r"[=:]", stripped, maxsplit=1)[0].strip()
            if name.lower() == key.lower():
                return lineno
    return None


def _where(path, text, section, key=None) -> str:
    line = _line_of(text, section, key)
    loc = f"{path}:{line}" if line else str(path)
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _convert(raw: str, kind, where: str):
    try:
        if kind == "bool":
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Read an INI-style config file on top of ``base`` (defaults if None).

    Sections: ``[experiment]``, ``[prior]``, ``[mcmc]`` and any number of
    ``[cell.<name>]`` sections with keys ``I J K H H0 n``.  When cell
    sections are present they replace the default cell list.
    """
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{path}:{lineno}" if lineno else str(path)
        raise ConfigError(f"{where}: {str(exc).splitlines()[0]}") from None

    cfg = replace(base) if base is not None else ExperimentConfig()
    prior_kw = {"kind": cfg.prior.kind, "scale": cfg.prior.scale}
    mcmc_kw = dict(cfg.mcmc.__dict__)
    cells = []
    for section in parser.sections():
        if section.startswith("cell"):
            idx = len(cells)
            values = {}
            for key in _CELL_KEYS:
                if key not in parser[section]:
                    if key == "n":
                        continue
                    raise ConfigError(f"{_where(path, text, section)}: cell {idx} is missing {key}")
                values[key] = _convert(parser[section][key], int,
                                       _where(path, text, section, key))
            unknown = set(parser[section]) - set(_CELL_KEYS)
            if unknown:
                raise ConfigError(f"{_where(path, text, section)}: unknown keys {sorted(unknown)}")
            try:
                cells.append(ModelSpec(**values))
            except ValueError as exc:
                raise ConfigError(f"{_where(path, text, section)}: cell {idx}: {exc}") from None
            continue
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{_where(path, text, section)}: unknown section")
        allowed = _SECTION_KEYS[section]
        for key, raw in parser[section].items():
            if key not in allowed:
                raise ConfigError(f"{_where(path, text, section, key)}: unknown key")
            value = _convert(raw, allowed[key], _where(path, text, section, key))
            if section == "experiment":
                attr = {"seed": "master_seed", "output": "output_path"}.get(key, key)
                setattr(cfg, attr, value)
            elif section == "prior":
                prior_kw["kind" if key == "kind" else "scale"] = value
            else:
                mcmc_kw[key] = value
    if cells:
        cfg.cells = cells
    try:
        cfg.prior = PriorSpec(**prior_kw)
    except ValueError as exc:
        raise ConfigError(f"{path}: [prior] {exc}") from None
    try:
        cfg.mcmc = McmcConfig(**mcmc_kw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: [mcmc] {exc}") from None
    cfg.validate()
    return cfg


# -- reports -----------------------------------------------------------------

@dataclass
class CellReport:
    spec: ModelSpec
    lambda_bound: RlctBound | None = None
    lambda_estimate: LambdaEstimate | None = None
    status: str = "ok"
    message: str = ""

    @property
    def tightness_ratio(self) -> float | None:
        if self.lambda_bound is None or self.lambda_estimate is None:
            return None
        return self.lambda_estimate.lambda_hat / float(self.lambda_bound.bound)

    def row(self) -> dict:
        """Flat record with exactly ``CSV_COLUMNS``; missing values are None."""
        s, b, e = self.spec, self.lambda_bound, self.lambda_estimate
        out = {"I": s.I, "J": s.J, "K": s.K, "H": s.H, "H0": s.H0, "n": s.n}
        for name in ("core_term", "m1", "m2", "m3"):
            out[name] = None if b is None else format_fraction(getattr(b, name))
        out.update({
            "lambda_bound": None if b is None else format_fraction(b.bound),
            "lambda_hat": None if e is None else e.lambda_hat,
            "lambda_std": None if e is None else e.lambda_std,
            "tightness_ratio": self.tightness_ratio,
            "accept_rate": None if e is None else e.accept_rate,
            "rhat": None if e is None else e.rhat,
        })
        return out

    def to_json(self) -> dict:
        out = self.row()
        out["status"] = self.status
        out["message"] = self.message
        out["half_params"] = None if self.lambda_bound is None else format_fraction(
            self.lambda_bound.half_params)
        out["obvious_lambda1"] = None if self.lambda_bound is None else format_fraction(
            self.lambda_bound.obvious_lambda1)
        out["n_trials"] = 0 if self.lambda_estimate is None else len(self.lambda_estimate.trials)
        return out


def _bound_or_none(spec: ModelSpec) -> RlctBound | None:
    return tensor_rlct_bound(spec) if spec.H0 >= 1 else None


def _trial_job(spec, prior, mcmc, seed, redraw, dataset, n_test, trace_path):
    try:
        return run_trial(spec, prior, mcmc, seed, redraw, dataset, n_test, trace_path)
    except DivergenceError as exc:
        return ("diverged", str(exc))
    except (ValueError, RuntimeError) as exc:
        return ("failed", str(exc))


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[CellReport]:
    """Run every cell of ``cfg``; results do not depend on ``cfg.workers``."""
    cfg.validate()
    reports = [CellReport(spec, _bound_or_none(spec)) for spec in cfg.cells]
    if cfg.bounds_only:
        for r in reports:
            r.status = "bounds-only"
        return reports

    jobs = []
    for ci, spec in enumerate(cfg.cells):
        for redraw in range(cfg.truth_redraws):
            for dataset in range(cfg.datasets_per_cell):
                trace = None
                if cfg.dump_chains:
                    Path(cfg.dump_chains).mkdir(parents=True, exist_ok=True)
                    tag = "-".join(map(str, spec.key()))
                    trace = str(Path(cfg.dump_chains) / f"chain_{tag}_r{redraw}_d{dataset}.csv")
                jobs.append((ci, (spec, cfg.prior, cfg.mcmc, cfg.master_seed, redraw,
                                  dataset, cfg.n_test, trace)))

    if cfg.workers == 1:
        results = []
        for ci, args in jobs:
            results.append(_trial_job(*args))
            if progress:
                progress(len(results), len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_trial_job, *args) for _, args in jobs]
            results = []
            for f in futures:
                results.append(f.result())
                if progress:
                    progress(len(results), len(jobs))

    per_cell = [[] for _ in cfg.cells]
    for (ci, _), res in zip(jobs, results):
        per_cell[ci].append(res)
    for report, trials in zip(reports, per_cell):
        bad = [t for t in trials if isinstance(t, tuple)]
        if bad:
            report.status, report.message = bad[0]
            continue
        report.lambda_estimate = LambdaEstimate(report.spec, trials, cfg.truth_redraws)
        if report.lambda_estimate.rhat > RHAT_WARN:
            report.message = f"split R-hat {report.lambda_estimate.rhat:.3f} > {RHAT_WARN}"
    return reports


# -- emission ----------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def reports_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        row = r.row()
        writer.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def trial_records(reports):
    for r in reports:
        if r.lambda_estimate is None:
            continue
        for t in r.lambda_estimate.trials:
            yield {
                "spec": dict(zip(_CELL_KEYS, r.spec.key())),
                "redraw": t.redraw, "dataset": t.dataset, "g_n": t.g_n,
                "n_test": t.n_test, "mc_stderr": t.mc_stderr,
                "accept_rate": t.accept_rate, "rhat": t.rhat, "ess": t.ess,
            }


def write_reports(reports, path, fmt="csv") -> list[Path]:
    """Write the table (CSV or JSON) and, if any, trial records as JSON lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path.write_text(reports_csv(reports))
    else:
        path.write_text(json.dumps([r.to_json() for r in reports], indent=2) + "\n")
    written = [path]
    records = list(trial_records(reports))
    if records:
        trials_path = path.with_name(path.stem + ".trials.jsonl")
        with open(trials_path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec) + "\n")
        written.append(trials_path)
    return written


def format_table(reports) -> str:
    """Human-readable table for stdout."""
    head = f"{'I':>2} {'J':>2} {'K':>2} {'H':>3} {'H0':>3} {'n':>5} {'lambda_B':>9} " \
           f"{'lambda_hat':>18} {'ratio':>6} {'accept':>6} {'rhat':>6}  status"
    lines = [head, "-" * len(head)]
    for r in reports:
        s, b, e = r.spec, r.lambda_bound, r.lambda_estimate
        bound = "-" if b is None else f"{float(b.bound):.2f}"
        if e is None:
            est, ratio, acc, rhat = "-", "-", "-", "-"
        else:
            est = f"{e.lambda_hat:.2f} +- {e.lambda_std:.2f}"
            ratio = "-" if r.tightness_ratio is None else f"{r.tightness_ratio:.2f}"
            acc, rhat = f"{e.accept_rate:.3f}", f"{e.rhat:.3f}"
        status = r.status + (f" ({r.message})" if r.message else "")
        lines.append(f"{s.I:>2} {s.J:>2} {s.K:>2} {s.H:>3} {s.H0:>3} {s.n:>5} {bound:>9} "
                     f"{est:>18} {ratio:>6} {acc:>6} {rhat:>6}  {status}")
    return "\n".join(lines)
