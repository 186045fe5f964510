"""Command-line entry point.

Every command accepts ``--config FILE``: a flat ``key = value`` text file
(``#`` starts a comment, keys use the long option names). Precedence is
command line, then config file, then built-in defaults. The resolved
configuration is echoed into ``manifest.json`` in the output directory.

Exit statuses: 0 success, 2 invalid configuration, 3 input/output error,
4 fitting error. Failures print one line ``error: <kind>: <reason>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .classic import FitError, fit_pe, fit_weibull_nph
from .evaluate import (
    FitSummary,
    GofUndefinedError,
    gelman_rubin,
    geweke,
    gof,
    summarize,
    summarize_mle,
    survival_from_point,
)
from .mrhtree import HyperParams
from .pruner import PruneConfig, effective_bins, prune_all
from .sampler import ChainConfig, ChainLayout, InitializationError, default_priors, read_chain, run, write_chain
from .simgen import CovariateSpec, HazardSpec, SimConfig, simulate
from .survdata import CsvSchema, DataError, Dataset, TimeGrid, load_csv, write_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_FIT = 4


class CliError(Exception):
    code = 1
    kind = "error"


class ConfigInvalid(CliError):
    code = EXIT_CONFIG
    kind = "config-invalid"


class IoFailure(CliError):
    code = EXIT_IO
    kind = "io-error"


class FitFailure(CliError):
    code = EXIT_FIT
    kind = "fit-error"


# ---------------------------------------------------------------------------
# option parsing


def _floats(text: str) -> list[float]:
    return [float(x) for x in str(text).split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in str(text).split(",") if x.strip()]


def _names(text: str) -> list[str]:
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    if text is None or str(text).strip().lower() in ("", "none", "auto"):
        return None
    return float(text)


def _optional_str(text):
    return None if text is None or str(text).strip() == "" else str(text)


def _items(text) -> list[str]:
    """``;``-separated list (repeated command-line flags are joined with ``;``)."""
    if isinstance(text, list):
        text = ";".join(text)
    return [x.strip() for x in str(text).split(";") if x.strip()]


@dataclass(frozen=True)
class Opt:
    name: str
    convert: Callable[[Any], Any]
    default: Any
    help: str
    flag: bool = False
    repeat: bool = False


SCHEMA_OPTS = [
    Opt("time_col", str, "time", "column holding observed times"),
    Opt("event_col", str, "event", "column holding the 0/1 event flag"),
    Opt("stratum_col", str, "stratum", "column holding the stratum label"),
    Opt("covariates", lambda s: None if str(s).strip().lower() in ("", "all") else _names(s), "all",
        "comma-separated numeric covariate columns, or 'all' for every other column"),
    Opt("categorical", _items, "", "categorical columns as 'col:reference' items separated by ';'"),
]
GRID_OPTS = [
    Opt("grid_m", int, 6, "tree depth M (J = 2**M bins)"),
    Opt("horizon", _optional_float, None, "grid end t_J (default: largest observed time)"),
]
DATA_OPTS = [Opt("data", _optional_str, None, "input CSV")] + SCHEMA_OPTS + GRID_OPTS
PH_OPT = Opt("ph_mode", _bool, False, "pool strata into one baseline with stratum indicators as covariates", flag=True)

COMMANDS: dict[str, list[Opt]] = {
    "simulate": [
        Opt("hazard", _items, "piecewise:0,2,4,6,8:0.3,0.15,0.08,0.05;piecewise:0,2,4,6,8:0.12,0.12,0.1,0.1",
            "stratum hazards 'piecewise:b0,...,bJ:r1,...,rJ' or 'weibull:kappa,lam' (repeat or ';')", repeat=True),
        Opt("n", _ints, "1000", "subjects per stratum (one value or one per stratum)"),
        Opt("beta", _floats, "", "true covariate effects"),
        Opt("covariate", _items, "", "covariates 'name:binary:p' or 'name:normal:mean:sd' (repeat or ';')",
            repeat=True),
        Opt("c_admin", float, math.inf, "administrative censoring time"),
        Opt("c_rate", float, 0.0, "rate of independent exponential censoring"),
        Opt("seed", int, 0, "random seed"),
    ] + GRID_OPTS,
    "fit-mrh": DATA_OPTS + [
        Opt("prune_levels", str, "none", "prune 'none', 'all', or the bottom q levels"),
        Opt("prune_alpha", float, 0.05, "test level for pruning"),
        Opt("chains", int, 5, "number of chains"),
        Opt("burnin", int, 50_000, "burn-in sweeps per chain"),
        Opt("retain", int, 150_000, "stored draws per chain"),
        Opt("thin", int, 10, "sweeps per stored draw"),
        Opt("seed", int, 0, "random seed"),
        Opt("k", float, 0.5, "prior smoothing parameter k"),
        Opt("a", int, 10, "prior shape of H"),
        Opt("gamma", float, 0.5, "prior split centre"),
        Opt("k_mode", str, "fixed", "fixed | sampled"),
        Opt("a_mode", str, "fixed", "fixed | sampled"),
        Opt("lambda_mode", str, "fixed", "fixed | sampled"),
        Opt("gamma_mode", str, "fixed", "fixed | sampled"),
        Opt("beta_prior_sd", float, 10.0, "prior standard deviation of each covariate effect"),
        Opt("workers", int, 1, "worker processes for chains"),
        Opt("rhat_threshold", float, 1.1, "warn when any R-hat exceeds this"),
        Opt("smooth_window", int, 0, "moving-average window for the log-HR table (0 = off)"),
        Opt("format", str, "csv", "draw file format: csv | jsonl"),
        PH_OPT,
    ],
    "fit-pe": DATA_OPTS + [
        Opt("strategy", str, "equal", "bin placement: equal | quantile"),
        Opt("j_min", int, 2, "smallest candidate bin count"),
        Opt("j_max", int, 20, "largest candidate bin count"),
        PH_OPT,
    ],
    "fit-weibull": DATA_OPTS + [PH_OPT],
    "compare": [
        Opt("fits", _items, "", "fit output directories (positional, or ';'-separated)", repeat=True),
        Opt("data", _optional_str, None, "dataset the fits were run on"),
        Opt("t_grid", lambda s: _floats(s) if s else None, None,
            "GOF evaluation times (default: deciles of each fit's grid)"),
    ],
    "diagnose": [
        Opt("run", _optional_str, None, "fit-mrh output directory"),
    ],
}


def read_config_file(path: str | Path) -> dict[str, str]:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrhsurv", description="Multi-resolution hazard survival models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, opts in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value configuration file")
        p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
        if name == "compare":
            p.add_argument("fit_dirs", nargs="*", help="fit output directories")
        for o in opts:
            flag = "--" + o.name.replace("_", "-")
            if o.flag:
                p.add_argument(flag, dest=o.name, action="store_true", default=argparse.SUPPRESS, help=o.help)
            elif o.repeat:
                p.add_argument(flag, dest=o.name, action="append", default=argparse.SUPPRESS, help=o.help)
            else:
                p.add_argument(flag, dest=o.name, default=argparse.SUPPRESS, help=o.help)
    return parser


def resolve(command: str, ns: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, config file and command line; convert every value."""
    opts = {o.name: o for o in COMMANDS[command]}
    file_vals = read_config_file(ns.config) if ns.config else {}
    unknown = set(file_vals) - set(opts) - {"out"}
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(sorted(unknown))}")
    cli_vals = {k: v for k, v in vars(ns).items() if k in opts or k == "out"}
    cfg: dict[str, Any] = {}
    for name, o in opts.items():
        raw = cli_vals.get(name, file_vals.get(name, o.default))
        cfg[name] = _convert(o, raw)
    cfg["out"] = cli_vals.get("out", file_vals.get("out", "run"))
    if command == "compare" and getattr(ns, "fit_dirs", None):
        cfg["fits"] = list(cfg["fits"]) + list(ns.fit_dirs)
    return cfg


def _convert(o: Opt, raw):
    try:
        return o.convert(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid value for {o.name}: {raw!r} ({exc})") from None


# ---------------------------------------------------------------------------
# helpers


def _sha256_file(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror}") from None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _manifest(command: str, cfg: dict, out: Path, **extra) -> None:
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    outputs = {name: hashlib.sha256((out / name).read_bytes()).hexdigest() for name in files}
    _write_json(out / "manifest.json", {"command": command, "version": __version__, "config": cfg,
                                        "outputs": outputs, **extra})


def proportional_view(data: Dataset) -> Dataset:
    """One pooled stratum; strata other than the first become indicator covariates."""
    L = data.stratum_count
    ind = np.eye(L)[data.stratum][:, 1:]
    names = tuple(f"stratum[{lab}]" for lab in data.stratum_labels[1:]) + tuple(data.covariate_names)
    return Dataset(time=data.time, event=data.event, stratum=np.zeros(data.n, dtype=np.int64),
                   X=np.hstack([ind, data.X]), stratum_count=1, covariate_names=names, grid=data.grid,
                   stratum_labels=("pooled",))


def _schema(cfg) -> CsvSchema:
    cats = {}
    for item in cfg.get("categorical", []):
        col, sep, ref = item.partition(":")
        if not sep:
            raise ConfigInvalid(f"categorical item {item!r} must be 'column:reference'")
        cats[col.strip()] = ref.strip()
    return CsvSchema(cfg["time_col"], cfg["event_col"], cfg["stratum_col"], cfg["covariates"], cats)


def _load(cfg, grid: TimeGrid | None = None) -> Dataset:
    if not cfg.get("data"):
        raise ConfigInvalid("--data is required")
    if cfg["grid_m"] < 0:
        raise ConfigInvalid("grid_m must be >= 0")
    if cfg["horizon"] is not None and not cfg["horizon"] > 0:
        raise ConfigInvalid("horizon must be positive")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            data = load_csv(cfg["data"], _schema(cfg), M=cfg["grid_m"], horizon=cfg["horizon"], grid=grid)
    except OSError as exc:
        raise IoFailure(f"cannot read {cfg['data']}: {exc.strerror}") from None
    except DataError as exc:
        raise IoFailure(f"{cfg['data']}: {exc}") from None
    return proportional_view(data) if cfg.get("ph_mode") else data


def _data_block(cfg, data: Dataset) -> dict:
    return {
        "path": cfg["data"],
        "sha256": _sha256_file(cfg["data"]),
        "n": data.n,
        "strata": data.stratum_count,
        "covariates": list(data.covariate_names),
        "grid": data.grid.to_dict(),
    }


def _write_summary(out: Path, summary: FitSummary) -> None:
    (out / "summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    (out / "hazard.csv").write_text(summary.hazard_csv(), encoding="utf-8")
    (out / "log_hr.csv").write_text(summary.log_hr_csv(), encoding="utf-8")
    (out / "beta.csv").write_text(summary.beta_csv(), encoding="utf-8")
    (out / "ic.csv").write_text(summary.ic_csv(), encoding="utf-8")


def _fit_record(out: Path, cfg: dict, data: Dataset, summary: FitSummary, **extra) -> None:
    _write_json(out / "fit.json", {
        "model": summary.model,
        "data_sha256": _sha256_file(cfg["data"]),
        "ph_mode": bool(cfg.get("ph_mode")),
        "schema": {k: cfg[k] for k in ("time_col", "event_col", "stratum_col", "covariates", "categorical")},
        "grid": data.grid.to_dict(),
        "ic": summary.ic,
        "point": summary.point,
        **extra,
    })


# ---------------------------------------------------------------------------
# commands


def _parse_hazard(item: str) -> HazardSpec:
    kind, _, rest = item.partition(":")
    kind = kind.strip().lower()
    if kind == "piecewise":
        b, _, r = rest.partition(":")
        return HazardSpec.piecewise(_floats(b), _floats(r))
    if kind == "weibull":
        k, lam = _floats(rest)
        return HazardSpec.weibull(k, lam)
    if kind == "constant":
        return HazardSpec.constant(float(rest))
    raise ValueError(f"unknown hazard kind {kind!r}")


def _parse_covariate(item: str) -> CovariateSpec:
    parts = [p.strip() for p in item.split(":")]
    if len(parts) >= 2 and parts[1] == "binary":
        return CovariateSpec(parts[0], "binary", p=float(parts[2]) if len(parts) > 2 else 0.5)
    if len(parts) >= 2 and parts[1] == "normal":
        mean = float(parts[2]) if len(parts) > 2 else 0.0
        sd = float(parts[3]) if len(parts) > 3 else 1.0
        return CovariateSpec(parts[0], "normal", mean=mean, sd=sd)
    raise ValueError(f"covariate {item!r} must be 'name:binary:p' or 'name:normal:mean:sd'")


def cmd_simulate(cfg: dict) -> int:
    try:
        specs = [_parse_hazard(h) for h in cfg["hazard"]]
        covs = [_parse_covariate(c) for c in cfg["covariate"]]
        n = cfg["n"][0] if len(cfg["n"]) == 1 else cfg["n"]
        sim = SimConfig(n=n, beta=cfg["beta"], covariates=covs, c_admin=cfg["c_admin"], c_rate=cfg["c_rate"],
                        seed=cfg["seed"])
        sim.sizes(len(specs))
        if cfg["grid_m"] < 0:
            raise ValueError("grid_m must be >= 0")
        if cfg["horizon"] is not None and not cfg["horizon"] > 0:
            raise ValueError("horizon must be positive")
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        data = simulate(specs, sim, M=cfg["grid_m"], horizon=cfg["horizon"])
    out = _out_dir(cfg)
    write_csv(data, out / "data.csv")
    _manifest("simulate", cfg, out, seeds={"seed": cfg["seed"]}, sim_config=json.loads(sim.to_json()),
              summary={"n": data.n, "events": int(data.event.sum()),
                       "censored_fraction": float(1 - data.event.mean())})
    print(f"wrote {data.n} records to {out / 'data.csv'}")
    return EXIT_OK


def _prune_cfg(cfg: dict, M: int) -> PruneConfig | None:
    spec = str(cfg["prune_levels"]).strip().lower()
    if spec in ("none", "0"):
        return None
    q = M if spec == "all" else int(spec)
    return PruneConfig(alpha=cfg["prune_alpha"], levels_from_bottom=q)


def cmd_fit_mrh(cfg: dict) -> int:
    if cfg["format"] not in ("csv", "jsonl"):
        raise ConfigInvalid("format must be csv or jsonl")
    try:
        chain_cfg = ChainConfig(
            n_chains=cfg["chains"], burn_in=cfg["burnin"], n_retained=cfg["retain"], thin=cfg["thin"],
            seed=cfg["seed"], a_mode=cfg["a_mode"], lambda_mode=cfg["lambda_mode"], k_mode=cfg["k_mode"],
            gamma_mode=cfg["gamma_mode"], beta_prior_sd=cfg["beta_prior_sd"], workers=cfg["workers"],
        )
        HyperParams(a=cfg["a"], k=cfg["k"], gamma=cfg["gamma"])
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    data = _load(cfg)
    try:
        prune_cfg = _prune_cfg(cfg, data.grid.M)
        if prune_cfg is not None:
            prune_cfg.validate(data.grid.M)
    except ValueError as exc:
        raise ConfigInvalid(f"prune_levels: {exc}") from None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        masks = prune_all(data, prune_cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    priors = default_priors(data, a=cfg["a"], k=cfg["k"], gamma=cfg["gamma"])
    try:
        chains = run(data, masks, chain_cfg, priors)
    except InitializationError as exc:
        raise FitFailure(str(exc)) from None
    q = "ph" if cfg["ph_mode"] else "np"
    levels = 0 if prune_cfg is None else prune_cfg.levels_from_bottom
    model = f"{q}mrh-{levels}"
    summary = summarize(chains, data, model=model, smooth_window=cfg["smooth_window"] or None)
    spans = [effective_bins(m, data.grid.M) for m in masks]
    summary.extra = {"effective_bins": [len(s) for s in spans], "bin_spans": spans,
                     "acceptance": [c.acceptance for c in chains]}
    out = _out_dir(cfg)
    ext = "jsonl" if cfg["format"] == "jsonl" else "csv"
    for i, c in enumerate(chains):
        write_chain(c, out / f"chain_{i}.{ext}", cfg["format"])
    _write_summary(out, summary)
    layout = chains[0].layout
    _fit_record(out, cfg, data, summary, layout=layout.to_dict(), chain_files=[f"chain_{i}.{ext}" for i in range(len(chains))])
    seq = np.random.SeedSequence(cfg["seed"])
    _manifest("fit-mrh", cfg, out, input=_data_block(cfg, data),
              seeds={"seed": cfg["seed"], "chain_spawn_keys": [list(s.spawn_key) for s in seq.spawn(len(chains))]},
              config_hash=chain_cfg.config_hash(), prune_masks=[m.astype(int).tolist() for m in masks],
              acceptance=[c.acceptance for c in chains])
    max_rhat = summary.diagnostics.get("max_rhat")
    if max_rhat is not None and max_rhat > cfg["rhat_threshold"]:
        print(f"WARNING: chains may not have converged: max R-hat {max_rhat:.3f} > {cfg['rhat_threshold']}",
              file=sys.stderr)
    print(f"{model}: -2logL={summary.ic['neg2loglik']:.3f} DIC={summary.ic['dic']:.3f} "
          f"effective bins={summary.extra['effective_bins']}; wrote {out}")
    return EXIT_OK


def cmd_fit_pe(cfg: dict) -> int:
    if cfg["strategy"] not in ("equal", "quantile"):
        raise ConfigInvalid("strategy must be equal or quantile")
    if not 1 <= cfg["j_min"] <= cfg["j_max"]:
        raise ConfigInvalid("need 1 <= j_min <= j_max")
    data = _load(cfg)
    try:
        fit = fit_pe(data, cfg["strategy"], cfg["j_max"], cfg["j_min"])
    except FitError as exc:
        raise FitFailure(str(exc)) from None
    model = f"pe-{cfg['strategy']}" + ("-ph" if cfg["ph_mode"] else "")
    summary = summarize_mle(fit, data, model)
    summary.extra = {"j": fit.j, "bins": [b.size - 1 for b in fit.boundaries],
                     "aic_by_j": {str(k): v for k, v in fit.candidates.items()}}
    out = _out_dir(cfg)
    _write_summary(out, summary)
    _fit_record(out, cfg, data, summary)
    _manifest("fit-pe", cfg, out, input=_data_block(cfg, data))
    print(f"{model}: j={fit.j} bins={summary.extra['bins']} AIC={fit.aic:.3f}; wrote {out}")
    return EXIT_OK


def cmd_fit_weibull(cfg: dict) -> int:
    data = _load(cfg)
    try:
        fit = fit_weibull_nph(data)
    except FitError as exc:
        raise FitFailure(str(exc)) from None
    model = "weibull" + ("-ph" if cfg["ph_mode"] else "-nph")
    summary = summarize_mle(fit, data, model)
    out = _out_dir(cfg)
    _write_summary(out, summary)
    _fit_record(out, cfg, data, summary)
    _manifest("fit-weibull", cfg, out, input=_data_block(cfg, data))
    print(f"{model}: kappa={np.round(fit.kappa, 4).tolist()} lambda={np.round(fit.lam, 4).tolist()} "
          f"AIC={summary.ic['aic']:.3f}; wrote {out}")
    return EXIT_OK


def _read_fit(path: str) -> dict:
    f = Path(path) / "fit.json"
    try:
        return json.loads(f.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {f}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise IoFailure(f"{f}: malformed JSON ({exc.msg})") from None


def cmd_compare(cfg: dict) -> int:
    if len(cfg["fits"]) < 2:
        raise ConfigInvalid("compare needs at least two fit directories")
    if not cfg.get("data"):
        raise ConfigInvalid("--data is required")
    fits = [_read_fit(p) for p in cfg["fits"]]
    data_hash = _sha256_file(cfg["data"])
    hashes = {f["data_sha256"] for f in fits}
    if len(hashes) > 1 or data_hash not in hashes:
        raise ConfigInvalid(
            "dataset-hash mismatch: fits were run on different data ("
            + ", ".join(f"{p}={f['data_sha256'][:12]}" for p, f in zip(cfg["fits"], fits))
            + f"; --data={data_hash[:12]})")
    rows = []
    for path, f in zip(cfg["fits"], fits):
        grid = TimeGrid(f["grid"]["M"], tuple(f["grid"]["boundaries"]))
        sub = dict(f["schema"], data=cfg["data"], grid_m=grid.M, horizon=grid.horizon, ph_mode=f["ph_mode"])
        data = _load(sub, grid=grid)
        ts = cfg["t_grid"] or [grid.horizon * q / 10 for q in range(1, 10)]
        row = {"fit": path, "model": f["model"]}
        row.update({k: f["ic"].get(k) for k in ("neg2loglik", "n_params", "p_d", "dic", "bic", "aic")})
        for t in ts:
            try:
                row[f"gof@{t:g}"] = gof(t, survival_from_point(f["model"], f["point"], data, t), data)
            except GofUndefinedError:
                row[f"gof@{t:g}"] = None
        rows.append(row)
    keys = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for r in rows:
        w.writerow(["" if r.get(k) is None else (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in keys])
    out = _out_dir(cfg)
    (out / "comparison.csv").write_text(buf.getvalue(), encoding="utf-8")
    _write_json(out / "comparison.json", rows)
    _manifest("compare", cfg, out, input={"path": cfg["data"], "sha256": data_hash})
    _print_table(rows, keys)
    return EXIT_OK


def _print_table(rows: list[dict], keys: list[str]) -> None:
    def fmt(v):
        if v is None:
            return "-"
        return f"{v:.4g}" if isinstance(v, float) else str(v)

    cells = [[fmt(r.get(k)) for k in keys] for r in rows]
    widths = [max(len(k), *(len(c[i]) for c in cells)) for i, k in enumerate(keys)]
    print("  ".join(k.ljust(wd) for k, wd in zip(keys, widths)))
    for c in cells:
        print("  ".join(v.ljust(wd) for v, wd in zip(c, widths)))


def cmd_diagnose(cfg: dict) -> int:
    if not cfg.get("run"):
        raise ConfigInvalid("--run is required")
    run_dir = Path(cfg["run"])
    f = _read_fit(str(run_dir))
    if "layout" not in f:
        raise ConfigInvalid(f"{run_dir} is not an MRH fit")
    layout = ChainLayout.from_dict(f["layout"])
    try:
        chains = [read_chain(run_dir / name, layout) for name in f["chain_files"]]
    except OSError as exc:
        raise IoFailure(f"cannot read chain: {exc.strerror}") from None
    except ValueError as exc:
        raise IoFailure(str(exc)) from None
    cols = layout.columns()
    moving = [i for i in range(len(cols)) if any(np.ptp(c.draws[:, i]) > 0 for c in chains)]
    report: dict[str, Any] = {"columns": [cols[i] for i in moving], "geweke": {}, "rhat": {}}
    try:
        for ci, c in enumerate(chains):
            g = geweke(c.draws[:, moving])
            report["geweke"][str(ci)] = dict(zip(report["columns"], g.z.tolist()))
    except ValueError as exc:
        print(f"warning: geweke skipped: {exc}", file=sys.stderr)
    if len(chains) >= 2:
        r = gelman_rubin([c.draws[:, moving] for c in chains])
        report["rhat"] = dict(zip(report["columns"], r.tolist()))
        report["max_rhat"] = float(np.max(r)) if r.size else 1.0
    out = Path(cfg["out"]) if cfg["out"] != "run" else run_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "diagnostics.json", report)
    worst = max(report["rhat"].items(), key=lambda kv: kv[1]) if report["rhat"] else None
    zmax = max((abs(z) for g in report["geweke"].values() for z in g.values()), default=0.0)
    print(f"chains={len(chains)} draws={len(chains[0])} max|geweke z|={zmax:.3f}"
          + (f" max R-hat={worst[1]:.4f} ({worst[0]})" if worst else ""))
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "fit-mrh": cmd_fit_mrh,
    "fit-pe": cmd_fit_pe,
    "fit-weibull": cmd_fit_weibull,
    "compare": cmd_compare,
    "diagnose": cmd_diagnose,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which is also our config-invalid status
        return int(exc.code or 0)
    try:
        cfg = resolve(ns.command, ns)
        return HANDLERS[ns.command](cfg)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
