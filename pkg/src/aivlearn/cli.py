"""Command-line interface.

Subcommands: simulate, estimate, montecarlo, bootstrap, diagnose.  Every
option can also come from a TOML file given with ``--config``; keys are the
long option names (dashes or underscores), either at top level or inside a
table named after the subcommand.  Explicit flags override the file, and
unknown keys are rejected before anything is computed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import SCHEMA_VERSION, DataError, load_panel_csv, load_point_csv, write_panel_csv, write_point_csv
from .nuisance.spline import RegressorSpec
from .regimes import DynamicRegime
from .weights import WeightingFunctionSpec

COMMANDS = ("simulate", "estimate", "montecarlo", "bootstrap", "diagnose")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------- config

DEFAULTS = {
    "simulate": dict(dgp=None, n=5000, seed=0, out=None, debug_latents=False),
    "estimate": dict(input=None, design="point", estimator="fixed", weight="identity:0", level=None,
                     regime=None, folds=2, seed=0, out=None, a0=None, bootstrap=200, instrument=0),
    "montecarlo": dict(dgp=None, preset=None, estimator="fixed", weight="identity:0", level=1, regime=[],
                       reps=100, jobs=1, n=5000, seed=0, folds=2, out=None, progress=False),
    "bootstrap": dict(input=None, estimator="fixed", weight="identity:0", level=None, reps=200, seed=0,
                      folds=2, out=None, a0=None),
    "diagnose": dict(input=None, check="aiv", pi1=None, pi2=None, level=None, folds=2, seed=0, reps=200,
                     out=None),
}
REGRESSOR_KEYS = dict(basis="pspline", knots=20, covariance="residual")
for _d in DEFAULTS.values():
    _d["config"] = None
for _c in ("estimate", "montecarlo", "bootstrap", "diagnose"):
    DEFAULTS[_c].update(REGRESSOR_KEYS)


@dataclass
class RunConfig:
    """Validated parameters of one CLI invocation."""

    command: str
    params: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        # where results go and which file supplied the options do not change them
        kept = {k: v for k, v in self.params.items() if k not in ("out", "config")}
        blob = json.dumps({"command": self.command, **kept}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "seed": self.params.get("seed"),
                "aivlearn_version": __version__, "numpy_version": np.__version__,
                "params": {k: v for k, v in self.params.items() if k != "config"}}

    def regressor(self) -> RegressorSpec:
        return RegressorSpec(basis=self.params["basis"], n_knots=int(self.params["knots"]),
                             covariance=self.params["covariance"])

    def __getattr__(self, name):
        try:
            return self.__dict__["params"][name]
        except KeyError:
            raise AttributeError(name) from None


def load_config_file(path, command: str) -> dict:
    import tomli

    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    with p.open("rb") as fh:
        try:
            raw = tomli.load(fh)
        except tomli.TOMLDecodeError as e:
            raise UsageError(f"config file {p}: {e}") from None
    merged = {}
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in COMMANDS:
                raise UsageError(f"unknown config table [{key}]")
            if key == command:
                merged.update({k.replace("-", "_"): v for k, v in val.items()})
        else:
            merged[key.replace("-", "_")] = val
    allowed = set(DEFAULTS[command])
    unknown = sorted(set(merged) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
    return merged


def resolve(command: str, flags: dict) -> RunConfig:
    params = dict(DEFAULTS[command])
    if flags.get("config"):
        params.update(load_config_file(flags["config"], command))
    params.update(flags)
    cfg = RunConfig(command, params)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    p = cfg.params
    need = {"simulate": ("dgp", "out"), "estimate": ("input", "out"), "bootstrap": ("input", "out"),
            "diagnose": ("input", "out"), "montecarlo": ("out",)}[cfg.command]
    for key in need:
        if p.get(key) in (None, ""):
            raise UsageError(f"--{key.replace('_', '-')} is required")
    if "folds" in p and int(p["folds"]) < 2:
        raise UsageError(f"--folds must be at least 2, got {p['folds']}")
    if "seed" in p and (not isinstance(p["seed"], int) or p["seed"] < 0):
        raise UsageError("--seed must be a non-negative integer")
    if cfg.command == "simulate":
        from .dgp.simulate import DGP_NAMES

        if p["dgp"] not in DGP_NAMES:
            raise UsageError(f"unknown DGP {p['dgp']!r}; valid names: {', '.join(DGP_NAMES)}")
        if int(p["n"]) < 1:
            raise UsageError("--n must be positive")
    if cfg.command == "estimate":
        if p["design"] not in ("point", "longitudinal"):
            raise UsageError(f"unknown design {p['design']!r}")
        allowed = ("fixed", "adaptive", "miv", "dose") if p["design"] == "point" else ("fixed", "adaptive", "dtr")
        if p["estimator"] not in allowed:
            raise UsageError(f"estimator {p['estimator']!r} is not available for the {p['design']} design; "
                             f"choose from {', '.join(allowed)}")
        if p["design"] == "longitudinal" and not p["regime"]:
            raise UsageError("--regime is required for the longitudinal design")
        if p["estimator"] == "miv" and p["level"] is None:
            raise UsageError("--level is required for the miv estimator")
        if p["estimator"] == "dose" and p["a0"] is None:
            raise UsageError("--a0 is required for the dose estimator")
    if cfg.command == "montecarlo":
        if p["preset"] not in (None, "table1", "table2"):
            raise UsageError(f"unknown preset {p['preset']!r}; valid presets: table1, table2")
        if p["preset"] is None and not p["dgp"]:
            raise UsageError("--dgp or --preset is required")
        if int(p["reps"]) < 2:
            raise UsageError("--reps must be at least 2")
        if int(p["jobs"]) < 1:
            raise UsageError("--jobs must be positive")
    if cfg.command == "bootstrap":
        if int(p["reps"]) < 50:
            raise UsageError(f"--reps must be at least 50, got {p['reps']}")
        if p["estimator"] not in ("fixed", "adaptive", "miv", "dose", "mean"):
            raise UsageError(f"unknown bootstrap estimator {p['estimator']!r}")
    if cfg.command == "diagnose":
        if p["check"] not in ("aiv", "confounding"):
            raise UsageError(f"unknown check {p['check']!r}")
        if p["check"] == "aiv" and (not p["pi1"] or not p["pi2"]):
            raise UsageError("the aiv check needs both --pi1 and --pi2")
        if p["check"] == "confounding" and p["level"] is None:
            raise UsageError("the confounding check needs --level")
    for key in ("weight", "pi1", "pi2"):
        if p.get(key):
            try:
                WeightingFunctionSpec.parse(p[key])
            except ValueError as e:
                raise UsageError(f"--{key}: {e}") from None
    regs = p.get("regime")
    for r in ([regs] if isinstance(regs, str) else regs or []):
        DynamicRegime.parse(r)
    if "basis" in p:
        cfg.regressor()


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aivlearn", description="Debiased estimation with additive instrumental variables.")
    parser.add_argument("--version", action="version", version=f"aivlearn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(p, regressor=True):
        p.add_argument("--config", default=S, help="TOML file with option values")
        if regressor:
            p.add_argument("--basis", choices=["pspline", "local_linear"], default=S)
            p.add_argument("--knots", type=int, default=S, help="interior spline knots per covariate")
            p.add_argument("--covariance", choices=["residual", "decomposition"], default=S)

    p = sub.add_parser("simulate", help="generate a dataset from a named design", argument_default=S)
    p.add_argument("--dgp")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--debug-latents", action="store_true", help="include the latent confounder columns")
    common(p, regressor=False)

    p = sub.add_parser("estimate", help="estimate a causal target from a CSV", argument_default=S)
    p.add_argument("--input")
    p.add_argument("--design", choices=["point", "longitudinal"])
    p.add_argument("--estimator", choices=["fixed", "adaptive", "miv", "dose", "dtr"])
    p.add_argument("--weight", help="identity:j, propensity[:level] or expr:<expression>")
    p.add_argument("--level", type=int, help="treatment level a for E[Y(a)] (default: ATE)")
    p.add_argument("--regime", help="e.g. '(1,0)', '(A0,1)' or '(l0>q0.5,1)'")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--a0", type=float, help="dose level for the dose estimator")
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates for the dose variance")
    p.add_argument("--instrument", type=int, help="instrument coordinate for longitudinal weights")
    p.add_argument("--out")
    common(p)

    p = sub.add_parser("montecarlo", help="repeat simulation and estimation", argument_default=S)
    p.add_argument("--dgp")
    p.add_argument("--preset", choices=["table1", "table2"])
    p.add_argument("--estimator", choices=["fixed", "adaptive", "miv", "truth"])
    p.add_argument("--weight")
    p.add_argument("--level", type=int)
    p.add_argument("--regime", action="append", help="repeatable; longitudinal designs only")
    p.add_argument("--reps", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int, help="base seed; replicate r uses seed + r")
    p.add_argument("--folds", type=int)
    p.add_argument("--progress", action="store_true")
    p.add_argument("--out", help="output prefix; writes <out>.json, <out>.csv, <out>.reps.csv")
    common(p)

    p = sub.add_parser("bootstrap", help="pairs bootstrap of a point estimator", argument_default=S)
    p.add_argument("--input")
    p.add_argument("--estimator", choices=["fixed", "adaptive", "miv", "dose", "mean"])
    p.add_argument("--weight")
    p.add_argument("--level", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--a0", type=float)
    p.add_argument("--out")
    common(p)

    p = sub.add_parser("diagnose", help="instrument and confounding diagnostics", argument_default=S)
    p.add_argument("--input")
    p.add_argument("--check", choices=["aiv", "confounding"])
    p.add_argument("--pi1")
    p.add_argument("--pi2")
    p.add_argument("--level", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--out")
    common(p)
    return parser


# --------------------------------------------------------------- commands

def _write_json(path, payload) -> None:
    from .data import _json_default

    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _envelope(cfg: RunConfig, body: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **body, "provenance": cfg.provenance()}


def cmd_simulate(cfg: RunConfig) -> None:
    from .dgp import oracle as oracle_mod
    from .dgp.simulate import LongitudinalDGPSpec, generate_longitudinal, generate_point, point_spec_from_name

    n, seed, name = int(cfg.n), int(cfg.seed), cfg.dgp
    if name == "long-t1":
        write_panel_csv(generate_longitudinal(LongitudinalDGPSpec(n=n, seed=seed)), cfg.out)
    elif name in oracle_mod.ORACLES:
        data = oracle_mod.sample_oracle(oracle_mod.enumerate_oracle(oracle_mod.ORACLES[name]()), n, seed)
        if name == "oracle-long":
            write_panel_csv(data, cfg.out)
        else:
            write_point_csv(data, cfg.out)
    else:
        data = generate_point(point_spec_from_name(name, n, seed), debug_latents=cfg.debug_latents)
        write_point_csv(data, cfg.out, include_latents=cfg.debug_latents)
    _write_json(str(cfg.out) + ".provenance.json", _envelope(cfg, {"rows": n}))


def _point_estimate(cfg: RunConfig, data, folds=None):
    from . import point

    spec = cfg.regressor()
    K, seed, level = int(cfg.folds), int(cfg.seed), cfg.level
    w = WeightingFunctionSpec.parse(cfg.weight)
    est = cfg.estimator
    if est == "dose":
        return point.estimate_dose_response(data, float(cfg.a0), w, spec, bootstrap=int(cfg.params.get(
            "bootstrap", 0) or 0), seed=seed)
    if data.treatment_levels is None:
        raise DataError(f"estimator {est!r} needs a discrete treatment")
    if est == "miv":
        return point.estimate_mean_po_miv(data, int(level), w, K, seed, spec, folds=folds)
    if est == "adaptive":
        w = WeightingFunctionSpec.fitted_propensity(1 if level is None else int(level))
    if level is None:
        return point.estimate_ate_fixed_pi(data, w, K, seed, spec, folds=folds)
    return point.estimate_mean_po(data, int(level), w, K, seed, spec, folds=folds)


def cmd_estimate(cfg: RunConfig) -> None:
    from . import longitudinal as long_mod

    if cfg.design == "point":
        data = load_point_csv(cfg.input)
        report = _point_estimate(cfg, data)
    else:
        data = load_panel_csv(cfg.input)
        regime = DynamicRegime.parse(cfg.regime)
        kw = dict(K=int(cfg.folds), seed=int(cfg.seed), spec=cfg.regressor(),
                  instrument_coordinate=int(cfg.instrument))
        if cfg.estimator == "adaptive":
            report = long_mod.estimate_longitudinal_adaptive(data, regime, **kw)
        elif cfg.estimator == "dtr" or not regime.is_static:
            report = long_mod.estimate_longitudinal_dtr(data, regime, **kw)
        else:
            report = long_mod.estimate_longitudinal_static(data, regime, **kw)
    _write_json(cfg.out, _envelope(cfg, report.to_dict()))


def _mc_jobs(cfg: RunConfig):
    """Yield (group key, dgp, estimator config, layout)."""
    from .dgp import oracle as oracle_mod
    from .dgp.simulate import LongitudinalDGPSpec, point_spec_from_name
    from .harness import TABLE1_CELLS, EstimatorConfig, table1_config, table2_config

    spec, K, n = cfg.regressor(), int(cfg.folds), int(cfg.n)
    if cfg.preset == "table1":
        for cell in TABLE1_CELLS:
            for label, adaptive in (("adaptive", True), ("prespecified", False)):
                yield (cell, label), point_spec_from_name(cell, n, 0), table1_config(adaptive, spec, K), "table1"
        return
    if cfg.preset == "table2":
        yield n, LongitudinalDGPSpec(n=n), table2_config(spec, K), "table2"
        return
    name = cfg.dgp
    regimes = tuple(DynamicRegime.parse(r) for r in cfg.regime)
    longitudinal = name in ("long-t1", "oracle-long")
    if cfg.estimator == "truth":
        kind = "truth"
    elif longitudinal:
        kind = "longitudinal"
    elif cfg.estimator == "miv":
        kind = "miv"
    else:
        kind = "point"
    if longitudinal and not regimes:
        raise UsageError("--regime is required for longitudinal designs")
    ec = EstimatorConfig(kind=kind, adaptive=cfg.estimator == "adaptive", pi=cfg.weight, level=int(cfg.level),
                         regimes=regimes, K=K, spec=spec)
    if name in oracle_mod.ORACLES:
        dgp = oracle_mod.ORACLES[name]()
    elif name == "long-t1":
        dgp = LongitudinalDGPSpec(n=n)
    else:
        try:
            dgp = point_spec_from_name(name, n, 0)
        except ValueError as e:
            raise UsageError(str(e)) from None
    yield name, dgp, ec, "generic"


def cmd_montecarlo(cfg: RunConfig) -> None:
    from .harness import emit_table, records_csv, run_monte_carlo

    results, layout = {}, "generic"
    for key, dgp, ec, layout in _mc_jobs(cfg):
        if cfg.progress:
            print(f"running {key}", file=sys.stderr)
        results[key] = run_monte_carlo(dgp, ec, int(cfg.reps), base_seed=int(cfg.seed), n_jobs=int(cfg.jobs),
                                       n=int(cfg.n), progress=cfg.progress)
    text, table_csv = emit_table(results, layout)
    out = str(cfg.out)
    Path(out + ".csv").write_text(table_csv, encoding="utf-8")
    Path(out + ".txt").write_text(text, encoding="utf-8")
    flat = [s for v in results.values() for s in v.values()]
    Path(out + ".reps.csv").write_text(records_csv(flat), encoding="utf-8")
    summary = [{"group": str(k), **s.as_row()} for k, v in results.items() for s in v.values()]
    _write_json(out + ".json", _envelope(cfg, {"summaries": summary}))
    sys.stdout.write(text)


def cmd_bootstrap(cfg: RunConfig) -> None:
    from .point import pairs_bootstrap

    data = load_point_csv(cfg.input)
    if cfg.estimator == "mean":
        def stat(d):
            return float(np.mean(d.y))
    else:
        def stat(d):
            return _point_estimate(cfg, d)
    res = pairs_bootstrap(stat, data, int(cfg.reps), int(cfg.seed))
    _write_json(cfg.out, _envelope(cfg, {"estimator": cfg.estimator, **res.to_dict()}))


def cmd_diagnose(cfg: RunConfig) -> None:
    from .point import diagnose_aiv, diagnose_latent_confounding

    data = load_point_csv(cfg.input)
    common = dict(K=int(cfg.folds), seed=int(cfg.seed), spec=cfg.regressor(), B=int(cfg.reps))
    if cfg.check == "aiv":
        res = diagnose_aiv(data, WeightingFunctionSpec.parse(cfg.pi1), WeightingFunctionSpec.parse(cfg.pi2),
                           a=cfg.level, **common)
    else:
        pi = WeightingFunctionSpec.parse(cfg.pi1) if cfg.pi1 else None
        res = diagnose_latent_confounding(data, int(cfg.level), pi, **common)
    _write_json(cfg.out, _envelope(cfg, {"check": cfg.check, **res.to_dict()}))


HANDLERS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "montecarlo": cmd_montecarlo,
            "bootstrap": cmd_bootstrap, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        flags = {k: v for k, v in vars(ns).items() if k != "command"}
        cfg = resolve(ns.command, flags)
        HANDLERS[cfg.command](cfg)
    except UsageError as e:
        print(f"error: usage: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except Exception as e:  # noqa: BLE001 - single-line report is the contract
        msg = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
