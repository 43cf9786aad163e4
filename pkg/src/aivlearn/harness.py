"""Monte Carlo runner: replicate an estimator over simulated datasets and
summarise bias, mean standard error, empirical SD and coverage."""

from __future__ import annotations

import csv
import io
import sys
from dataclasses import dataclass, field

import numpy as np

from .data import DataError
from .dgp import oracle as oracle_mod
from .dgp.simulate import (
    LongitudinalDGPSpec,
    PointDGPSpec,
    compute_truth_by_intervention,
    generate_longitudinal,
    generate_point,
    longitudinal_closed_form_truth,
    point_truths,
)
from .nuisance.bundles import WeakInstrumentError
from .nuisance.spline import RegressorSpec
from .regimes import DynamicRegime, as_dynamic
from .weights import WeightingFunctionSpec

MAX_FAILURE_FRACTION = 0.05


class MonteCarloAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    """What to estimate on each replicate.

    kind:
      ``point``          treated mean, control mean and ATE (``adaptive`` or ``pi``)
      ``ate`` / ``mean`` single point estimand (``level`` for ``mean``)
      ``miv``            multiplicative-IV mean of ``level``
      ``longitudinal``   one report per entry of ``regimes`` (``adaptive`` optional)
      ``truth``          returns the truth itself (harness self-check)
    """

    kind: str = "point"
    adaptive: bool = False
    pi: str = "identity:0"
    level: int = 1
    regimes: tuple = ()
    K: int = 2
    spec: RegressorSpec = field(default_factory=RegressorSpec)

    def weighting(self) -> WeightingFunctionSpec:
        return WeightingFunctionSpec.parse(self.pi)

    def labels(self) -> list:
        if self.kind == "point":
            return ["treated", "control", "ate"]
        if self.kind == "longitudinal":
            return [as_dynamic(r).label for r in self.regimes]
        if self.kind == "ate":
            return ["ate"]
        return [f"mean[{self.level}]"]


@dataclass
class ReplicateRecord:
    rep: int
    seed: int
    estimand: str
    psi_hat: float = float("nan")
    std_error: float = float("nan")
    ci_lower: float = float("nan")
    ci_upper: float = float("nan")
    status: str = "ok"


@dataclass
class MonteCarloSummary:
    estimand: str
    R: int
    truth: float
    truth_source: str
    bias: float
    se: float
    sd: float
    cr: float
    failures: int = 0
    records: list = field(default_factory=list)

    def as_row(self) -> dict:
        return {"estimand": self.estimand, "R": self.R, "truth": self.truth, "truth_source": self.truth_source,
                "bias": self.bias, "se": self.se, "sd": self.sd, "cr": self.cr, "failures": self.failures}


# ------------------------------------------------------------------ truths

def _dgp_kind(dgp):
    if isinstance(dgp, PointDGPSpec):
        return "point"
    if isinstance(dgp, LongitudinalDGPSpec):
        return "longitudinal"
    if isinstance(dgp, (oracle_mod.DiscreteOracleSpec, oracle_mod.LongitudinalOracleSpec)):
        return "oracle"
    raise ValueError(f"unsupported DGP {dgp!r}")


def resolve_truths(dgp, config: EstimatorConfig, n_truth: int = 100_000, truth_seed: int = 2024) -> dict:
    """label -> (truth, source); enumeration > closed form > re-simulation."""
    kind = _dgp_kind(dgp)
    labels = config.labels()
    out = {}
    if kind == "oracle":
        orc = oracle_mod.enumerate_oracle(dgp)
        if isinstance(orc, oracle_mod.PointOracle):
            vals = {"treated": orc.mean_po(1), "control": orc.mean_po(0), "ate": orc.ate(),
                    f"mean[{config.level}]": orc.mean_po(config.level)}
            return {lab: (vals[lab], "enumeration") for lab in labels}
        for r in config.regimes:
            reg = as_dynamic(r)
            levels = tuple(getattr(rule, "level", None) for rule in reg.rules)
            out[reg.label] = (orc.truth(levels), "enumeration")
        return out
    if kind == "point":
        t = point_truths(dgp)
        vals = {"treated": t["treated"], "control": t["control"], "ate": t["ate"], "mean[1]": t["treated"],
                "mean[0]": t["control"]}
        return {lab: (vals[lab], "closed form") for lab in labels}
    for r in config.regimes:
        reg = as_dynamic(r)
        cf = longitudinal_closed_form_truth(reg)
        if cf is not None:
            out[reg.label] = (cf, "closed form")
        else:
            out[reg.label] = (compute_truth_by_intervention(dgp, reg, n_truth, truth_seed), "re-simulation")
    return out


# -------------------------------------------------------------- replicates

def _generate(dgp, seed):
    kind = _dgp_kind(dgp)
    if kind == "point":
        return generate_point(dgp.replace(seed=seed))
    if kind == "longitudinal":
        return generate_longitudinal(dgp.replace(seed=seed))
    raise ValueError("oracle designs are sampled through run_monte_carlo's n argument")


def run_replicate(dgp, config: EstimatorConfig, seed: int, n: int | None = None, truths=None) -> dict:
    """label -> (psi_hat, std_error, ci_lower, ci_upper) for one replicate."""
    from . import longitudinal as long_mod
    from . import point

    if _dgp_kind(dgp) == "oracle":
        data = oracle_mod.sample_oracle(oracle_mod.enumerate_oracle(dgp), n or 1000, seed)
    else:
        data = _generate(dgp, seed)
    K, spec = config.K, config.spec

    def pack(rep):
        return (rep.psi_hat, rep.std_error, rep.ci_lower, rep.ci_upper)

    if config.kind == "truth":
        return {lab: (truths[lab], 0.0, truths[lab], truths[lab]) for lab in config.labels()}
    if config.kind == "point":
        fam = point.estimate_point_family(data, config.adaptive, config.weighting(), K, seed, spec)
        return {lab: pack(fam[lab]) for lab in config.labels()}
    if config.kind == "ate":
        if config.adaptive:
            return {"ate": pack(point.estimate_ate_adaptive(data, K, seed, spec))}
        return {"ate": pack(point.estimate_ate_fixed_pi(data, config.weighting(), K, seed, spec))}
    if config.kind == "mean":
        pi = WeightingFunctionSpec.fitted_propensity(config.level) if config.adaptive else config.weighting()
        return {config.labels()[0]: pack(point.estimate_mean_po(data, config.level, pi, K, seed, spec))}
    if config.kind == "miv":
        return {config.labels()[0]: pack(point.estimate_mean_po_miv(data, config.level, config.weighting(), K,
                                                                     seed, spec))}
    if config.kind == "longitudinal":
        reps = long_mod.estimate_longitudinal_family(data, config.regimes, K, seed, spec, adaptive=config.adaptive)
        return {lab: pack(rep) for lab, rep in reps.items()}
    raise ValueError(f"unknown estimator kind {config.kind!r}")


def _one(args):
    dgp, config, rep, seed, n, truths = args
    try:
        return rep, seed, run_replicate(dgp, config, seed, n, truths), "ok"
    except (WeakInstrumentError, DataError, FloatingPointError) as e:
        return rep, seed, None, f"{type(e).__name__}: {e}"


def run_monte_carlo(dgp, config: EstimatorConfig, R: int, base_seed: int = 0, n_jobs: int = 1,
                    n: int | None = None, truths: dict | None = None, progress: bool = False) -> dict:
    """Run R replicates with seeds base_seed + rep; return label -> summary.

    Replicates that fail with a weak-instrument (or data) error are
    recorded and excluded; more than 5% failures raises
    :class:`MonteCarloAbort`.  ``n_jobs > 1`` distributes replicates over
    processes with identical results.
    """
    if R < 2:
        raise ValueError("need at least 2 replicates")
    truths = truths or {k: v for k, v in resolve_truths(dgp, config).items()}
    truth_vals = {k: v[0] if isinstance(v, tuple) else v for k, v in truths.items()}
    tasks = [(dgp, config, rep, base_seed + rep, n, truth_vals) for rep in range(R)]
    if n_jobs == 1:
        results = []
        for i, t in enumerate(tasks):
            results.append(_one(t))
            if progress:
                print(f"\rreplicate {i + 1}/{R}", end="", file=sys.stderr, flush=True)
        if progress:
            print(file=sys.stderr)
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_one)(t) for t in tasks)
    results.sort(key=lambda r: r[0])
    return summarize_replicates(results, config.labels(), truths)


def summarize_replicates(results, labels, truths) -> dict:
    failures = [r for r in results if r[2] is None]
    if len(failures) > MAX_FAILURE_FRACTION * len(results):
        raise MonteCarloAbort(f"{len(failures)} of {len(results)} replicates failed "
                              f"(limit {MAX_FAILURE_FRACTION:.0%}); first: {failures[0][3]}")
    out = {}
    for lab in labels:
        truth = truths[lab]
        value, source = truth if isinstance(truth, tuple) else (truth, "given")
        records = []
        for rep, seed, vals, status in results:
            if vals is None:
                records.append(ReplicateRecord(rep, seed, lab, status=status))
            else:
                records.append(ReplicateRecord(rep, seed, lab, *vals[lab]))
        ok = [r for r in records if r.status == "ok"]
        est = np.array([r.psi_hat for r in ok])
        se = np.array([r.std_error for r in ok])
        covered = np.array([r.ci_lower <= value <= r.ci_upper for r in ok])
        out[lab] = MonteCarloSummary(
            estimand=lab, R=len(ok), truth=value, truth_source=source,
            bias=float(est.mean() - value), se=float(se.mean()),
            sd=float(est.std(ddof=1)) if len(est) > 1 else 0.0, cr=float(covered.mean()),
            failures=len(records) - len(ok), records=records,
        )
    return out


def records_csv(summaries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["rep", "seed", "estimand", "psi_hat", "std_error", "ci_lower", "ci_upper", "status"])
    for s in summaries:
        for r in s.records:
            w.writerow([r.rep, r.seed, r.estimand, repr(r.psi_hat), repr(r.std_error), repr(r.ci_lower),
                        repr(r.ci_upper), r.status])
    return buf.getvalue()


# ------------------------------------------------------------------ tables

TABLE1_CELLS = ("y1a1", "y2a1", "y1a2", "y2a2")
TABLE1_ARMS = ("treated", "control", "ate")
TABLE2_REGIMES = ("(0,0)", "(0,1)", "(1,0)", "(1,1)", "(A0,0)", "(A0,1)")
METRICS = (("Bias", "bias"), ("SE", "se"), ("SD", "sd"), ("CR", "cr"))


def _fmt(metric, v):
    return f"{v:.3f}" if metric == "cr" else f"{v:.4f}"


def emit_table(summaries: dict, layout: str = "generic") -> tuple[str, str]:
    """Format summaries as (text, csv).

    ``table1`` expects keys (cell, estimator) with estimator in
    {"adaptive", "prespecified"} and values {arm: summary}; ``table2``
    expects keys n with values {regime label: summary}.  Any other shape,
    or an incomplete grid, falls back to the generic long layout.
    """
    if layout == "table1" and _is_table1(summaries):
        return _table1(summaries)
    if layout == "table2" and _is_table2(summaries):
        return _table2(summaries)
    return _generic(summaries)


def _flatten(summaries):
    for key, val in summaries.items():
        if isinstance(val, MonteCarloSummary):
            yield (key,), val
        else:
            for sub, s in val.items():
                yield (key, sub), s


def _generic(summaries):
    header = ["group", "estimand", "R", "truth", "Bias", "SE", "SD", "CR", "failures"]
    lines = ["\t".join(header)]
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for key, s in _flatten(summaries):
        group = "/".join(str(k) for k in key[:-1]) if len(key) > 1 else ""
        row = [group, s.estimand, s.R, f"{s.truth:.4f}", _fmt("bias", s.bias), _fmt("se", s.se),
               _fmt("sd", s.sd), _fmt("cr", s.cr), s.failures]
        lines.append("\t".join(str(v) for v in row))
        w.writerow([group, s.estimand, s.R, repr(s.truth), repr(s.bias), repr(s.se), repr(s.sd), repr(s.cr),
                    s.failures])
    return "\n".join(lines) + "\n", buf.getvalue()


def _is_table1(summaries):
    want = {(c, e) for c in TABLE1_CELLS for e in ("adaptive", "prespecified")}
    return set(summaries) == want and all(set(v) >= set(TABLE1_ARMS) for v in summaries.values())


def _is_table2(summaries):
    return bool(summaries) and all(isinstance(v, dict) and set(v) >= set(TABLE2_REGIMES) for v in summaries.values())


def _table1(summaries):
    cols = [f"{e[:5].capitalize()}-{arm}" for e in ("adaptive", "prespecified") for arm in ("T", "C", "ATE")]
    lines = ["cell\tmetric\t" + "\t".join(cols)]
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["cell", "metric"] + cols)
    for cell in TABLE1_CELLS:
        for name, attr in METRICS:
            vals = [getattr(summaries[(cell, e)][arm], attr) for e in ("adaptive", "prespecified")
                    for arm in TABLE1_ARMS]
            if attr == "bias":
                vals = [abs(v) for v in vals]
            lines.append(f"{cell}\t{name}\t" + "\t".join(_fmt(attr, v) for v in vals))
            w.writerow([cell, name] + [repr(v) for v in vals])
    return "\n".join(lines) + "\n", buf.getvalue()


def _table2(summaries):
    lines = ["n\tmetric\t" + "\t".join(TABLE2_REGIMES)]
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["n", "metric"] + list(TABLE2_REGIMES))
    for n in sorted(summaries):
        for name, attr in METRICS:
            vals = [getattr(summaries[n][r], attr) for r in TABLE2_REGIMES]
            if attr == "bias":
                vals = [abs(v) for v in vals]
            lines.append(f"{n}\t{name}\t" + "\t".join(_fmt(attr, v) for v in vals))
            w.writerow([n, name] + [repr(v) for v in vals])
    return "\n".join(lines) + "\n", buf.getvalue()


def table1_config(adaptive: bool, spec: RegressorSpec | None = None, K: int = 2) -> EstimatorConfig:
    return EstimatorConfig(kind="point", adaptive=adaptive, K=K, spec=spec or RegressorSpec())


def table2_config(spec: RegressorSpec | None = None, K: int = 2) -> EstimatorConfig:
    regimes = tuple(DynamicRegime.parse(r) for r in TABLE2_REGIMES)
    return EstimatorConfig(kind="longitudinal", regimes=regimes, K=K, spec=spec or RegressorSpec())

