"""Simulation designs: the four point-exposure designs (outcome Y1/Y2 crossed
with treatment A1/A2), the two-period longitudinal design, and
counterfactual truths under interventions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtr

from ..data import PanelDataset, PointDataset
from ..regimes import DynamicRegime, FixedRule, NaturalRule, ThresholdRule, as_dynamic

N_TRUTH = 100_000

# stream ids; each variable draws from its own counter-based stream
_S_U, _S_L, _S_Z, _S_A, _S_Y = 1, 2, 3, 4, 5


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Philox generator keyed by (seed, stream id)."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, int(stream_id)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class PointDGPSpec:
    outcome: str = "Y1"
    treatment: str = "A1"
    n: int = 5000
    seed: int = 0
    noiseless: bool = False

    def __post_init__(self):
        object.__setattr__(self, "outcome", self.outcome.upper())
        object.__setattr__(self, "treatment", self.treatment.upper())
        if self.outcome not in ("Y1", "Y2") or self.treatment not in ("A1", "A2"):
            raise ValueError(f"unknown design ({self.outcome}, {self.treatment})")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def name(self) -> str:
        return f"{self.outcome}{self.treatment}".lower()

    def replace(self, **kw) -> "PointDGPSpec":
        d = dict(outcome=self.outcome, treatment=self.treatment, n=self.n, seed=self.seed,
                 noiseless=self.noiseless)
        d.update(kw)
        return PointDGPSpec(**d)


def treatment_probability(design: str, z, u, l):
    if design == "A1":
        return 0.7 * ndtr(-2.0 * z + 2.0 * l) + 0.3 * ndtr(3.0 * u - l)
    return expit(z - l + u)


def outcome_mean(design: str, a, u, l):
    if design == "Y1":
        return 2.0 * u - 2.0 * l + 4.0 * a * l
    return (1 - a) * (3.0 * np.cos(2.0 * u) - 3.0 * np.cos(2.0 * l)) + a * (3.0 * np.sin(2.0 * u) + 2.0 * l)


def simulate_point(spec: PointDGPSpec) -> dict:
    """All variables of one draw, latents included."""
    n, s = spec.n, spec.seed
    u = stream(s, _S_U).uniform(-1.0, 1.0, n)
    l = stream(s, _S_L).uniform(-1.0, 1.0, n)
    ez = 0.0 if spec.noiseless else stream(s, _S_Z).standard_normal(n)
    z = l + np.sin(3.0 * l) + 2.0 * ez
    p = treatment_probability(spec.treatment, z, u, l)
    a = (stream(s, _S_A).uniform(size=n) < p).astype(np.int64)
    ey = 0.0 if spec.noiseless else stream(s, _S_Y).standard_normal(n)
    y = outcome_mean(spec.outcome, a, u, l) + ey
    return {"u": u, "l": l, "z": z, "a_prob": p, "a": a, "y": y}


def generate_point(spec: PointDGPSpec, debug_latents: bool = False) -> PointDataset:
    v = simulate_point(spec)
    return PointDataset(z=v["z"], a=v["a"], y=v["y"], l=v["l"], treatment_levels=2,
                        u=v["u"] if debug_latents else None)


def point_truths(spec: PointDGPSpec, nodes: int = 64) -> dict:
    """E[Y(1)], E[Y(0)] and the ATE by Gauss-Legendre quadrature over (U, L)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    w = w / 2.0
    uu, ll = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    m1 = float((outcome_mean(spec.outcome, 1, uu, ll) * ww).sum())
    m0 = float((outcome_mean(spec.outcome, 0, uu, ll) * ww).sum())
    # values below float resolution of the integrand are symmetric zeros
    m1, m0 = (0.0 if abs(v) < 1e-13 else v for v in (m1, m0))
    return {"treated": m1, "control": m0, "ate": m1 - m0}


# ------------------------------------------------------------ longitudinal

@dataclass(frozen=True)
class LongitudinalDGPSpec:
    n: int = 5000
    seed: int = 0
    noiseless: bool = False
    confounded: bool = True

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def name(self) -> str:
        return "long-t1"

    def replace(self, **kw) -> "LongitudinalDGPSpec":
        d = dict(n=self.n, seed=self.seed, noiseless=self.noiseless, confounded=self.confounded)
        d.update(kw)
        return LongitudinalDGPSpec(**d)


def _decide(rule, t, natural, hist, names, cut):
    if rule is None or isinstance(rule, NaturalRule):
        return natural
    if isinstance(rule, FixedRule):
        return np.full(natural.shape, rule.level, dtype=np.int64)
    return rule.assign(hist, names, cut)


def simulate_longitudinal(spec: LongitudinalDGPSpec, regime: DynamicRegime | None = None,
                          cutoffs: dict | None = None) -> dict:
    """Sequential simulation; with a ``regime`` each A_t is replaced by the
    rule's assignment before downstream variables are drawn."""
    n, s = spec.n, spec.seed
    g = {k: stream(s, 10 + k) for k in range(12)}
    k = 0.0 if spec.noiseless else 1.0
    cu = 1.0 if spec.confounded else 0.0
    rules = regime.rules if regime is not None else (None, None)
    cutoffs = cutoffs or {}
    l0 = 1.5 * k * g[0].standard_normal(n)
    u0 = cu * 1.5 * k * g[1].standard_normal(n)
    z0 = 0.3 * l0 + np.sin(1.5 * l0) + 2.0 * k * g[2].standard_normal(n)
    p0 = 0.7 * ndtr(-2.0 * z0 + 0.6 * l0) + 0.3 * ndtr(3.0 * u0 - l0)
    a0_nat = (g[3].uniform(size=n) < p0).astype(np.int64)
    h0 = l0[:, None]
    a0 = _decide(rules[0], 0, a0_nat, h0, ["l0"], cutoffs.get(0))
    l1 = (a0 - 0.5) + 0.5 * l0 + 0.3 * u0 + 0.5 * k * g[4].standard_normal(n)
    u1 = cu * ((a0 - 0.5) + 0.5 * u0 + 0.3 * l1 + 0.5 * k * g[5].standard_normal(n))
    z1 = 0.5 * l1 - 0.5 * (a0 - 0.5) - 0.3 * z0 + 2.0 * k * g[6].standard_normal(n)
    p1 = 0.7 * ndtr(-2.0 * z1 + l1) + 0.3 * ndtr(3.0 * u1 - l1)
    a1_nat = (g[7].uniform(size=n) < p1).astype(np.int64)
    h1 = np.column_stack([z0, a0, l0, l1])
    a1 = _decide(rules[1], 1, a1_nat, h1, ["z0", "a0", "l0", "l1"], cutoffs.get(1))
    y = (a1 - 0.5) + 2.0 * l1 + u1 + 0.5 * k * g[8].standard_normal(n)
    return {"l0": l0, "u0": u0, "z0": z0, "p0": p0, "a0": a0, "l1": l1, "u1": u1, "z1": z1,
            "p1": p1, "a1": a1, "y": y}


def generate_longitudinal(spec: LongitudinalDGPSpec, debug_latents: bool = False) -> PanelDataset:
    v = simulate_longitudinal(spec)
    data = PanelDataset(
        ids=np.arange(spec.n),
        z=(v["z0"], v["z1"]),
        a=(v["a0"], v["a1"]),
        l=(v["l0"], v["l1"]),
        y=v["y"],
        treatment_levels=(2, 2),
    )
    if debug_latents:
        object.__setattr__(data, "latents", {"u0": v["u0"], "u1": v["u1"]})
    return data


def longitudinal_closed_form_truth(regime) -> float | None:
    """E[Y(regime)] in closed form for the rules the design admits.

    Under the design E[Y | do(a0, a1)] = (a1 - 1/2) + 3.3 (a0 - 1/2), and
    E[A0] = 1/2 by the symmetry of the period-0 laws, so a natural first
    period contributes 0.  Threshold rules have no closed form (None).
    """
    regime = as_dynamic(regime)
    if regime.horizon != 1:
        raise ValueError("the longitudinal design has horizon T=1")
    r0, r1 = regime.rules
    if isinstance(r0, ThresholdRule) or not isinstance(r1, FixedRule):
        return None
    a1 = r1.level - 0.5
    a0 = 0.0 if isinstance(r0, NaturalRule) else r0.level - 0.5
    return a1 + 3.3 * a0


def period0_treatment_rate(nodes: int = 80) -> float:
    """Pr(A0 = 1) by Gauss-Hermite quadrature over (L0, U0, Z0 noise)."""
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    l0 = 1.5 * x[:, None, None]
    u0 = 1.5 * x[None, :, None]
    z0 = 0.3 * l0 + np.sin(1.5 * l0) + 2.0 * x[None, None, :]
    p = 0.7 * ndtr(-2.0 * z0 + 0.6 * l0) + 0.3 * ndtr(3.0 * u0 - l0)
    return float(np.einsum("ijk,i,j,k->", p, w, w, w))


def compute_truth_by_intervention(spec, regime, n_truth: int = N_TRUTH, seed: int | None = None) -> float:
    """Mean outcome when treatments are set by ``regime`` in a re-simulation.

    Threshold cutpoints are taken from the observational (natural-regime)
    history at the same seed, matching how the estimator learns them from
    observed data.
    """
    if isinstance(spec, PointDGPSpec):
        level = regime if isinstance(regime, (int, np.integer)) else as_dynamic(regime).rules[0].level
        v = simulate_point(spec.replace(n=n_truth, seed=spec.seed if seed is None else seed))
        eps = 0.0 if spec.noiseless else stream(spec.seed if seed is None else seed, _S_Y).standard_normal(n_truth)
        return float(np.mean(outcome_mean(spec.outcome, level, v["u"], v["l"]) + eps))
    regime = as_dynamic(regime)
    sim_spec = spec.replace(n=n_truth, seed=spec.seed if seed is None else seed)
    cutoffs = {}
    if any(isinstance(r, ThresholdRule) for r in regime.rules):
        obs = simulate_longitudinal(sim_spec)
        hist = {0: (obs["l0"][:, None], ["l0"]),
                1: (np.column_stack([obs["z0"], obs["a0"], obs["l0"], obs["l1"]]), ["z0", "a0", "l0", "l1"])}
        for t, r in enumerate(regime.rules):
            if isinstance(r, ThresholdRule):
                cutoffs[t] = r.cutoff(*hist[t])
    return float(np.mean(simulate_longitudinal(sim_spec, regime, cutoffs)["y"]))


DGP_NAMES = ("y1a1", "y2a1", "y1a2", "y2a2", "long-t1", "oracle-aiv", "oracle-miv", "oracle-long")


def point_spec_from_name(name: str, n: int, seed: int) -> PointDGPSpec:
    name = name.lower()
    if len(name) != 4 or name[0] != "y" or name[2] != "a":
        raise ValueError(f"unknown DGP {name!r}; valid names: {', '.join(DGP_NAMES)}")
    return PointDGPSpec(outcome=name[:2].upper(), treatment=name[2:].upper(), n=n, seed=seed)
