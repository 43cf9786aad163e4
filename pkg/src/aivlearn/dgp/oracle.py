"""Small-support discrete designs whose joint law is enumerated exactly.

Every functional the estimators target (conditional means, covariances,
counterfactual means) is computed here by finite sums over the joint
support, so identification identities and influence-function properties
can be checked to floating-point precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..data import PanelDataset, PointDataset

ENUM_CAP = 1_000_000


class OracleError(ValueError):
    pass


def group_mean(values, prob, *keys) -> np.ndarray:
    """E[values | keys] evaluated on every cell (probability-weighted)."""
    values = np.asarray(values, dtype=float)
    if not keys:
        return np.full(values.shape, float(np.dot(prob, values) / prob.sum()))
    stacked = np.column_stack([np.asarray(k, dtype=float) for k in keys])
    _, inv = np.unique(stacked, axis=0, return_inverse=True)
    inv = inv.ravel()
    num = np.bincount(inv, weights=prob * values)
    den = np.bincount(inv, weights=prob)
    return (num / den)[inv]


def group_cov(x, y, prob, *keys) -> np.ndarray:
    mx = group_mean(x, prob, *keys)
    my = group_mean(y, prob, *keys)
    return group_mean((x - mx) * (y - my), prob, *keys)


# ------------------------------------------------------------------ point

@dataclass(eq=False)
class DiscreteOracleSpec:
    """Finite point-exposure design.

    ``treat_prob[a, z, u, l]`` is Pr(A=a | Z=z, U=u, L=l) (indices into the
    support tuples); ``y_mean[a, u, l]`` is E[Y(a) | U=u, L=l]; the outcome
    is the mean plus one of ``y_offsets`` with equal probability.
    """

    name: str
    u_values: tuple
    l_values: tuple
    z_values: tuple
    p_ul: np.ndarray
    p_z_given_l: np.ndarray
    treat_prob: np.ndarray
    y_mean: np.ndarray
    y_offsets: tuple = (-1.0, 1.0)
    structure: str = "aiv"
    target_level: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p_ul = np.asarray(self.p_ul, dtype=float)
        self.p_z_given_l = np.asarray(self.p_z_given_l, dtype=float)
        self.treat_prob = np.asarray(self.treat_prob, dtype=float)
        self.y_mean = np.asarray(self.y_mean, dtype=float)
        nu, nl, nz = len(self.u_values), len(self.l_values), len(self.z_values)
        levels = self.treat_prob.shape[0]
        if self.p_ul.shape != (nu, nl) or self.p_z_given_l.shape != (nz, nl):
            raise OracleError("probability tables do not match the supports")
        if self.treat_prob.shape != (levels, nz, nu, nl) or self.y_mean.shape != (levels, nu, nl):
            raise OracleError("treatment or outcome tables do not match the supports")
        if not np.isclose(self.p_ul.sum(), 1.0) or not np.allclose(self.p_z_given_l.sum(0), 1.0):
            raise OracleError("probability tables must sum to one")
        if not np.allclose(self.treat_prob.sum(0), 1.0):
            raise OracleError("treatment probabilities must sum to one over levels")
        for name, t in (("p_ul", self.p_ul), ("p_z_given_l", self.p_z_given_l), ("treat_prob", self.treat_prob)):
            if np.any(t <= 0) or np.any(t >= 1):
                raise OracleError(f"{name} entries must lie strictly inside (0, 1)")
        if abs(float(np.mean(self.y_offsets))) > 1e-15:
            raise OracleError("outcome offsets must average to zero")
        size = nu * nl * nz * levels * len(self.y_offsets)
        if size > ENUM_CAP:
            raise OracleError(f"support size {size} exceeds the enumeration cap {ENUM_CAP}")

    @property
    def levels(self) -> int:
        return self.treat_prob.shape[0]


def _aiv_tables(levels, b, c, nz, nu, nl):
    """treat_prob from additive parts b[a](u, l) + c[a](z, l) for a >= 1;
    level 0 takes the remainder (itself additive)."""
    tp = np.zeros((levels, nz, nu, nl))
    for a in range(1, levels):
        for z, u, l in product(range(nz), range(nu), range(nl)):
            tp[a, z, u, l] = b[a](u, l) + c[a](z, l)
    tp[0] = 1.0 - tp[1:].sum(0)
    return tp


def aiv_oracle(confounded: bool = True, levels: int = 2, homoskedastic: bool = False) -> DiscreteOracleSpec:
    """Default additive-IV design on U in {0,1}, L in {0,1,2}, Z in {0,1,2}.

    Pr(A=1|Z,U,L) = 0.1 + 0.2U + 0.1Z + 0.05L and
    E[Y(a)|U,L] = a(1+U) + 0.5L + U (U dropped from the outcome when
    ``confounded`` is false).  ``homoskedastic`` removes the a*U term so the
    treatment effect does not vary with U.  ``levels=3`` adds a level 2
    with its own additive structure.
    """
    u, l, z = (0.0, 1.0), (0.0, 1.0, 2.0), (0.0, 1.0, 2.0)
    p_ul = np.array([[0.15, 0.2, 0.15], [0.2, 0.1, 0.2]])
    p_zl = np.array([[0.3, 0.4, 0.2], [0.4, 0.3, 0.3], [0.3, 0.3, 0.5]])
    if levels == 2:
        b = {1: lambda ui, li: 0.1 + 0.2 * u[ui]}
        c = {1: lambda zi, li: 0.1 * z[zi] + 0.05 * l[li]}
    elif levels == 3:
        b = {1: lambda ui, li: 0.1 + 0.15 * u[ui], 2: lambda ui, li: 0.15 + 0.1 * u[ui]}
        c = {1: lambda zi, li: 0.05 * z[zi] + 0.03 * l[li], 2: lambda zi, li: 0.08 * z[zi] + 0.02 * l[li]}
    else:
        raise OracleError("the AIV oracle supports 2 or 3 treatment levels")
    tp = _aiv_tables(levels, b, c, 3, 2, 3)
    ym = np.zeros((levels, 2, 3))
    for a, ui, li in product(range(levels), range(2), range(3)):
        uu, ll = u[ui], l[li]
        if homoskedastic:
            ym[a, ui, li] = a * (1 + 0.5 * ll) + uu + 0.5 * ll
        elif confounded:
            ym[a, ui, li] = a * (1 + uu) + 0.5 * ll + uu
        else:
            ym[a, ui, li] = a * (1 + 0.5 * ll) + 0.5 * ll
    name = "oracle-aiv" + ("-homosk" if homoskedastic else "") + ("" if confounded else "-nou") + (
        f"-m{levels - 1}" if levels > 2 else "")
    return DiscreteOracleSpec(name, u, l, z, p_ul, p_zl, tp, ym, structure="aiv",
                              meta={"b": "0.1+0.2U", "c": "0.1Z+0.05L"})


def miv_oracle() -> DiscreteOracleSpec:
    """Multiplicative design for level 1: Pr(A=0|Z,U,L) = b(U,L) c(Z,L)
    with b = 0.5 + 0.3U and c = 0.3 + 0.2Z + 0.05L."""
    u, l, z = (0.0, 1.0), (0.0, 1.0, 2.0), (0.0, 1.0, 2.0)
    p_ul = np.array([[0.15, 0.2, 0.15], [0.2, 0.1, 0.2]])
    p_zl = np.array([[0.3, 0.4, 0.2], [0.4, 0.3, 0.3], [0.3, 0.3, 0.5]])
    tp = np.zeros((2, 3, 2, 3))
    for zi, ui, li in product(range(3), range(2), range(3)):
        p0 = (0.5 + 0.3 * u[ui]) * (0.3 + 0.2 * z[zi] + 0.05 * l[li])
        tp[0, zi, ui, li] = p0
        tp[1, zi, ui, li] = 1 - p0
    ym = np.zeros((2, 2, 3))
    for a, ui, li in product(range(2), range(2), range(3)):
        ym[a, ui, li] = a * (1 + u[ui]) + 0.5 * l[li] + u[ui]
    return DiscreteOracleSpec("oracle-miv", u, l, z, p_ul, p_zl, tp, ym, structure="miv", target_level=1)


class PointOracle:
    """Enumerated joint law of a :class:`DiscreteOracleSpec`.

    Cells are the full product of supports; ``prob`` holds their
    probabilities and ``u, l, z, a, y`` their coordinates.
    """

    def __init__(self, spec: DiscreteOracleSpec):
        self.spec = spec
        s = spec
        rows = []
        for ui, li, zi, a, k in product(range(len(s.u_values)), range(len(s.l_values)), range(len(s.z_values)),
                                        range(s.levels), range(len(s.y_offsets))):
            p = s.p_ul[ui, li] * s.p_z_given_l[zi, li] * s.treat_prob[a, zi, ui, li] / len(s.y_offsets)
            rows.append((ui, li, zi, a, k, p))
        r = np.array(rows)
        self.ui, self.li, self.zi = r[:, 0].astype(int), r[:, 1].astype(int), r[:, 2].astype(int)
        self.a = r[:, 3].astype(int)
        k = r[:, 4].astype(int)
        self.prob = r[:, 5]
        self.u = np.asarray(s.u_values)[self.ui]
        self.l = np.asarray(s.l_values)[self.li]
        self.z = np.asarray(s.z_values)[self.zi]
        self.y = s.y_mean[self.a, self.ui, self.li] + np.asarray(s.y_offsets)[k]

    # basic functionals ----------------------------------------------------
    @property
    def size(self) -> int:
        return len(self.prob)

    def E(self, v) -> float:
        return float(np.dot(self.prob, v))

    def given_l(self, v):
        return group_mean(v, self.prob, self.l)

    def given_zl(self, v):
        return group_mean(v, self.prob, self.z, self.l)

    def indicator(self, level):
        return (self.a == level).astype(float)

    def dataset(self) -> PointDataset:
        """The enumerated law as a probability-weighted dataset."""
        return PointDataset(z=self.z, a=self.a, y=self.y, l=self.l, treatment_levels=self.spec.levels,
                            weights=self.prob / self.prob.sum())

    # counterfactual truths -----------------------------------------------
    def mean_po(self, level: int) -> float:
        s = self.spec
        return float((s.p_ul * s.y_mean[level]).sum())

    def ate(self) -> float:
        return self.mean_po(1) - self.mean_po(0)

    def mean_po_given_l(self, level):
        """E[Y(a) | L] on every cell."""
        s = self.spec
        cond = (s.p_ul * s.y_mean[level]).sum(0) / s.p_ul.sum(0)
        return cond[self.li]

    def mean_po_given_l_not_a(self, level):
        """E[Y(a) | L, A != a] on every cell, from the structural tables."""
        s = self.spec
        off = 1.0 - s.treat_prob[level]                            # (z, u, l)
        w = s.p_ul[None, :, :] * s.p_z_given_l[:, None, :] * off   # (z, u, l)
        num = (w * s.y_mean[level][None]).sum((0, 1))
        return (num / w.sum((0, 1)))[self.li]

    def latent_covariance(self, level):
        """Cov{E[Y(a)|U,L], Pr(A=a|Z,U,L) | L} on every cell."""
        s = self.spec
        joint = s.p_ul[None, :, :] * s.p_z_given_l[:, None, :]     # (z, u, l), sums to P(L)
        pl = joint.sum((0, 1))
        m = s.y_mean[level][None]
        p = s.treat_prob[level]
        em = (joint * m).sum((0, 1)) / pl
        ep = (joint * p).sum((0, 1)) / pl
        cov = (joint * (m - em) * (p - ep)).sum((0, 1)) / pl
        return cov[self.li]

    # nuisances --------------------------------------------------------------
    def targets(self, level=None):
        """(treat, outcome) for the ATE (level None) or E[Y(level)]."""
        if level is None:
            return self.a.astype(float), self.y
        t = self.indicator(level)
        return t, t * self.y

    def fixed_nuisances(self, weight, level=None) -> dict:
        treat, outcome = self.targets(level)
        delta = self.given_l(treat)
        rho = self.given_l(weight)
        eta = self.given_l(outcome)
        cross = self.given_l(treat * weight)
        zeta = self.given_l(outcome * weight)
        kappa = cross - delta * rho
        gamma = (zeta - eta * rho) / kappa
        return {"delta": delta, "rho": rho, "eta": eta, "cross": cross, "zeta": zeta,
                "kappa": kappa, "gamma": gamma}

    def propensity(self, level=1):
        return self.given_zl(self.indicator(level))

    def adaptive_nuisances(self, level=None) -> dict:
        treat, outcome = self.targets(level)
        prop = self.given_zl(treat)
        delta = self.given_l(treat)
        kappa = self.given_l((prop - delta) ** 2)
        xi = self.given_zl(outcome)
        eta = self.given_l(outcome)
        prop_mean = self.given_l(prop)
        zeta = self.given_l(outcome * prop)
        gamma = (zeta - eta * prop_mean) / kappa
        return {"prop": prop, "delta": delta, "kappa": kappa, "xi": xi, "eta": eta, "gamma": gamma,
                "prop_mean": prop_mean, "zeta": zeta}

    def ratio_estimand(self, weight, level=None) -> float:
        """E[Cov(O, pi | L) / Cov(T, pi | L)] computed from covariances
        directly (independent of :meth:`fixed_nuisances`)."""
        treat, outcome = self.targets(level)
        num = group_cov(outcome, weight, self.prob, self.l)
        den = group_cov(treat, weight, self.prob, self.l)
        return self.E(num / den)

    def explicit_f0(self, weight, level):
        """-gamma E[A^a | Z,L] + E[A^a Y | Z,L] on every cell."""
        nu = self.fixed_nuisances(weight, level)
        treat, outcome = self.targets(level)
        return -nu["gamma"] * self.given_zl(treat) + self.given_zl(outcome)

    def explicit_f1(self, weight, level):
        nu = self.fixed_nuisances(weight, level)
        treat, outcome = self.targets(level)
        return nu["gamma"] * (1.0 - self.given_zl(treat)) + self.given_zl(outcome)

    def miv_estimand(self, weight, level) -> float:
        treat, outcome = self.targets(level)
        nu = self.fixed_nuisances(weight, level)
        return self.E((1.0 - treat) * nu["gamma"] + outcome)

    def structure_residual(self) -> float:
        """Largest violation of the declared structure: for an additive
        design, Pr(A=a|Z,U,L) - Pr(A=a|Z=z0,U,L) must not depend on U; for a
        multiplicative one, the ratio Pr(A!=a|Z,U,L) / Pr(A!=a|Z=z0,U,L)."""
        s = self.spec
        worst = 0.0
        for a in range(s.levels):
            p = s.treat_prob[a]
            if s.structure == "miv":
                if a != s.target_level:
                    continue
                d = (1 - p) / (1 - p[:1])
            else:
                d = p - p[:1]
            worst = max(worst, float(np.max(np.abs(d - d[:, :1, :]))))
        return worst


# ----------------------------------------------------------- longitudinal

@dataclass(eq=False)
class LongitudinalOracleSpec:
    """Two-period discrete design with per-period additive instruments.

    Structural laws (all binary except Z0 ternary):
    L0 ~ Ber(0.5), U0 ~ Ber(0.4 + 0.2 L0 * c), Z0 | L0 with Pr = p_z0[L0],
    A0 ~ Ber(0.1 + 0.2 U0 + 0.1 Z0 + 0.05 L0),
    L1 ~ Ber(0.3 + 0.3 A0 + 0.2 U0), U1 ~ Ber(0.2 + 0.3 U0 + 0.2 A0 + 0.1 L1),
    Z1 ~ Ber(0.3 + 0.2 L1 + 0.1 A0 + 0.05 Z0),
    A1 ~ Ber(0.1 + 0.15 U1 + 0.05 A0 + 0.15 Z1 + 0.05 L1),
    E[Y | history, A1] = A1(1 + 0.5 U1) + A0 + L1 + U1 + 0.5 L0, plus +-1.
    ``confounded=False`` removes U from the treatment laws.
    """

    confounded: bool = True

    def p_u0(self, l0):
        return 0.4 + 0.2 * l0 * (1.0 if self.confounded else 0.0)

    @staticmethod
    def p_z0(l0):
        return np.array([0.3, 0.4, 0.3]) if l0 == 0 else np.array([0.2, 0.3, 0.5])

    def p_a0(self, u0, z0, l0):
        return 0.1 + (0.2 * u0 if self.confounded else 0.1) + 0.1 * z0 + 0.05 * l0

    @staticmethod
    def p_l1(a0, u0, l0):
        return 0.3 + 0.3 * a0 + 0.2 * u0

    @staticmethod
    def p_u1(u0, a0, l1):
        return 0.2 + 0.3 * u0 + 0.2 * a0 + 0.1 * l1

    @staticmethod
    def p_z1(l1, a0, z0):
        return 0.3 + 0.2 * l1 + 0.1 * a0 + 0.05 * z0

    def p_a1(self, u1, a0, z1, l1):
        return 0.1 + (0.15 * u1 if self.confounded else 0.075) + 0.05 * a0 + 0.15 * z1 + 0.05 * l1

    @staticmethod
    def y_mean(a1, u1, a0, l1, l0):
        return a1 * (1 + 0.5 * u1) + a0 + l1 + u1 + 0.5 * l0


def _ber(p, x):
    return p if x == 1 else 1.0 - p


def _assigned(rule, t, **hist):
    if callable(rule):
        return np.asarray(rule(**hist)).astype(int)
    return rule


class LongitudinalOracle:
    """Enumerated joint law of the two-period design, observational or
    under an intervention on (A0, A1)."""

    def __init__(self, spec: LongitudinalOracleSpec | None = None):
        self.spec = spec or LongitudinalOracleSpec()
        cells = self._enumerate(None)
        self._set(cells)

    def _enumerate(self, forced):
        """forced = (rule0, rule1): an int level, None for the natural law,
        or a callable of the history (keywords l0 and, for t = 1, z0, a0,
        l1) returning the assigned level."""
        s = self.spec
        out = []
        for l0, u0, z0, a0, l1, u1, z1, a1, k in product((0, 1), (0, 1), (0, 1, 2), (0, 1), (0, 1), (0, 1),
                                                         (0, 1), (0, 1), (0, 1)):
            p = 0.5 * _ber(s.p_u0(l0), u0) * s.p_z0(l0)[z0]
            if forced is not None and forced[0] is not None:
                if a0 != _assigned(forced[0], 0, l0=l0):
                    continue
            else:
                p *= _ber(s.p_a0(u0, z0, l0), a0)
            p *= _ber(s.p_l1(a0, u0, l0), l1) * _ber(s.p_u1(u0, a0, l1), u1) * _ber(s.p_z1(l1, a0, z0), z1)
            if forced is not None and forced[1] is not None:
                if a1 != _assigned(forced[1], 1, l0=l0, z0=z0, a0=a0, l1=l1):
                    continue
            else:
                p *= _ber(s.p_a1(u1, a0, z1, l1), a1)
            y = s.y_mean(a1, u1, a0, l1, l0) + (1.0 if k else -1.0)
            out.append((l0, u0, z0, a0, l1, u1, z1, a1, y, 0.5 * p))
        return np.array(out)

    def _set(self, c):
        (self.l0, self.u0, self.z0, self.a0, self.l1, self.u1, self.z1, self.a1, self.y,
         self.prob) = (c[:, j] for j in range(10))

    @property
    def size(self):
        return len(self.prob)

    def E(self, v):
        return float(np.dot(self.prob, v))

    def history(self, t):
        return (self.l0,) if t == 0 else (self.z0, self.a0, self.l0, self.l1)

    def z(self, t):
        return self.z0 if t == 0 else self.z1

    def a(self, t):
        return self.a0 if t == 0 else self.a1

    def treat(self, regime, t):
        """I{A_t = g_t(H_t)} on every cell for an int or callable rule."""
        hist = {"l0": self.l0} if t == 0 else {"l0": self.l0, "z0": self.z0, "a0": self.a0, "l1": self.l1}
        return (self.a(t) == _assigned(regime[t], t, **hist)).astype(float)

    def dataset(self) -> PanelDataset:
        return PanelDataset(ids=np.arange(self.size), z=(self.z0, self.z1), a=(self.a0.astype(int), self.a1.astype(int)),
                            l=(self.l0, self.l1), y=self.y, treatment_levels=(2, 2),
                            weights=self.prob / self.prob.sum())

    def truth(self, regime) -> float:
        """E[Y(regime)] by enumeration under the intervention; a ``None``
        entry keeps that period's natural law."""
        c = self._enumerate(tuple(regime))
        return float(np.dot(c[:, 9], c[:, 8]))

    def nuisances(self, regime, weights=None) -> dict:
        """True per-period nuisances for a static regime, built backward:
        Psi_2 = Y, gamma_t = Cov(T_t Psi_{t+1}, w_t | H_t) / Cov(T_t, w_t | H_t)
        and Psi_t is the fixed-weight pseudo-outcome with these values.

        Returns {t: dict} plus the per-period Psi under key ``"psi"``.
        """
        from ..eif import fixed_weight_pseudo

        weights = weights or {0: self.z0, 1: self.z1}
        psi = {2: self.y}
        out = {}
        for t in (1, 0):
            treat = self.treat(regime, t)
            h = self.history(t)
            w = weights[t]
            outcome = treat * psi[t + 1]
            delta = group_mean(treat, self.prob, *h)
            rho = group_mean(w, self.prob, *h)
            eta = group_mean(outcome, self.prob, *h)
            kappa = group_cov(treat, w, self.prob, *h)
            gamma = group_cov(outcome, w, self.prob, *h) / kappa
            out[t] = {"delta": delta, "rho": rho, "eta": eta, "kappa": kappa, "gamma": gamma,
                      "treat": treat, "weight": w}
            psi[t] = fixed_weight_pseudo(w, treat, outcome, delta, rho, eta, kappa, gamma)
        out["psi"] = psi
        return out

    def adaptive_nuisances(self, regime) -> dict:
        from ..eif import adaptive_pseudo

        psi = {2: self.y}
        out = {}
        for t in (1, 0):
            treat = self.treat(regime, t)
            h = self.history(t)
            outcome = treat * psi[t + 1]
            prop = group_mean(treat, self.prob, self.z(t), *h)
            delta = group_mean(treat, self.prob, *h)
            kappa = group_mean((prop - delta) ** 2, self.prob, *h)
            xi = group_mean(outcome, self.prob, self.z(t), *h)
            eta = group_mean(outcome, self.prob, *h)
            gamma = group_cov(outcome, prop, self.prob, *h) / kappa
            out[t] = {"prop": prop, "delta": delta, "kappa": kappa, "xi": xi, "eta": eta, "gamma": gamma,
                      "treat": treat}
            psi[t] = adaptive_pseudo(treat, outcome, prop, delta, kappa, xi, eta, gamma)
        out["psi"] = psi
        return out

    def gamma_recursion(self, regime, weights=None) -> dict:
        """gamma_t(H_t) by the covariance-ratio recursion on gamma_{t+1}
        (not on the pseudo-outcome); gamma_2 = Y."""
        weights = weights or {0: self.z0, 1: self.z1}
        g = {2: self.y}
        for t in (1, 0):
            treat = self.treat(regime, t)
            h = self.history(t)
            g[t] = group_cov(treat * g[t + 1], weights[t], self.prob, *h) / group_cov(treat, weights[t], self.prob, *h)
        return g

    def truncated_identification(self, regime, s: int, r: int, weights=None) -> float:
        """E[prod_{t=s}^{T-r} W_t * gamma_{T+1-r}(H_{T+1-r})] with T = 1."""
        weights = weights or {0: self.z0, 1: self.z1}
        g = self.gamma_recursion(regime, weights)
        prod = np.ones(self.size)
        for t in range(s, 2 - r):
            treat = self.treat(regime, t)
            h = self.history(t)
            rho = group_mean(weights[t], self.prob, *h)
            kappa = group_cov(treat, weights[t], self.prob, *h)
            prod = prod * (weights[t] - rho) * treat / kappa
        return self.E(prod * g[2 - r])

    def max_cells(self):
        return self.size


def sample_oracle(oracle, n: int, seed: int):
    """Draw ``n`` i.i.d. rows from an enumerated law (cells by probability)."""
    from .simulate import stream

    g = stream(seed, 77)
    idx = g.choice(oracle.size, size=n, p=oracle.prob / oracle.prob.sum())
    data = oracle.dataset().subset(idx)
    if isinstance(data, PointDataset):
        return data.replace(weights=None)
    return PanelDataset(ids=np.arange(n), z=data.z, a=data.a, l=data.l, y=data.y,
                        treatment_levels=data.treatment_levels)


def enumerate_oracle(spec):
    """Enumerate a point or longitudinal oracle design."""
    if isinstance(spec, DiscreteOracleSpec):
        return PointOracle(spec)
    if isinstance(spec, LongitudinalOracleSpec):
        return LongitudinalOracle(spec)
    raise OracleError(f"unknown oracle spec {spec!r}")


ORACLES = {
    "oracle-aiv": aiv_oracle,
    "oracle-miv": miv_oracle,
    "oracle-long": LongitudinalOracleSpec,
}
