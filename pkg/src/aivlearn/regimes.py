"""Static and dynamic treatment regimes for the longitudinal estimators."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class FixedRule:
    level: int

    def label(self, t):
        return str(self.level)


@dataclass(frozen=True)
class NaturalRule:
    """Leave A_t at its observed value."""

    def label(self, t):
        return f"A{t}"


@dataclass(frozen=True)
class ThresholdRule:
    """Assign ``level_true`` when history coordinate ``coordinate`` lies
    below (or above) its ``quantile`` cutpoint, else ``level_false``.  The
    cutpoint is estimated on whatever rows are passed to ``cutoff``."""

    coordinate: str
    quantile: float
    direction: str = "below"
    level_true: int = 1
    level_false: int = 0

    def __post_init__(self):
        if self.direction not in ("below", "above"):
            raise RegimeError(f"direction must be 'below' or 'above', got {self.direction!r}")
        if not 0.0 < self.quantile < 1.0:
            raise RegimeError("threshold quantile must lie in (0, 1)")

    def column(self, names) -> int:
        try:
            return list(names).index(self.coordinate)
        except ValueError:
            raise RegimeError(
                f"regime references {self.coordinate!r}, not in the history {list(names)}"
            ) from None

    def cutoff(self, history: np.ndarray, names, weights=None) -> float:
        v = history[:, self.column(names)]
        if weights is None:
            return float(np.quantile(v, self.quantile))
        order = np.argsort(v, kind="stable")
        cw = np.cumsum(weights[order])
        pos = np.searchsorted(cw, self.quantile * cw[-1])
        return float(v[order][min(pos, len(v) - 1)])

    def assign(self, history: np.ndarray, names, cut: float) -> np.ndarray:
        v = history[:, self.column(names)]
        hit = v < cut if self.direction == "below" else v > cut
        return np.where(hit, self.level_true, self.level_false).astype(np.int64)

    def levels(self):
        return {self.level_true, self.level_false}

    def label(self, t):
        op = "<" if self.direction == "below" else ">"
        return f"{self.coordinate}{op}q{self.quantile:g}"


@dataclass(frozen=True)
class DynamicRegime:
    rules: tuple

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        for r in self.rules:
            if not isinstance(r, (FixedRule, NaturalRule, ThresholdRule)):
                raise RegimeError(f"unsupported rule {r!r}")

    @property
    def horizon(self) -> int:
        return len(self.rules) - 1

    @property
    def label(self) -> str:
        return "(" + ",".join(r.label(t) for t, r in enumerate(self.rules)) + ")"

    @property
    def is_static(self) -> bool:
        return all(isinstance(r, FixedRule) for r in self.rules)

    def as_static(self) -> "StaticRegime":
        if not self.is_static:
            raise RegimeError("regime has non-constant rules")
        return StaticRegime(tuple(r.level for r in self.rules))

    @classmethod
    def parse(cls, text: str) -> "DynamicRegime":
        """Comma-separated per-period rules: an integer level, ``A`` / ``A0``
        / ``natural`` for the observed treatment, or ``<col><q<p>`` /
        ``<col>>q<p>`` for a quantile threshold (treated iff true)."""
        body = text.strip().strip("()")
        if not body:
            raise RegimeError("empty regime")
        rules = []
        for tok in (s.strip() for s in body.split(",")):
            if re.fullmatch(r"\d+", tok):
                rules.append(FixedRule(int(tok)))
            elif re.fullmatch(r"(A\d*|natural)", tok):
                rules.append(NaturalRule())
            else:
                m = re.fullmatch(r"([A-Za-z_][\w.]*)\s*([<>])\s*q([0-9.]+)", tok)
                if not m:
                    raise RegimeError(f"cannot parse regime rule {tok!r}")
                rules.append(ThresholdRule(m.group(1), float(m.group(3)),
                                           "below" if m.group(2) == "<" else "above"))
        return cls(tuple(rules))


@dataclass(frozen=True)
class StaticRegime:
    levels: tuple

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(a) for a in self.levels))
        if any(a < 0 for a in self.levels):
            raise RegimeError("regime levels must be non-negative")

    @property
    def horizon(self) -> int:
        return len(self.levels) - 1

    @property
    def label(self) -> str:
        return "(" + ",".join(str(a) for a in self.levels) + ")"

    def as_dynamic(self) -> DynamicRegime:
        return DynamicRegime(tuple(FixedRule(a) for a in self.levels))


def as_dynamic(regime) -> DynamicRegime:
    if isinstance(regime, StaticRegime):
        return regime.as_dynamic()
    if isinstance(regime, DynamicRegime):
        return regime
    if isinstance(regime, str):
        return DynamicRegime.parse(regime)
    return StaticRegime(tuple(regime)).as_dynamic()
