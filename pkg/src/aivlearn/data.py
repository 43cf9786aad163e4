"""Containers for point-exposure and longitudinal data, fold partitions and
estimate reports, plus the CSV readers/writers used by the CLI."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np
from scipy.stats import norm

SCHEMA_VERSION = 1
Z_975 = float(norm.ppf(0.975))


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _as_matrix(x, n: int, name: str) -> np.ndarray:
    if x is None:
        return np.empty((n, 0))
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise DataError(f"{name} must have {n} rows, got shape {arr.shape}")
    return arr


def _check_finite(arr: np.ndarray, name: str) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        rows = np.unique(np.nonzero(bad)[0])[:10]
        raise DataError(f"non-finite values in {name} at rows {rows.tolist()}")


@dataclass(frozen=True)
class PointSample:
    z: tuple[float, ...]
    a: int | float
    y: float
    l: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class PointDataset:
    """Column store of (Z, A, Y, L) observations.

    ``treatment_levels`` is M+1 for a categorical treatment coded 0..M, or
    ``None`` for a continuous treatment.  ``weights`` are optional frequency
    weights (used by the enumeration oracles to represent populations).
    """

    z: np.ndarray
    a: np.ndarray
    y: np.ndarray
    l: np.ndarray
    treatment_levels: int | None = 2
    weights: np.ndarray | None = None
    level_labels: tuple[str, ...] | None = None
    u: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        n = y.shape[0]
        if n < 1:
            raise DataError("dataset must contain at least one observation")
        z = _as_matrix(self.z, n, "z")
        if z.shape[1] < 1:
            raise DataError("instrument z must have at least one column")
        l = _as_matrix(self.l, n, "l")
        a = np.asarray(self.a).ravel()
        if a.shape[0] != n:
            raise DataError(f"a must have {n} entries")
        for arr, name in ((z, "z"), (y, "y"), (l, "l")):
            _check_finite(arr, name)
        if self.treatment_levels is None:
            a = a.astype(float)
            _check_finite(a, "a")
        else:
            af = a.astype(float)
            _check_finite(af, "a")
            if np.any(af != np.round(af)):
                raise DataError("categorical treatment must be integer coded")
            a = af.astype(np.int64)
            m = int(self.treatment_levels)
            bad = np.nonzero((a < 0) | (a >= m))[0]
            if bad.size:
                raise DataError(
                    f"treatment level outside 0..{m - 1} at rows {bad[:10].tolist()}"
                )
            missing = sorted(set(range(m)) - set(np.unique(a).tolist()))
            if missing:
                warnings.warn(f"treatment levels {missing} never observed", stacklevel=3)
        w = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape[0] != n or np.any(~np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
                raise DataError("weights must be finite, non-negative and not all zero")
            w.setflags(write=False)
        u = None
        if self.u is not None:
            u = _as_matrix(self.u, n, "u")
            u.setflags(write=False)
        for arr in (z, a, y, l):
            arr.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def z_dim(self) -> int:
        return self.z.shape[1]

    @property
    def l_dim(self) -> int:
        return self.l.shape[1]

    def __len__(self) -> int:
        return self.n

    def samples(self) -> Iterator[PointSample]:
        for i in range(self.n):
            a = self.a[i].item()
            yield PointSample(tuple(self.z[i]), a, float(self.y[i]), tuple(self.l[i]))

    @classmethod
    def from_samples(cls, samples: Sequence[PointSample], treatment_levels: int | None = None):
        if not samples:
            raise DataError("dataset must contain at least one observation")
        a = np.array([s.a for s in samples])
        if treatment_levels is None and np.issubdtype(a.dtype, np.integer):
            treatment_levels = int(a.max()) + 1
        return cls(
            z=np.array([s.z for s in samples], dtype=float),
            a=a,
            y=np.array([s.y for s in samples], dtype=float),
            l=np.array([s.l for s in samples], dtype=float).reshape(len(samples), -1),
            treatment_levels=treatment_levels,
        )

    def subset(self, idx) -> "PointDataset":
        idx = np.asarray(idx)
        return PointDataset(
            z=self.z[idx],
            a=self.a[idx],
            y=self.y[idx],
            l=self.l[idx],
            treatment_levels=self.treatment_levels,
            weights=None if self.weights is None else self.weights[idx],
            level_labels=self.level_labels,
            u=None if self.u is None else self.u[idx],
        )

    def replace(self, **kw) -> "PointDataset":
        fields = dict(
            z=self.z, a=self.a, y=self.y, l=self.l, treatment_levels=self.treatment_levels,
            weights=self.weights, level_labels=self.level_labels, u=self.u,
        )
        fields.update(kw)
        return PointDataset(**fields)

    def obs_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def indicator(self, level: int) -> np.ndarray:
        """A^(a) = I{A = a} as floats."""
        if self.treatment_levels is None:
            raise DataError("indicator() needs a categorical treatment")
        return (self.a == level).astype(float)


@dataclass(frozen=True)
class PanelSample:
    id: Any
    z: tuple[tuple[float, ...], ...]
    a: tuple[int, ...]
    l: tuple[tuple[float, ...], ...]
    y: float


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Per-subject sequences (Z_t, A_t, L_t), t = 0..T, and terminal outcome Y.

    Stored per period: ``z[t]`` is (n, p_t), ``a[t]`` is (n,), ``l[t]`` is
    (n, q_t).  Histories H_t = [Z_0..Z_{t-1}, A_0..A_{t-1}, L_0..L_t].
    """

    ids: np.ndarray
    z: tuple
    a: tuple
    l: tuple
    y: np.ndarray
    treatment_levels: tuple = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        n = y.shape[0]
        if n < 1:
            raise DataError("panel dataset must contain at least one subject")
        _check_finite(y, "y")
        horizon = len(self.a)
        if horizon < 1 or len(self.z) != horizon or len(self.l) != horizon:
            raise DataError("z, a and l must all have T+1 periods")
        z = tuple(_as_matrix(zt, n, f"z[{t}]") for t, zt in enumerate(self.z))
        l = tuple(_as_matrix(lt, n, f"l[{t}]") for t, lt in enumerate(self.l))
        a = []
        for t, at in enumerate(self.a):
            af = np.asarray(at, dtype=float).ravel()
            if af.shape[0] != n:
                raise DataError(f"a[{t}] must have {n} entries")
            _check_finite(af, f"a[{t}]")
            if np.any(af != np.round(af)) or np.any(af < 0):
                raise DataError(f"a[{t}] must hold non-negative integer codes")
            a.append(af.astype(np.int64))
        for t in range(horizon):
            if z[t].shape[1] < 1:
                raise DataError(f"z[{t}] must have at least one column")
            _check_finite(z[t], f"z[{t}]")
            _check_finite(l[t], f"l[{t}]")
        levels = self.treatment_levels
        if levels is None:
            levels = tuple(int(at.max()) + 1 for at in a)
        levels = tuple(int(m) for m in levels)
        if len(levels) != horizon:
            raise DataError("treatment_levels must list one cardinality per period")
        for t, at in enumerate(a):
            if at.max() >= levels[t]:
                raise DataError(f"a[{t}] exceeds declared levels {levels[t]}")
        ids = np.asarray(self.ids if self.ids is not None else np.arange(n))
        if ids.shape[0] != n:
            raise DataError("ids must have one entry per subject")
        w = None
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape[0] != n or np.any(w < 0) or w.sum() <= 0:
                raise DataError("invalid weights")
            w.setflags(write=False)
        for arr in (*z, *l, *a, y):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "a", tuple(a))
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "treatment_levels", levels)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def horizon(self) -> int:
        """T, so that periods are 0..T."""
        return len(self.a) - 1

    def __len__(self) -> int:
        return self.n

    def obs_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def history(self, t: int) -> np.ndarray:
        cols = [self.z[s] for s in range(t)]
        cols += [self.a[s][:, None].astype(float) for s in range(t)]
        cols += [self.l[s] for s in range(t + 1)]
        return np.hstack(cols) if cols else np.empty((self.n, 0))

    def history_names(self, t: int) -> list[str]:
        def names(prefix, s, dim):
            return [f"{prefix}{s}"] if dim == 1 else [f"{prefix}{s}.{j}" for j in range(dim)]

        out = []
        for s in range(t):
            out += names("z", s, self.z[s].shape[1])
        out += [f"a{s}" for s in range(t)]
        for s in range(t + 1):
            out += names("l", s, self.l[s].shape[1])
        return out

    def panels(self) -> Iterator[PanelSample]:
        for i in range(self.n):
            yield PanelSample(
                id=self.ids[i].item() if hasattr(self.ids[i], "item") else self.ids[i],
                z=tuple(tuple(zt[i]) for zt in self.z),
                a=tuple(int(at[i]) for at in self.a),
                l=tuple(tuple(lt[i]) for lt in self.l),
                y=float(self.y[i]),
            )

    def subset(self, idx) -> "PanelDataset":
        idx = np.asarray(idx)
        return PanelDataset(
            ids=self.ids[idx],
            z=tuple(zt[idx] for zt in self.z),
            a=tuple(at[idx] for at in self.a),
            l=tuple(lt[idx] for lt in self.l),
            y=self.y[idx],
            treatment_levels=self.treatment_levels,
            weights=None if self.weights is None else self.weights[idx],
        )

    def to_point(self) -> PointDataset:
        """The T=0 panel viewed as a point-exposure dataset."""
        if self.horizon != 0:
            raise DataError("only a single-period panel converts to a point dataset")
        return PointDataset(
            z=self.z[0], a=self.a[0], y=self.y, l=self.l[0],
            treatment_levels=self.treatment_levels[0], weights=self.weights,
        )


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    folds: np.ndarray
    K: int
    seed: int

    def indices(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(evaluation rows I_k, training rows I_{-k})."""
        mask = self.folds == k
        return np.nonzero(mask)[0], np.nonzero(~mask)[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.folds, minlength=self.K)


def make_folds(n: int, K: int, seed: int) -> FoldAssignment:
    """Random near-equal K-fold partition, a pure function of (n, K, seed)."""
    if K < 2 or K > n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.Generator(np.random.Philox(key=int(seed))).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % K
    folds.setflags(write=False)
    return FoldAssignment(folds=folds, K=int(K), seed=int(seed))


@dataclass
class EstimateReport:
    """Universal estimator output: point estimate, variance and 95% CI."""

    estimand: str
    psi_hat: float
    sigma_hat_sq: float
    n: int
    K: int | None = None
    seed: int | None = None
    diagnostics: dict = field(default_factory=dict)
    fold_variances: list | None = None
    std_error: float = field(init=False)
    ci_lower: float = field(init=False)
    ci_upper: float = field(init=False)

    def __post_init__(self):
        self.psi_hat = float(self.psi_hat)
        self.sigma_hat_sq = max(float(self.sigma_hat_sq), 0.0)
        self.std_error = math.sqrt(self.sigma_hat_sq / self.n)
        half = Z_975 * self.std_error
        self.ci_lower = self.psi_hat - half
        self.ci_upper = self.psi_hat + half

    def covers(self, truth: float) -> bool:
        return self.ci_lower <= truth <= self.ci_upper

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schema_version"] = SCHEMA_VERSION
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=_json_default, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateReport":
        keys = ("estimand", "psi_hat", "sigma_hat_sq", "n", "K", "seed", "diagnostics", "fold_variances")
        return cls(**{k: d[k] for k in keys if k in d})


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------- CSV I/O

@dataclass
class PointSchema:
    """Column mapping for point-exposure CSVs.  Empty ``z``/``l`` means
    "every column whose name starts with z / l"."""

    z: list = field(default_factory=list)
    a: str = "a"
    y: str = "y"
    l: list = field(default_factory=list)
    treatment_levels: int | None = None
    continuous_treatment: bool = False
    weight: str | None = None
    u: list = field(default_factory=list)


def _fmt(x: float) -> str:
    return repr(float(x))


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    return header, rows


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"row {row}: non-numeric value {cell!r} in column {col!r}") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}: non-finite value in column {col!r}")
    return v


def _prefixed(header, prefix):
    import re

    pat = re.compile(rf"^{prefix}\d*(\.\d+)?$")
    return [h for h in header if pat.match(h)]


def load_point_csv(path, schema: PointSchema | None = None) -> PointDataset:
    schema = schema or PointSchema()
    header, rows = _read_rows(path)
    zcols = schema.z or _prefixed(header, "z")
    lcols = schema.l if schema.l else [h for h in _prefixed(header, "l")]
    need = list(zcols) + [schema.a, schema.y] + list(lcols)
    if schema.weight:
        need.append(schema.weight)
    for c in need:
        if c not in header:
            raise DataError(f"missing column {c!r} (header: {header})")
    if not zcols:
        raise DataError("no instrument columns found")
    pos = {h: i for i, h in enumerate(header)}
    n = len(rows)
    if n == 0:
        raise DataError("CSV has no data rows")
    z = np.empty((n, len(zcols)))
    l = np.empty((n, len(lcols)))
    y = np.empty(n)
    w = np.empty(n) if schema.weight else None
    raw_a = []
    for i, r in enumerate(rows):
        rownum = i + 2  # 1-based with header
        if len(r) != len(header):
            raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(r)}")
        for j, c in enumerate(zcols):
            z[i, j] = _parse_float(r[pos[c]], rownum, c)
        for j, c in enumerate(lcols):
            l[i, j] = _parse_float(r[pos[c]], rownum, c)
        y[i] = _parse_float(r[pos[schema.y]], rownum, schema.y)
        if w is not None:
            w[i] = _parse_float(r[pos[schema.weight]], rownum, schema.weight)
        raw_a.append(r[pos[schema.a]].strip())

    labels = None
    if schema.continuous_treatment:
        a = np.array([_parse_float(v, i + 2, schema.a) for i, v in enumerate(raw_a)])
        levels = None
    else:
        try:
            af = np.array([float(v) for v in raw_a])
            numeric = True
        except ValueError:
            numeric = False
        if numeric:
            bad = np.nonzero(~np.isfinite(af) | (af != np.round(af)) | (af < 0))[0]
            if bad.size:
                raise DataError(f"row {bad[0] + 2}: treatment must be a non-negative integer code")
            a = af.astype(np.int64)
            levels = schema.treatment_levels or int(a.max()) + 1
            bad = np.nonzero(a >= levels)[0]
            if bad.size:
                raise DataError(
                    f"row {bad[0] + 2}: treatment level {a[bad[0]]} outside declared range 0..{levels - 1}"
                )
        else:
            labels = tuple(sorted(set(raw_a)))
            code = {lab: i for i, lab in enumerate(labels)}
            a = np.array([code[v] for v in raw_a], dtype=np.int64)
            levels = len(labels)
            if schema.treatment_levels and schema.treatment_levels < levels:
                raise DataError(f"found {levels} treatment labels, declared {schema.treatment_levels}")
    u = None
    if schema.u:
        u = np.array([[_parse_float(r[pos[c]], i + 2, c) for c in schema.u] for i, r in enumerate(rows)])
    return PointDataset(z=z, a=a, y=y, l=l, treatment_levels=levels, weights=w, level_labels=labels, u=u)


def point_column_names(data: PointDataset) -> tuple[list[str], list[str]]:
    return [f"z{j}" for j in range(data.z_dim)], [f"l{j}" for j in range(data.l_dim)]


def write_point_csv(data: PointDataset, path, include_latents: bool = False) -> None:
    zc, lc = point_column_names(data)
    header = zc + ["a", "y"] + lc
    if data.weights is not None:
        header.append("w")
    uc = []
    if include_latents and data.u is not None:
        uc = [f"u{j}" for j in range(data.u.shape[1])]
        header += uc
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(data.n):
            a = data.a[i]
            row = [_fmt(v) for v in data.z[i]]
            row.append(str(int(a)) if data.treatment_levels is not None else _fmt(a))
            row.append(_fmt(data.y[i]))
            row += [_fmt(v) for v in data.l[i]]
            if data.weights is not None:
                row.append(_fmt(data.weights[i]))
            if uc:
                row += [_fmt(v) for v in data.u[i]]
            wr.writerow(row)


@dataclass
class PanelSchema:
    """Long-format panel CSV: one row per (id, t) with z*/a/l* columns and
    one terminal row per id with t = T+1 carrying ``y`` (other cells blank)."""

    id: str = "id"
    t: str = "t"
    z: list = field(default_factory=list)
    a: str = "a"
    l: list = field(default_factory=list)
    y: str = "y"
    treatment_levels: list | None = None


def load_panel_csv(path, schema: PanelSchema | None = None) -> PanelDataset:
    schema = schema or PanelSchema()
    header, rows = _read_rows(path)
    zcols = schema.z or _prefixed(header, "z")
    lcols = schema.l if schema.l else _prefixed(header, "l")
    for c in [schema.id, schema.t, schema.a, schema.y, *zcols, *lcols]:
        if c not in header:
            raise DataError(f"missing column {c!r}")
    pos = {h: i for i, h in enumerate(header)}
    records: dict[str, dict[int, list[str]]] = {}
    outcomes: dict[str, float] = {}
    order: list[str] = []
    max_t = -1
    for i, r in enumerate(rows):
        rownum = i + 2
        if len(r) != len(header):
            raise DataError(f"row {rownum}: expected {len(header)} fields, got {len(r)}")
        sid = r[pos[schema.id]].strip()
        t = int(_parse_float(r[pos[schema.t]], rownum, schema.t))
        if sid not in records:
            records[sid] = {}
            order.append(sid)
        ycell = r[pos[schema.y]].strip()
        zcell = r[pos[zcols[0]]].strip() if zcols else ""
        if ycell and not zcell and not r[pos[schema.a]].strip():
            if sid in outcomes:
                raise DataError(f"row {rownum}: duplicate terminal outcome for id {sid}")
            outcomes[sid] = _parse_float(ycell, rownum, schema.y)
            continue
        if t in records[sid]:
            raise DataError(f"row {rownum}: duplicate (id, t) = ({sid}, {t})")
        records[sid][t] = (rownum, r)
        max_t = max(max_t, t)
    if max_t < 0:
        raise DataError("no period rows found")
    horizon = max_t
    for sid in order:
        got = sorted(records[sid])
        if got != list(range(horizon + 1)):
            raise DataError(f"ragged horizon for id {sid}: periods {got}, expected 0..{horizon}")
        if sid not in outcomes:
            raise DataError(f"missing terminal outcome for id {sid}")
    n = len(order)
    z = [np.empty((n, len(zcols))) for _ in range(horizon + 1)]
    l = [np.empty((n, len(lcols))) for _ in range(horizon + 1)]
    a = [np.empty(n) for _ in range(horizon + 1)]
    for i, sid in enumerate(order):
        for t in range(horizon + 1):
            rownum, r = records[sid][t]
            for j, c in enumerate(zcols):
                z[t][i, j] = _parse_float(r[pos[c]], rownum, c)
            for j, c in enumerate(lcols):
                l[t][i, j] = _parse_float(r[pos[c]], rownum, c)
            a[t][i] = _parse_float(r[pos[schema.a]], rownum, schema.a)
    y = np.array([outcomes[s] for s in order])
    levels = tuple(schema.treatment_levels) if schema.treatment_levels else None
    return PanelDataset(ids=np.array(order, dtype=object), z=tuple(z), a=tuple(a), l=tuple(l), y=y,
                        treatment_levels=levels)


def write_panel_csv(data: PanelDataset, path) -> None:
    pz = max(zt.shape[1] for zt in data.z)
    ql = max(lt.shape[1] for lt in data.l)
    zc = [f"z{j}" for j in range(pz)]
    lc = [f"l{j}" for j in range(ql)]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["id", "t", *zc, "a", *lc, "y"])
        for i in range(data.n):
            sid = str(data.ids[i])
            for t in range(data.horizon + 1):
                zs = [_fmt(v) for v in data.z[t][i]] + [""] * (pz - data.z[t].shape[1])
                ls = [_fmt(v) for v in data.l[t][i]] + [""] * (ql - data.l[t].shape[1])
                wr.writerow([sid, t, *zs, int(data.a[t][i]), *ls, ""])
            wr.writerow([sid, data.horizon + 1, *[""] * pz, "", *[""] * ql, _fmt(data.y[i])])
