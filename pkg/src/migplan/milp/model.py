"""Backend-neutral mixed-integer linear program container."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<", "=", ">"
_SENSES = (LE, EQ, GE)


def _ro(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StandardFormModel:
    """A sealed (immutable) MILP: ``opt c.x + offset  s.t.  A x (<,=,>) rhs, lower <= x <= upper``.

    ``families`` labels each row with its constraint family; ``tags`` maps
    row names to the same labels.
    """

    name: str
    var_names: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    objective: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    row_names: tuple[str, ...]
    families: tuple[str, ...]
    maximize: bool = False
    offset: float = 0.0
    _var_pos: dict = field(default=None, repr=False)
    _row_pos: dict = field(default=None, repr=False)

    def __post_init__(self):
        n, m = len(self.var_names), len(self.row_names)
        if self.A.shape != (m, n):
            raise ValueError(f"matrix shape {self.A.shape} != ({m}, {n})")
        for arr, size in ((self.lower, n), (self.upper, n), (self.integer, n),
                          (self.objective, n), (self.sense, m), (self.rhs, m)):
            if arr.shape != (size,):
                raise ValueError("inconsistent array length in model")
        if np.any(self.lower > self.upper):
            j = int(np.argmax(self.lower > self.upper))
            raise ValueError(f"variable {self.var_names[j]} has lower > upper")
        if self._var_pos is None:
            pos = {nm: i for i, nm in enumerate(self.var_names)}
            if len(pos) != n:
                raise ValueError("variable names must be unique")
            object.__setattr__(self, "_var_pos", pos)
        if self._row_pos is None:
            pos = {nm: i for i, nm in enumerate(self.row_names)}
            if len(pos) != m:
                raise ValueError("constraint names must be unique")
            object.__setattr__(self, "_row_pos", pos)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    @property
    def is_mip(self) -> bool:
        return bool(self.integer.any())

    @property
    def tags(self) -> Mapping[str, str]:
        return dict(zip(self.row_names, self.families))

    def var(self, name: str) -> int:
        return self._var_pos[name]

    def row(self, name: str) -> int:
        return self._row_pos[name]

    def rows_in(self, family: str) -> np.ndarray:
        return np.array([i for i, f in enumerate(self.families) if f == family], dtype=int)

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for f in self.families:
            out[f] = out.get(f, 0) + 1
        return out

    def with_rhs(self, rhs: np.ndarray) -> "StandardFormModel":
        return replace(self, rhs=_ro(np.asarray(rhs, dtype=float).copy()))

    def with_bounds(self, lower=None, upper=None) -> "StandardFormModel":
        lo = self.lower if lower is None else _ro(np.asarray(lower, dtype=float).copy())
        up = self.upper if upper is None else _ro(np.asarray(upper, dtype=float).copy())
        return replace(self, lower=lo, upper=up)

    def relaxed(self) -> "StandardFormModel":
        return replace(self, integer=_ro(np.zeros(self.n_vars, dtype=bool)))

    def row_activity(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation of rows and bounds at ``x``."""
        act = self.A @ x
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.sense == LE, self.sense == GE, self.sense == EQ
        viol[le] = np.maximum(act[le] - self.rhs[le], 0)
        viol[ge] = np.maximum(self.rhs[ge] - act[ge], 0)
        viol[eq] = np.abs(act[eq] - self.rhs[eq])
        bnd = np.maximum(self.lower - x, 0).max(initial=0), np.maximum(x - self.upper, 0).max(initial=0)
        return float(max(viol.max(initial=0), *bnd))

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.objective @ x + self.offset)

    def fix_columns(self, cols: Sequence[int], values: Sequence[float]) -> "StandardFormModel":
        """Substitute fixed values for ``cols`` and drop them from the model."""
        cols = np.asarray(cols, dtype=int)
        values = np.asarray(values, dtype=float)
        keep = np.ones(self.n_vars, dtype=bool)
        keep[cols] = False
        A = self.A.tocsc()
        rhs = self.rhs - A[:, cols] @ values
        offset = self.offset + float(self.objective[cols] @ values)
        idx = np.flatnonzero(keep)
        return StandardFormModel(
            name=self.name,
            var_names=tuple(self.var_names[i] for i in idx),
            lower=_ro(self.lower[idx].copy()),
            upper=_ro(self.upper[idx].copy()),
            integer=_ro(self.integer[idx].copy()),
            objective=_ro(self.objective[idx].copy()),
            A=A[:, idx].tocsr(),
            sense=self.sense,
            rhs=_ro(np.asarray(rhs, dtype=float)),
            row_names=self.row_names,
            families=self.families,
            maximize=self.maximize,
            offset=offset,
            _row_pos=self._row_pos,
        )


class ModelBuilder:
    """Incremental assembly of a StandardFormModel."""

    def __init__(self, name: str = "model", maximize: bool = False):
        self.name = name
        self.maximize = maximize
        self._names: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._int: list[bool] = []
        self._obj: list[float] = []
        self._rows: list[str] = []
        self._fam: list[str] = []
        self._sense: list[str] = []
        self._rhs: list[float] = []
        self._ri: list[int] = []
        self._ci: list[int] = []
        self._v: list[float] = []
        self.offset = 0.0

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def add_var(self, name: str, lower: float = 0.0, upper: float = math.inf,
                integer: bool = False, obj: float = 0.0) -> int:
        self._names.append(name)
        self._lb.append(float(lower))
        self._ub.append(float(upper))
        self._int.append(bool(integer))
        self._obj.append(float(obj))
        return len(self._names) - 1

    def set_obj(self, col: int, coef: float) -> None:
        self._obj[col] = float(coef)

    def add_obj(self, col: int, coef: float) -> None:
        self._obj[col] += float(coef)

    def add_row(self, name: str, terms: Mapping[int, float] | Iterable[tuple[int, float]],
                sense: str, rhs: float, family: str) -> int:
        if sense not in _SENSES:
            raise ValueError(f"bad sense {sense!r}")
        r = len(self._rows)
        items = terms.items() if isinstance(terms, Mapping) else terms
        for c, v in items:
            if v != 0.0:
                self._ri.append(r)
                self._ci.append(int(c))
                self._v.append(float(v))
        self._rows.append(name)
        self._fam.append(family)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        return r

    def seal(self) -> StandardFormModel:
        n, m = len(self._names), len(self._rows)
        if self._ci and max(self._ci) >= n:
            raise ValueError("coefficient references an undeclared variable")
        A = sp.csr_matrix((np.array(self._v, dtype=float),
                           (np.array(self._ri, dtype=int), np.array(self._ci, dtype=int))),
                          shape=(m, n))
        A.sum_duplicates()
        return StandardFormModel(
            name=self.name,
            var_names=tuple(self._names),
            lower=_ro(np.array(self._lb, dtype=float)),
            upper=_ro(np.array(self._ub, dtype=float)),
            integer=_ro(np.array(self._int, dtype=bool)),
            objective=_ro(np.array(self._obj, dtype=float)),
            A=A,
            sense=_ro(np.array(self._sense, dtype="<U1")),
            rhs=_ro(np.array(self._rhs, dtype=float)),
            row_names=tuple(self._rows),
            families=tuple(self._fam),
            maximize=self.maximize,
            offset=self.offset,
        )


def from_arrays(c, A, sense, rhs, lower=None, upper=None, integer=None,
                maximize: bool = False, name: str = "model") -> StandardFormModel:
    """Wrap dense or sparse arrays; handy for tests and small ad-hoc models."""
    A = sp.csr_matrix(np.atleast_2d(np.asarray(A, dtype=float)) if not sp.issparse(A) else A)
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    if isinstance(sense, str):
        sense = [sense] * m
    lower = np.zeros(n) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(n, math.inf) if upper is None else np.asarray(upper, dtype=float)
    integer = np.zeros(n, dtype=bool) if integer is None else np.asarray(integer, dtype=bool)
    return StandardFormModel(
        name=name,
        var_names=tuple(f"x{j}" for j in range(n)),
        lower=_ro(lower.astype(float).copy()),
        upper=_ro(upper.astype(float).copy()),
        integer=_ro(integer.copy()),
        objective=_ro(c.copy()),
        A=A,
        sense=_ro(np.array(sense, dtype="<U1")),
        rhs=_ro(np.asarray(rhs, dtype=float).copy()),
        row_names=tuple(f"r{i}" for i in range(m)),
        families=tuple("row" for _ in range(m)),
        maximize=maximize,
    )


def _lp_name(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in s)


def write_lp(model: StandardFormModel, path: str | Path) -> None:
    """Dump ``model`` in CPLEX LP text format for external debugging."""
    names = [_lp_name(v) for v in model.var_names]

    def expr(cols, vals):
        parts = []
        for c, v in zip(cols, vals):
            parts.append(f"{'-' if v < 0 else '+'} {abs(v):.17g} {names[c]}")
        return " ".join(parts) if parts else "0 " + names[0]

    lines = ["\\ " + model.name, "Maximize" if model.maximize else "Minimize"]
    nz = np.flatnonzero(model.objective)
    lines.append(" obj: " + expr(nz, model.objective[nz]))
    lines.append("Subject To")
    A = model.A.tocsr()
    op = {LE: "<=", GE: ">=", EQ: "="}
    for i, rname in enumerate(model.row_names):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        lines.append(f" {_lp_name(rname)}: {expr(A.indices[lo:hi], A.data[lo:hi])} "
                     f"{op[model.sense[i]]} {model.rhs[i]:.17g}")
    lines.append("Bounds")
    for j, nm in enumerate(names):
        lo, up = model.lower[j], model.upper[j]
        los = "-inf" if math.isinf(lo) else f"{lo:.17g}"
        ups = "+inf" if math.isinf(up) else f"{up:.17g}"
        lines.append(f" {los} <= {nm} <= {ups}")
    ints = [names[j] for j in np.flatnonzero(model.integer)]
    if ints:
        lines.append("General")
        lines.extend(" " + nm for nm in ints)
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")
