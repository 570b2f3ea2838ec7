"""Univariate term-type sweep and simplicity-based term selection."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .covariates import CovariateTable
from .fosr import SWEEP_KINDS, ModelSpec, TermKind, TermSpec, fit_additive
from .grid import FunctionalDataset


class SweepError(RuntimeError):
    def __init__(self, group: str, kind: TermKind, cause: Exception):
        super().__init__(f"fit failed for group {group!r}, kind {kind.value!r}: {cause}")
        self.group, self.kind, self.cause = group, kind, cause


@dataclass(frozen=True)
class CovariateGroup:
    name: str
    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if not 1 <= len(members) <= 2:
            raise ValueError(f"group {self.name!r} must have one or two members")
        object.__setattr__(self, "members", members)


@dataclass
class SweepTable:
    groups: list
    values: np.ndarray  # groups x 5, percent explained
    selected: list = field(default_factory=list)
    kinds: tuple = SWEEP_KINDS

    def row(self, name: str) -> np.ndarray:
        return self.values[[g.name for g in self.groups].index(name)]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["group", "members"] + [k.value for k in self.kinds] + ["selected"])
            for g, vals, sel in zip(self.groups, self.values, self.selected):
                w.writerow([g.name, "+".join(g.members)] + [f"{v:.4f}" for v in vals] + [sel.value])

    @classmethod
    def read_csv(cls, path) -> "SweepTable":
        groups, values, selected = [], [], []
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            kinds = tuple(TermKind(h) for h in header[2:-1])
            if kinds != SWEEP_KINDS:
                raise ValueError(f"{path}: columns must be {[k.value for k in SWEEP_KINDS]}")
            for rec in reader:
                groups.append(CovariateGroup(rec[0], tuple(rec[1].split("+"))))
                values.append([float(v) for v in rec[2:-1]])
                selected.append(TermKind(rec[-1]))
        return cls(groups, np.array(values), selected)


def select_kind(row: Sequence[float], threshold: float = 1.0) -> TermKind:
    """Pick a term type from explained-variability values in complexity order.

    Walks down from the bivariate term: a simpler model replaces the current
    one whenever it loses less than ``threshold`` points. From the
    varying-plus-smooth model the simpler candidate is whichever of the
    smooth and varying-linear models explains more.
    """
    ev = [float(v) for v in row]
    if len(ev) != 5 or not all(math.isfinite(v) for v in ev):
        raise ValueError(f"need five finite values, got {row!r}")
    lin, smooth, varying, vps, biv = ev
    current, cur_ev = TermKind.BIVARIATE, biv
    if cur_ev - vps < threshold:
        current, cur_ev = TermKind.VARYING_PLUS_SMOOTH, vps
    else:
        return current
    cand, cand_ev = (TermKind.SMOOTH, smooth) if smooth >= varying else (TermKind.VARYING_LINEAR, varying)
    if cur_ev - cand_ev < threshold:
        current, cur_ev = cand, cand_ev
    else:
        return current
    if cur_ev - lin < threshold:
        current = TermKind.CONSTANT_LINEAR
    return current


def _group_terms(group: CovariateGroup, kind: TermKind, X: CovariateTable, n_basis_t: int, n_basis_x: int):
    terms = []
    for c in group.members:
        k = TermKind.FACTOR if not X.is_numeric(c) else kind
        terms.append(TermSpec(c, k, n_basis_t=n_basis_t, n_basis_x=n_basis_x))
    return terms


def sweep(
    ds: FunctionalDataset,
    X: CovariateTable,
    groups: Sequence[CovariateGroup],
    n_basis_t: int = 10,
    n_basis_x: int = 10,
    threshold: float = 1.0,
    jobs: int = 1,
) -> SweepTable:
    """Fit intercept + one term type per group for all five types.

    Numeric covariates are standardized here if they are not already.
    Categorical members enter as factor terms regardless of the column.
    """
    numeric = [c for g in groups for c in g.members if X.is_numeric(c)]
    X = X.standardize(numeric)
    tasks = [(gi, ki) for gi in range(len(groups)) for ki in range(len(SWEEP_KINDS))]

    def run(task):
        gi, ki = task
        g, kind = groups[gi], SWEEP_KINDS[ki]
        spec = ModelSpec((TermSpec("intercept", TermKind.INTERCEPT, n_basis_t=n_basis_t),
                          *_group_terms(g, kind, X, n_basis_t, n_basis_x)))
        try:
            return fit_additive(ds, X, spec).explained_variability
        except Exception as exc:  # annotate with the failing cell
            raise SweepError(g.name, kind, exc) from exc

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    values = np.array(results).reshape(len(groups), len(SWEEP_KINDS))
    selected = [select_kind(r, threshold) for r in values]
    return SweepTable(list(groups), values, selected)


def build_full_spec(table: SweepTable, X: CovariateTable | None = None,
                    n_basis_t: int = 10, n_basis_x: int = 10) -> ModelSpec:
    """Intercept plus each group's selected term type.

    Categorical members become factor terms, which requires ``X`` to tell
    them apart; without it every member gets the selected type. Numeric
    members must be standardized before the spec is fitted.
    """
    if not table.groups:
        raise ValueError("empty sweep table")
    if len(table.selected) != len(table.groups):
        raise ValueError("every group needs a selected term type")
    terms = [TermSpec("intercept", TermKind.INTERCEPT, n_basis_t=n_basis_t)]
    seen: set = set()
    for g, kind in zip(table.groups, table.selected):
        for c in g.members:
            if c in seen:
                raise ValueError(f"covariate {c!r} appears in more than one group")
            seen.add(c)
            k = TermKind.FACTOR if X is not None and not X.is_numeric(c) else kind
            terms.append(TermSpec(c, k, n_basis_t=n_basis_t, n_basis_x=n_basis_x))
    return ModelSpec(tuple(terms))
