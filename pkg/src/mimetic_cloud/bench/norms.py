"""Error measures, rate fitting and result tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SolutionNorms:
    """Discrete errors of a computed solution.

    ``l2`` is the root mean square point error, i.e. the printed sum over the
    cloud normalized by the number of points; ``h1`` is the diffusive-flux
    seminorm divided by the same seminorm of the exact flux. The
    un-normalized sums (``l2_sum``, ``h1_sum``) and a volume-weighted ``l2``
    are kept alongside.
    """

    l2: float
    h1: float
    l2_sum: float
    h1_sum: float
    l2_weighted: float


def error_norms(u_h, u_exact, flux_h=None, flux_exact=None, eps=1.0, volumes=None) -> SolutionNorms:
    u_h = np.atleast_1d(np.asarray(u_h, dtype=float))
    u_exact = np.atleast_1d(np.asarray(u_exact, dtype=float))
    err = u_h - u_exact
    l2_sum = float(np.sqrt(np.sum(err ** 2)))
    l2 = l2_sum / math.sqrt(len(err))
    w = np.full(len(err), 1.0) if volumes is None else np.asarray(volumes, dtype=float)
    l2_weighted = float(np.sqrt(np.sum(w * err ** 2)))
    h1 = h1_sum = float("nan")
    if flux_h is not None and flux_exact is not None:
        inv_eps = 1.0 / np.broadcast_to(np.asarray(eps, dtype=float), (len(err),))
        ferr = np.sum((np.asarray(flux_h) - np.asarray(flux_exact)) ** 2, axis=1)
        fex = np.sum(np.asarray(flux_exact) ** 2, axis=1)
        h1_sum = float(np.sqrt(np.sum(inv_eps * ferr)))
        denom = float(np.sqrt(np.sum(inv_eps * fex)))
        h1 = h1_sum / denom if denom > 0 else h1_sum
    return SolutionNorms(l2, h1, l2_sum, h1_sum, l2_weighted)


def fit_rate(sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(1/N)``; nan with fewer than 2 usable points."""
    n = np.asarray(sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    ok = np.isfinite(e) & (e > 0)
    if ok.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(1.0 / n[ok]), np.log(e[ok]), 1)[0]
    return float(slope)


@dataclass
class ErrorRow:
    N: int
    h: float
    l2: float
    h1: float = float("nan")
    iterations: int = 0
    seconds: float = 0.0
    converged: bool = True
    label: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class ErrorTable:
    """Rows of a convergence study; rates use converged rows only."""

    name: str
    rows: list = field(default_factory=list)

    def add(self, row: ErrorRow) -> None:
        self.rows.append(row)

    def converged_rows(self, label=None):
        return [r for r in self.rows if r.converged and (label is None or r.label == label)]

    def labels(self):
        return list(dict.fromkeys(r.label for r in self.rows))

    def rate(self, column: str = "l2", label=None) -> float:
        rows = self.converged_rows(label)
        return fit_rate([r.N for r in rows], [getattr(r, column) for r in rows])

    def rows_used(self, label=None) -> int:
        return len(self.converged_rows(label))

    def value(self, N: int, column: str = "l2", label=None) -> float:
        for r in self.rows:
            if r.N == N and (label is None or r.label == label):
                return getattr(r, column) if r.converged else float("nan")
        raise KeyError(N)

    def write_csv(self, path) -> None:
        """Deterministic error table (no wall-clock columns); 'n.c.' marks failed solves."""
        extra_keys = sorted({k for r in self.rows for k in r.extra})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "N", "h", "l2", "h1", *extra_keys, "converged"])
            for r in self.rows:
                fmt = (lambda v: f"{v:.10g}") if r.converged else (lambda v: "n.c.")
                w.writerow([r.label, r.N, f"{r.h:.10g}", fmt(r.l2), fmt(r.h1),
                            *[fmt(r.extra.get(k, float("nan"))) for k in extra_keys], int(r.converged)])
            for label in self.labels():
                w.writerow([label, "rate", "", f"{self.rate('l2', label):.6g}",
                            f"{self.rate('h1', label):.6g}", *[f"{self._extra_rate(k, label):.6g}" for k in extra_keys],
                            self.rows_used(label)])

    def _extra_rate(self, key, label):
        rows = self.converged_rows(label)
        return fit_rate([r.N for r in rows], [r.extra.get(key, float("nan")) for r in rows])

    def write_stats_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "N", "iterations", "seconds", "converged"])
            for r in self.rows:
                w.writerow([r.label, r.N, r.iterations, f"{r.seconds:.4f}", int(r.converged)])
