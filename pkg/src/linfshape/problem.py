"""Assembly problems, their regression form, and the two-stage control pipeline.

Stage one runs the l1-penalized fit for a sequence of penalties found by
bisection until at most ``M`` actuators are active; stage two refits the
unpenalized max-gap problem on the chosen actuators.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .admm import AdmmConfig, SplitProblem, solve_penalized, solve_refit
from .errors import InvalidArgumentError
from .numerics import as_matrix, as_vector, matrix_max_abs, read_csv, write_csv

log = logging.getLogger(__name__)

__all__ = [
    "AssemblyProblem",
    "RegressionProblem",
    "Selection",
    "ControlSolution",
    "build_regression",
    "lambda_upper_bound",
    "count_nonzeros",
    "select_actuators",
    "solve_pair",
    "gap",
    "load_bundle",
    "save_bundle",
]

BUNDLE_FILES = ("B.csv", "U1.csv", "U2.csv", "psi1.csv", "psi2.csv")


@dataclass(frozen=True)
class AssemblyProblem:
    """A pair of incoming fuselages.

    ``U1``, ``U2`` map actuator forces (lb) to deviations (in) at ``2 n_meas``
    coordinates, Y block first then Z block. ``B`` is the diagonal
    ``n_meas x n_meas`` weight matrix; it is applied to both blocks.
    """

    B: np.ndarray
    U1: np.ndarray
    U2: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    L_N: float = 1e7

    def __post_init__(self):
        B = as_matrix(self.B, "B")
        U1 = as_matrix(self.U1, "U1")
        U2 = as_matrix(self.U2, "U2")
        psi1 = as_vector(self.psi1, "psi1")
        psi2 = as_vector(self.psi2, "psi2")
        n = B.shape[0]
        if B.shape != (n, n):
            raise InvalidArgumentError(f"B must be square, got {B.shape}")
        if np.any(B - np.diag(np.diag(B))):
            raise InvalidArgumentError("B must be diagonal")
        if np.any(np.diag(B) < 0):
            raise InvalidArgumentError("B must have nonnegative weights")
        for name, arr in (("U1", U1), ("U2", U2)):
            if arr.shape[0] != 2 * n:
                raise InvalidArgumentError(f"{name} must have {2 * n} rows, got {arr.shape[0]}")
        for name, arr in (("psi1", psi1), ("psi2", psi2)):
            if arr.size != 2 * n:
                raise InvalidArgumentError(f"{name} must have length {2 * n}, got {arr.size}")
        if not (np.isfinite(self.L_N) and self.L_N > 0):
            raise InvalidArgumentError(f"L_N must be positive, got {self.L_N}")
        for name, arr in (("B", B), ("U1", U1), ("U2", U2), ("psi1", psi1), ("psi2", psi2)):
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "L_N", float(self.L_N))

    @property
    def n_meas(self):
        return self.B.shape[0]

    @property
    def m1(self):
        return self.U1.shape[1]

    @property
    def m2(self):
        return self.U2.shape[1]

    @property
    def weights(self):
        """Diagonal of the blockwise weight ``diag(B, B)``."""
        d = np.diag(self.B)
        return np.concatenate([d, d])

    def with_scale(self, L_N):
        return AssemblyProblem(self.B, self.U1, self.U2, self.psi1, self.psi2, L_N)


@dataclass(frozen=True)
class RegressionProblem:
    X: np.ndarray
    Y: np.ndarray
    m1: int
    m2: int

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def build_regression(assembly: AssemblyProblem) -> RegressionProblem:
    """``X = [W U1, -W U2] L_N`` and ``Y = W (psi2 - psi1) L_N`` with ``W = diag(B, B)``.

    With ``beta = [F1; F2]`` this gives ``Y - X beta = W gap L_N``.
    """
    w = assembly.weights * assembly.L_N
    X = np.hstack([assembly.U1, -assembly.U2]) * w[:, None]
    Y = w * (assembly.psi2 - assembly.psi1)
    return RegressionProblem(X=X, Y=Y, m1=assembly.m1, m2=assembly.m2)


def gap(assembly: AssemblyProblem, F1, F2):
    """Post-control gap ``psi2 + U2 F2 - psi1 - U1 F1``."""
    return assembly.psi2 + assembly.U2 @ F2 - assembly.psi1 - assembly.U1 @ F1


def lambda_upper_bound(X):
    """Penalty above which the penalized fit is identically zero (``max |X_ij|``)."""
    bound = matrix_max_abs(X)
    if bound == 0.0:
        raise InvalidArgumentError("design matrix is identically zero")
    return bound


def count_nonzeros(beta, zero_tol=1e-6):
    """Number of entries with ``|beta_i| > zero_tol * max(1, ||beta||_inf)``."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.size == 0:
        return 0
    cutoff = zero_tol * max(1.0, float(np.max(np.abs(beta))))
    return int(np.count_nonzero(np.abs(beta) > cutoff))


def _support(beta, zero_tol):
    cutoff = zero_tol * max(1.0, float(np.max(np.abs(beta)))) if beta.size else 0.0
    return np.flatnonzero(np.abs(beta) > cutoff)


@dataclass
class Selection:
    """Result of the penalty bisection.

    ``probes`` lists ``(lam, nonzero_count, converged)`` in probe order.
    """

    support: np.ndarray
    lambda_used: float
    upper: float
    result: object = None
    probes: list = field(default_factory=list)
    full_support: bool = False

    @property
    def all_converged(self):
        return all(c for _, _, c in self.probes)


def select_actuators(problem, budget, config: AdmmConfig, zero_tol=1e-6, split=None):
    """Bisect the penalty over ``(0, max|X_ij|]`` for at most ``budget`` nonzeros.

    Keeps the smallest probed penalty whose solution has no more than
    ``budget`` nonzeros. Stops once the count equals ``budget`` or the bracket
    is narrower than ``1e-10`` times the upper bound.
    """
    X = problem.X
    p = X.shape[1]
    if budget < 1:
        raise InvalidArgumentError(f"budget must be at least 1, got {budget}")
    if budget >= p:
        log.warning("budget %d >= %d columns; using the full support", budget, p)
        return Selection(
            support=np.arange(p), lambda_used=0.0, upper=float("nan"), full_support=True
        )
    upper = lambda_upper_bound(X)
    if split is None:
        split = SplitProblem.from_regression(X, problem.Y)

    lo, hi = 0.0, upper
    # any lam above the bound yields the zero vector
    best = Selection(support=np.arange(0), lambda_used=upper, upper=upper)
    while hi - lo >= 1e-10 * upper:
        lam = 0.5 * (lo + hi)
        res = solve_penalized(split, config.with_lam(lam))
        support = _support(res.coef_prox, zero_tol)
        best.probes.append((lam, int(support.size), bool(res.converged)))
        if support.size <= budget:
            hi = lam
            best.support, best.lambda_used, best.result = support, lam, res
            if support.size == budget:
                break
        else:
            lo = lam
    return best


@dataclass
class ControlSolution:
    F1: np.ndarray
    F2: np.ndarray
    support1: np.ndarray
    support2: np.ndarray
    delta: np.ndarray
    lambda_used: float
    selection: dict = field(default_factory=dict)
    refit: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    probes: list = field(default_factory=list)
    stage1_coef: np.ndarray = None

    @property
    def n_active(self):
        return int(self.support1.size + self.support2.size)

    @property
    def converged(self):
        ok = self.selection.get("converged", True) and self.refit.get("converged", True)
        return bool(ok and all(c for _, _, c in self.probes))

    def to_dict(self):
        return {
            "F1": self.F1.tolist(),
            "F2": self.F2.tolist(),
            "support1": self.support1.tolist(),
            "support2": self.support2.tolist(),
            "delta": self.delta.tolist(),
            "lambda_used": self.lambda_used,
            "selection": self.selection,
            "refit": self.refit,
            "flags": list(self.flags),
            "n_probes": len(self.probes),
        }


def solve_pair(assembly: AssemblyProblem, budget, config: AdmmConfig, zero_tol=1e-6,
               trace_path=None):
    """Choose at most ``budget`` actuators over both fuselages and refit their forces.

    ``trace_path``, if given, receives the per-iteration trace of the refit.
    """
    m1, m2 = assembly.m1, assembly.m2
    if not 1 <= budget <= m1 + m2:
        raise InvalidArgumentError(f"budget must lie in [1, {m1 + m2}], got {budget}")
    reg = build_regression(assembly)
    split = SplitProblem.from_regression(reg.X, reg.Y)
    flags = []

    if not np.any(reg.Y):
        # no gap to close: the zero force vector attains objective 0
        sel = Selection(support=np.arange(0), lambda_used=0.0, upper=float("nan"))
        flags.append("zero_gap")
    elif not np.any(reg.X):
        sel = Selection(support=np.arange(0), lambda_used=0.0, upper=0.0)
        flags.append("zero_design")
    else:
        sel = select_actuators(reg, budget, config, zero_tol, split=split)
    if sel.full_support:
        flags.append("full_support")

    beta = np.zeros(m1 + m2)
    refit_summary = {}
    if sel.support.size == 0:
        if "zero_gap" not in flags:
            flags.append("empty_support")
    else:
        refit = solve_refit(split, sel.support, config.with_lam(0.0), trace_path=trace_path)
        beta = refit.solution
        refit_summary = refit.summary()

    F1 = beta[:m1].copy()
    F2 = beta[m1:].copy()
    support = sel.support
    stage1 = None if sel.result is None else sel.result.coef_prox
    return ControlSolution(
        F1=F1,
        F2=F2,
        support1=support[support < m1],
        support2=support[support >= m1] - m1,
        delta=gap(assembly, F1, F2),
        lambda_used=float(sel.lambda_used),
        selection={} if sel.result is None else sel.result.summary(),
        refit=refit_summary,
        flags=flags,
        probes=list(sel.probes),
        stage1_coef=stage1,
    )


def save_bundle(directory, assembly: AssemblyProblem, manifest: dict):
    """Write the CSV bundle plus ``manifest.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    for name, arr in zip(
        BUNDLE_FILES, (assembly.B, assembly.U1, assembly.U2, assembly.psi1, assembly.psi2)
    ):
        write_csv(os.path.join(directory, name), arr)
    manifest = dict(manifest)
    manifest.setdefault("format_version", 1)
    manifest.update(n_meas=assembly.n_meas, m1=assembly.m1, m2=assembly.m2, L_N=assembly.L_N)
    tmp = os.path.join(directory, ".manifest.json.part")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(directory, "manifest.json"))


def load_bundle(directory):
    """Read a bundle written by :func:`save_bundle`.

    Returns ``(assembly, manifest)``. The manifest supplies ``L_N`` and is
    checked against the matrix dimensions.
    """
    path = os.path.join(directory, "manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    B = read_csv(os.path.join(directory, "B.csv"))
    U1 = read_csv(os.path.join(directory, "U1.csv"))
    U2 = read_csv(os.path.join(directory, "U2.csv"))
    psi1 = read_csv(os.path.join(directory, "psi1.csv"), vector=True)
    psi2 = read_csv(os.path.join(directory, "psi2.csv"), vector=True)
    assembly = AssemblyProblem(B, U1, U2, psi1, psi2, L_N=float(manifest.get("L_N", 1e7)))
    for key in ("n_meas", "m1", "m2"):
        if key in manifest and int(manifest[key]) != getattr(assembly, key):
            raise InvalidArgumentError(
                f"manifest {key}={manifest[key]} disagrees with data ({getattr(assembly, key)})"
            )
    return assembly, manifest
