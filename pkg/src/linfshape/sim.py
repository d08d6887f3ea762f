"""Synthetic fuselage pairs, case-study metrics, the l2 design-shape baseline,
paired comparisons and Monte-Carlo checks of the estimation-error theory.

The generator stands in for FEA data: each actuator's influence decays
exponentially in arc length away from it, and a fixture arc, where the
section is held, sees almost no deformation and no incoming deviation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import linprog

from .admm import AdmmConfig
from .errors import InvalidArgumentError
from .numerics import spd_factorize, spd_solve
from .problem import AssemblyProblem, ControlSolution, gap
from .stats import t_test_greater

log = logging.getLogger(__name__)

__all__ = [
    "FuselageGenParams",
    "MetricsReport",
    "ComparisonReport",
    "TheoryCheckConfig",
    "gen_fuselage_pair",
    "metrics",
    "baseline_l2",
    "lasso",
    "compare",
    "case_study",
    "PairRecord",
    "theory_design",
    "monte_carlo_feasibility",
    "feasibility_bound",
    "error_scaling_study",
    "restricted_eigen_diagnostic",
    "trial_rng",
]


def trial_rng(seed, *keys):
    """Independent generator for ``(seed, *keys)``, stable across execution order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


@dataclass(frozen=True)
class FuselageGenParams:
    """Knobs for :func:`gen_fuselage_pair`.

    Lengths in inches, angles in degrees, ``decay_rate`` per radian of arc,
    ``compliance`` in inches per pound at the actuator itself.
    The second fuselage's actuators sit ``actuator_stagger`` spacings further
    along the arc than the first's, so the pooled columns are distinct.
    ``stiffness_jitter`` optionally perturbs each influence column's gain and
    decay rate.
    """

    n_meas: int = 182
    radius: float = 117.0
    deviation_scale: float = 0.05
    fourier_modes: int = 6
    arc_start_deg: float = -12.0
    arc_end_deg: float = 192.0
    m_feasible: int = 18
    decay_rate: float = 3.0
    fixture_fraction: float = 0.3
    fixture_damping: float = 1e-6
    compliance: float = 2e-4
    stiffness_jitter: float = 0.0
    actuator_stagger: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.n_meas >= self.m_feasible >= 1:
            raise InvalidArgumentError("need n_meas >= m_feasible >= 1")
        if not self.deviation_scale >= 0:
            raise InvalidArgumentError("deviation_scale must be nonnegative")
        if not self.decay_rate > 0:
            raise InvalidArgumentError("decay_rate must be positive")
        if not 0 <= self.fixture_fraction < 1:
            raise InvalidArgumentError("fixture_fraction must lie in [0, 1)")
        if self.fourier_modes < 1:
            raise InvalidArgumentError("fourier_modes must be at least 1")
        if not self.arc_end_deg > self.arc_start_deg:
            raise InvalidArgumentError("actuator arc must have positive length")
        if not 0 <= self.stiffness_jitter < 1:
            raise InvalidArgumentError("stiffness_jitter must lie in [0, 1)")

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return FuselageGenParams(**d)


def _arc_distance(a, b):
    d = np.abs(a - b) % (2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def _geometry(params):
    theta = np.linspace(0.0, 2 * np.pi, params.n_meas, endpoint=False)
    start, end = np.deg2rad(params.arc_start_deg), np.deg2rad(params.arc_end_deg)
    actuators = np.linspace(start, end, params.m_feasible)
    # fixtures sit in the middle of the arc left free of actuators
    free_mid = end + 0.5 * (2 * np.pi - (end - start))
    half_width = np.pi * params.fixture_fraction
    d_fix = _arc_distance(theta, free_mid)
    held = d_fix <= half_width
    return theta, actuators, held, d_fix - half_width


def _influence(theta, actuators, held, params, rng):
    m = actuators.size
    gain = 1.0 + params.stiffness_jitter * rng.uniform(-1.0, 1.0, m)
    rate = params.decay_rate * (1.0 + params.stiffness_jitter * rng.uniform(-1.0, 1.0, m))
    radial = params.compliance * gain * np.exp(-rate * _arc_distance(theta[:, None], actuators))
    radial[held] *= params.fixture_damping
    return np.vstack([radial * np.cos(theta)[:, None], radial * np.sin(theta)[:, None]])


def _deviation(theta, held, ramp, params, rng):
    k = np.arange(2, params.fourier_modes + 2)
    a = rng.standard_normal(k.size) / k
    b = rng.standard_normal(k.size) / k
    r = np.cos(np.outer(theta, k)) @ a + np.sin(np.outer(theta, k)) @ b
    r -= r.mean()
    # deviations fade out towards the fixtures, where the section is held
    r *= 1.0 - np.exp(-np.maximum(ramp, 0.0) / 0.35)
    r[held] = 0.0
    peak = np.max(np.abs(r))
    if peak > 0:
        r *= params.deviation_scale / peak
    return np.concatenate([r * np.cos(theta), r * np.sin(theta)])


def gen_fuselage_pair(params: FuselageGenParams, L_N=1e7) -> AssemblyProblem:
    """Draw a reproducible synthetic fuselage pair.

    Incoming deviations are radial, built from a random truncated Fourier
    series in the section angle (modes ``2 .. fourier_modes + 1``) and scaled
    to a peak of ``deviation_scale``. ``B = diag(1 / n_meas)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(params.seed), 0xF05E]))
    theta, actuators, held, ramp = _geometry(params)
    U1 = _influence(theta, actuators, held, params, rng)
    spacing = (actuators[-1] - actuators[0]) / max(actuators.size - 1, 1)
    U2 = _influence(theta, actuators + params.actuator_stagger * spacing, held, params, rng)
    psi1 = _deviation(theta, held, ramp, params, rng)
    psi2 = _deviation(theta, held, ramp, params, rng)
    B = np.eye(params.n_meas) / params.n_meas
    return AssemblyProblem(B=B, U1=U1, U2=U2, psi1=psi1, psi2=psi2, L_N=L_N)


@dataclass(frozen=True)
class MetricsReport:
    rmsg: float
    mg: float
    mf1: float
    mf2: float


def metrics(solution: ControlSolution, n_meas) -> MetricsReport:
    """RMS gap ``(1/n) sqrt(delta' delta)``, max gap
    ``sqrt(max(dY^2 + dZ^2))`` and max forces ``||F_i||_inf``."""
    delta = np.asarray(solution.delta, dtype=np.float64)
    if delta.size != 2 * n_meas:
        raise InvalidArgumentError(f"gap has length {delta.size}, expected {2 * n_meas}")
    dy, dz = delta[:n_meas], delta[n_meas:]
    rmsg = math.sqrt(float(delta @ delta)) / n_meas
    mg = math.sqrt(float(np.max(dy * dy + dz * dz)))
    mf1 = float(np.max(np.abs(solution.F1))) if solution.F1.size else 0.0
    mf2 = float(np.max(np.abs(solution.F2))) if solution.F2.size else 0.0
    return MetricsReport(rmsg=rmsg, mg=mg, mf1=mf1, mf2=mf2)


def lasso(A, y, lam, rho=1.0, tol=1e-10, max_iter=20_000):
    """ADMM for ``min 0.5 ||A x - y||^2 + lam ||x||_1``; returns the sparse iterate."""
    n, m = A.shape
    factor = spd_factorize(A.T @ A + rho * np.eye(m))
    Aty = A.T @ y
    x = z = u = np.zeros(m)
    for _ in range(max_iter):
        x = spd_solve(factor, Aty + rho * (z - u))
        z_old = z
        v = x + u
        z = np.sign(v) * np.maximum(np.abs(v) - lam / rho, 0.0)
        u = u + x - z
        r = np.linalg.norm(x - z)
        s = rho * np.linalg.norm(z - z_old)
        if r <= tol * max(1.0, np.linalg.norm(z)) and s <= tol * max(1.0, np.linalg.norm(u)):
            break
    return z


def _l2_single(U, psi, budget, zero_tol):
    """Pick at most ``budget`` columns for ``min ||psi + U F||_2`` and refit."""
    m = U.shape[1]
    if budget >= m:
        support = np.arange(m)
    else:
        # columns scaled to unit max so the penalty bisection is well conditioned
        colscale = np.max(np.abs(U), axis=0)
        colscale[colscale == 0] = 1.0
        A = U / colscale
        y = -psi
        upper = float(np.max(np.abs(A.T @ y)))
        support = np.arange(0)
        lo, hi = 0.0, upper
        while upper > 0 and hi - lo >= 1e-10 * upper:
            lam = 0.5 * (lo + hi)
            x = lasso(A, y, lam)
            cut = zero_tol * max(1.0, float(np.max(np.abs(x))))
            s = np.flatnonzero(np.abs(x) > cut)
            if s.size <= budget:
                hi, support = lam, s
                if s.size == budget:
                    break
            else:
                lo = lam
    F = np.zeros(m)
    if support.size:
        F[support] = np.linalg.lstsq(U[:, support], -psi, rcond=None)[0]
    return F, support


def baseline_l2(assembly: AssemblyProblem, budget, config: AdmmConfig = None, zero_tol=1e-6):
    """Design-shape control: each fuselage is driven towards its own nominal
    shape in least squares, with ``budget // 2`` actuators each.

    ``config`` is accepted for signature parity with :func:`solve_pair`; the
    per-fuselage fits are least-squares problems and do not use it.
    """
    if budget < 2 or budget % 2:
        raise InvalidArgumentError(f"baseline needs an even budget >= 2, got {budget}")
    half = budget // 2
    F1, s1 = _l2_single(assembly.U1, assembly.psi1, half, zero_tol)
    F2, s2 = _l2_single(assembly.U2, assembly.psi2, half, zero_tol)
    return ControlSolution(
        F1=F1,
        F2=F2,
        support1=s1,
        support2=s2,
        delta=gap(assembly, F1, F2),
        lambda_used=float("nan"),
        flags=["baseline_l2"],
    )


@dataclass
class ComparisonReport:
    """Paired improvements (baseline minus proposed) with right-tailed t-tests."""

    mg_improvement: np.ndarray
    rmsg_improvement: np.ndarray
    mg_mean: float
    mg_std: float
    mg_t: float
    mg_p: float
    rmsg_mean: float
    rmsg_std: float
    rmsg_t: float
    rmsg_p: float
    n_pairs: int
    degenerate: list = field(default_factory=list)

    def summary(self):
        return {
            "n_pairs": self.n_pairs,
            "mg": {"mean": self.mg_mean, "std": self.mg_std, "t": self.mg_t, "p_value": self.mg_p},
            "rmsg": {
                "mean": self.rmsg_mean,
                "std": self.rmsg_std,
                "t": self.rmsg_t,
                "p_value": self.rmsg_p,
            },
            "degenerate": list(self.degenerate),
        }


def compare(proposed, baseline) -> ComparisonReport:
    if len(proposed) != len(baseline):
        raise InvalidArgumentError("proposed and baseline lists differ in length")
    if len(proposed) < 2:
        raise InvalidArgumentError("need at least two pairs")
    mg = np.array([b.mg - p.mg for p, b in zip(proposed, baseline)])
    rmsg = np.array([b.rmsg - p.rmsg for p, b in zip(proposed, baseline)])
    t_mg = t_test_greater(mg)
    t_rmsg = t_test_greater(rmsg)
    degenerate = [name for name, t in (("mg", t_mg), ("rmsg", t_rmsg)) if t.degenerate]
    return ComparisonReport(
        mg_improvement=mg,
        rmsg_improvement=rmsg,
        mg_mean=t_mg.mean,
        mg_std=t_mg.std,
        mg_t=t_mg.t_statistic,
        mg_p=t_mg.p_value,
        rmsg_mean=t_rmsg.mean,
        rmsg_std=t_rmsg.std,
        rmsg_t=t_rmsg.t_statistic,
        rmsg_p=t_rmsg.p_value,
        n_pairs=len(proposed),
        degenerate=degenerate,
    )


@dataclass
class PairRecord:
    """Per-pair outcome of :func:`case_study`."""

    index: int
    seed: int
    proposed: MetricsReport
    baseline: MetricsReport
    n_active: int
    lambda_used: float
    n_probes: int
    converged: bool
    flags: list = field(default_factory=list)
    # kept only when case_study is asked to; not part of the CSV row
    assembly: AssemblyProblem = field(default=None, repr=False)
    solution: ControlSolution = field(default=None, repr=False)

    def row(self):
        return {
            "pair_id": self.index,
            "seed": self.seed,
            "rmsg_prop": self.proposed.rmsg,
            "mg_prop": self.proposed.mg,
            "mf1_prop": self.proposed.mf1,
            "mf2_prop": self.proposed.mf2,
            "rmsg_base": self.baseline.rmsg,
            "mg_base": self.baseline.mg,
            "mf1_base": self.baseline.mf1,
            "mf2_base": self.baseline.mf2,
            "n_active": self.n_active,
            "lambda_used": self.lambda_used,
            "n_probes": self.n_probes,
            "converged": self.converged,
            "flags": ";".join(self.flags),
        }


def case_study(n_pairs, budget=18, config: AdmmConfig = None, params: FuselageGenParams = None,
               seed=0, L_N=1e7, progress=None, keep_solutions=False):
    """Run the proposed pipeline and the l2 baseline on ``n_pairs`` synthetic pairs.

    Pair ``i`` is drawn with generator seed derived from ``(seed, i)``.
    Returns ``(records, comparison)``. With ``keep_solutions`` each record
    also carries its assembly and the proposed solution.
    """
    from .problem import solve_pair

    if n_pairs < 2:
        raise InvalidArgumentError("need at least two pairs")
    config = config or AdmmConfig()
    params = params or FuselageGenParams()
    records = []
    for i in range(n_pairs):
        pair_seed = int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0])
        asm = gen_fuselage_pair(params.replace(seed=pair_seed), L_N=L_N)
        sol = solve_pair(asm, budget, config)
        base = baseline_l2(asm, budget)
        rec = PairRecord(
            index=i,
            seed=pair_seed,
            proposed=metrics(sol, asm.n_meas),
            baseline=metrics(base, asm.n_meas),
            n_active=sol.n_active,
            lambda_used=sol.lambda_used,
            n_probes=len(sol.probes),
            converged=sol.converged,
            flags=list(sol.flags),
        )
        if keep_solutions:
            rec.assembly, rec.solution = asm, sol
        if not rec.converged:
            log.warning("pair %d: ADMM hit the iteration limit", i)
        records.append(rec)
        if progress is not None:
            progress(rec)
    comparison = compare([r.proposed for r in records], [r.baseline for r in records])
    return records, comparison


# ---------------------------------------------------------------------------
# estimation-error theory checks


@dataclass(frozen=True)
class TheoryCheckConfig:
    sigma: float = 0.1
    alpha: float = 3.0
    sparsity: int = 5
    n_grid: tuple = (128, 256, 512, 1024)
    p: int = 64
    trials: int = 50
    seed: int = 0
    bump_width: float = 1.5

    def __post_init__(self):
        if not self.alpha > 2:
            raise InvalidArgumentError(f"alpha must exceed 2, got {self.alpha}")
        if not 0 <= self.sparsity <= self.p:
            raise InvalidArgumentError("sparsity must lie in [0, p]")
        if not self.sigma >= 0:
            raise InvalidArgumentError("sigma must be nonnegative")
        if self.trials < 1:
            raise InvalidArgumentError("trials must be positive")
        if not self.n_grid or min(self.n_grid) < 2:
            raise InvalidArgumentError("n_grid must hold sample sizes >= 2")
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))

    def lambda0(self, n):
        return self.sigma * math.sqrt(self.alpha * math.log(self.p) / n)


def theory_design(n, p, rng, bump_width=1.5):
    """Design with exponentially decaying columns scaled so ``max_j ||X_j||_1 = O(sqrt n)``.

    Column ``j`` is a random-sign bump centred at a random row; entries are
    ``sqrt(n) * g_ij * exp(-|i - c_j| / bump_width)`` truncated beyond eight
    widths.
    """
    rows = np.arange(n)
    centres = rng.choice(n, size=p, replace=p > n)
    dist = np.abs(rows[:, None] - centres[None, :])
    env = np.exp(-dist / bump_width)
    env[dist > 8 * bump_width] = 0.0
    return math.sqrt(n) * rng.standard_normal((n, p)) * env


def _sparse_truth(p, S, rng):
    beta = np.zeros(p)
    if S:
        idx = rng.choice(p, size=S, replace=False)
        beta[idx] = rng.choice([-1.0, 1.0], size=S) * rng.uniform(1.0, 2.0, size=S)
    return beta


def feasibility_bound(n, p, alpha):
    """Lower bound ``1 - (2n/p) p^{-(alpha-2)/2}`` on the truth-feasibility probability."""
    return 1.0 - (2.0 * n / p) * p ** (-(alpha - 2.0) / 2.0)


def monte_carlo_feasibility(cfg: TheoryCheckConfig):
    """Fraction of trials where ``(1/sqrt n) ||Y - X beta*||_inf <= lambda0``.

    Returns ``{n: {"p", "rate", "bound", "lambda0"}}``.
    """
    out = {}
    for n in cfg.n_grid:
        lam0 = cfg.lambda0(n)
        hits = 0
        for trial in range(cfg.trials):
            rng = trial_rng(cfg.seed, 1, n, trial)
            X = theory_design(n, cfg.p, rng, cfg.bump_width)
            beta = _sparse_truth(cfg.p, cfg.sparsity, rng)
            Y = X @ beta + cfg.sigma * rng.standard_normal(n)
            hits += np.max(np.abs(Y - X @ beta)) / math.sqrt(n) <= lam0
        out[n] = {
            "p": cfg.p,
            "rate": hits / cfg.trials,
            "bound": feasibility_bound(n, cfg.p, cfg.alpha),
            "lambda0": lam0,
        }
    return out


def solve_constrained_lp(X, Y, lambda0):
    """``min ||beta||_1`` s.t. ``(1/sqrt n) ||Y - X beta||_inf <= lambda0`` with HiGHS.

    Returns ``None`` when the constraint set is empty.
    """
    n, p = X.shape
    c = np.concatenate([np.zeros(p), np.ones(p)])
    eye = np.eye(p)
    tol = math.sqrt(n) * lambda0
    A_ub = np.block([
        [eye, -eye],
        [-eye, -eye],
        [-X, np.zeros((n, p))],
        [X, np.zeros((n, p))],
    ])
    b_ub = np.concatenate([np.zeros(2 * p), tol - Y, tol + Y])
    bounds = [(None, None)] * p + [(0, None)] * p
    res = None
    # instances at the edge of feasibility occasionally leave HiGHS without a
    # status; retry with the other algorithms before deciding
    for method in ("highs", "highs-ipm", "highs-ds"):
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method=method)
        if res.status == 0:
            return res.x[:p]
        if res.status == 2:
            return None
    if _minimax_value(X, Y) > tol * (1.0 + 1e-9):
        return None
    raise ArithmeticError(f"LP solver failed: {res.message}")


def _minimax_value(X, Y):
    n, p = X.shape
    ones = np.ones((n, 1))
    c = np.zeros(p + 1)
    c[-1] = 1.0
    A_ub = np.block([[-X, -ones], [X, -ones]])
    b_ub = np.concatenate([-Y, Y])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * p + [(0, None)],
                  method="highs")
    if res.status != 0:
        raise ArithmeticError(f"LP solver failed: {res.message}")
    return float(res.fun)


def restricted_eigen_diagnostic(X, support, rng, n_dirs=200):
    """Smallest ``(1/n) ||X v||^2 / ||v||^2`` over random directions in the cone
    ``||v_{S^c}||_1 <= ||v_S||_1``. A diagnostic, not a certificate."""
    n, p = X.shape
    support = np.asarray(support)
    off = np.setdiff1d(np.arange(p), support)
    worst = math.inf
    for _ in range(n_dirs):
        v = np.zeros(p)
        if support.size:
            v[support] = rng.standard_normal(support.size)
        if off.size:
            w = rng.standard_normal(off.size) * (rng.random(off.size) < 0.2)
            budget = np.abs(v[support]).sum() * rng.random()
            if np.abs(w).sum() > 0:
                w *= budget / np.abs(w).sum()
            v[off] = w
        nv = v @ v
        if nv == 0:
            continue
        worst = min(worst, float((X @ v) @ (X @ v)) / n / nv)
    return worst


def error_scaling_study(cfg: TheoryCheckConfig, n_boot=200):
    """Mean estimation and prediction errors of the constrained l1 estimator per ``n``
    and least-squares slopes of their logs against ``log n``.

    Estimation error is ``||beta_hat - beta*||_2``; prediction error is
    ``(1/sqrt n) ||X (beta_hat - beta*)||_2``. Slope intervals are 95%
    percentile bootstrap intervals over trials.
    """
    grid = sorted(cfg.n_grid)
    if len(grid) < 2 or len(set(grid)) != len(grid):
        raise InvalidArgumentError("n_grid needs at least two distinct sample sizes")
    est = np.full((len(grid), cfg.trials), np.nan)
    pred = np.full((len(grid), cfg.trials), np.nan)
    infeasible = {}
    col_ratio = {}
    re_diag = {}
    for gi, n in enumerate(grid):
        lam0 = cfg.lambda0(n)
        infeasible[n] = 0
        ratios = []
        for trial in range(cfg.trials):
            rng = trial_rng(cfg.seed, 2, n, trial)
            X = theory_design(n, cfg.p, rng, cfg.bump_width)
            beta = _sparse_truth(cfg.p, cfg.sparsity, rng)
            Y = X @ beta + cfg.sigma * rng.standard_normal(n)
            ratios.append(np.max(np.abs(X).sum(axis=0)) / math.sqrt(n))
            if trial == 0:
                re_diag[n] = restricted_eigen_diagnostic(
                    X, np.flatnonzero(beta), trial_rng(cfg.seed, 3, n)
                )
            beta_hat = solve_constrained_lp(X, Y, lam0)
            if beta_hat is None:
                infeasible[n] += 1
                continue
            nu = beta_hat - beta
            est[gi, trial] = np.linalg.norm(nu)
            pred[gi, trial] = np.linalg.norm(X @ nu) / math.sqrt(n)
        col_ratio[n] = float(np.max(ratios))

    log_n = np.log(np.asarray(grid, dtype=float))

    def slope(errors):
        means = np.nanmean(errors, axis=1)
        if np.any(means <= 0):
            return float("nan"), means
        return float(np.polyfit(log_n, np.log(means), 1)[0]), means

    def boot(errors):
        rng = trial_rng(cfg.seed, 4)
        out = []
        for _ in range(n_boot):
            idx = rng.integers(0, cfg.trials, size=cfg.trials)
            s, _ = slope(errors[:, idx])
            out.append(s)
        out = np.asarray(out)
        out = out[np.isfinite(out)]
        if out.size == 0:
            return [float("nan"), float("nan")]
        return [float(np.percentile(out, 2.5)), float(np.percentile(out, 97.5))]

    est_slope, est_means = slope(est)
    pred_slope, pred_means = slope(pred)
    return {
        "n_grid": grid,
        "p": cfg.p,
        "sparsity": cfg.sparsity,
        "sigma": cfg.sigma,
        "alpha": cfg.alpha,
        "estimation_error_mean": est_means.tolist(),
        "prediction_error_mean": pred_means.tolist(),
        "estimation_slope": est_slope,
        "estimation_slope_ci": boot(est),
        "prediction_slope": pred_slope,
        "prediction_slope_ci": boot(pred),
        "infeasible_trials": {str(k): v for k, v in infeasible.items()},
        "max_col_l1_over_sqrt_n": {str(k): v for k, v in col_ratio.items()},
        "restricted_eigen_diagnostic": {str(k): v for k, v in re_diag.items()},
    }
