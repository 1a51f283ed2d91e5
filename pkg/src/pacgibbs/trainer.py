"""EM-like bound-minimization training loop.

One outer iteration: (E) draw hidden-sample sets from the tilted
posterior of every training example; (M1) re-estimate the positive
model from hidden draws of positive-labeled examples and the negative
model from negative-labeled ones; (M2) take one gradient step on the
weight-posterior mean ``u``; (M3) optionally step the trade-off
constant ``C``.  The loop stops when the surrogate objective changes by
less than ``convergence_tol`` for three consecutive iterations.

The prior mean ``u0`` is fit once, before the loop, on held-aside
fractions of the data by minimizing the label risk plus half the
disagreement over untilted hidden draws, restarting from random points
in ``[-init_range, init_range]^dim`` and keeping the best.

The fixed-rate step of the reference procedure diverges easily on this
non-convex objective, so each ``u`` step is wrapped in a backtracking
guard: the step size is halved (up to 20 times) until the surrogate does
not increase on the current iteration's samples.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import (
    ClassifierState,
    RiskReport,
    bound_semisupervised,
    bound_supervised,
    empirical_risks,
    grad_C,
    grad_u,
    kl_weights,
    surrogate_objective,
)
from .errors import InvalidArgumentError, TrainingAbort
from .features import GenerativeBackend
from .predictor import score_example
from .sampler import TiltConfig, rejection_sample

C_UPDATE_MODES = ("gradient", "cross_validation", "fixed")
MIN_C = 1e-3
MAX_U_NORM = 1e6
DEGRADED_ABORT_FRACTION = 0.2
U0_MAX_ITERS = 300
MAX_HALVINGS = 20

# spawn_key namespaces for seed-derived random streams
_PHASE_U0_SAMPLES = 0
_PHASE_LOOP = 1
_PHASE_U0_STARTS = 2
_PHASE_FRACTIONS = 3
_PHASE_INITIAL_U = 4
_PHASE_CV = 5


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible stream for a (seed, key path) pair."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults follow the evaluation protocol."""

    gamma_u: float = 0.5
    gamma_c: float = 0.05
    max_outer_iters: int = 50
    restarts: int = 10
    init_range: float = 20.0
    u0_fraction: float = 0.5
    delta: float = 0.05
    C_init: float = 1.0
    c_update: str = "gradient"
    convergence_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("gamma_u", "gamma_c", "init_range", "convergence_tol"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        # C = 0 disables the tilt entirely (plain Monte Carlo EM) and is
        # only meaningful when C is not being adapted.
        if self.C_init < 0 or (self.C_init == 0 and self.c_update != "fixed"):
            raise InvalidArgumentError("C_init must be positive (or 0 with c_update=fixed)")
        if not 0.0 < self.u0_fraction <= 1.0:
            raise InvalidArgumentError("u0_fraction must lie in (0, 1]")
        if not 0.0 < self.delta <= 1.0:
            raise InvalidArgumentError("delta must lie in (0, 1]")
        if self.c_update not in C_UPDATE_MODES:
            raise InvalidArgumentError(f"unknown c_update mode {self.c_update!r}")
        if self.restarts < 1 or self.max_outer_iters < 1:
            raise InvalidArgumentError("restarts and max_outer_iters must be >= 1")


@dataclass
class TrainedTask:
    """Output of one training run."""

    u0: np.ndarray
    u: np.ndarray
    C: float
    backend_plus: GenerativeBackend
    backend_minus: GenerativeBackend
    history: list[RiskReport]
    flags: dict = field(default_factory=dict)
    predict_normalized: bool = True
    delta: float = 0.05

    def classifier_state(self) -> ClassifierState:
        return ClassifierState(u=self.u, u0=self.u0, C=self.C, delta=self.delta)


def _sample_sets(S_l, S_u, bp, bm, u, tcfg, seed, iteration):
    sets_l = []
    for i, (x, y) in enumerate(S_l):
        rng = derive_rng(seed, _PHASE_LOOP, iteration, i)
        sets_l.append(rejection_sample(x, y, bp, bm, u, tcfg, rng, example_id=i))
    sets_u = []
    for i, x in enumerate(S_u):
        rng = derive_rng(seed, _PHASE_LOOP, iteration, len(S_l) + i)
        sets_u.append(rejection_sample(x, None, bp, bm, u, tcfg, rng, example_id=len(S_l) + i))
    return sets_l, sets_u


def _backtracking_step(value_fn, grad: np.ndarray, u: np.ndarray, j_u: float, gamma: float):
    """One descent step; halve the rate until the objective does not increase."""
    step = gamma
    for _ in range(MAX_HALVINGS + 1):
        cand = u - step * grad
        j_cand = value_fn(cand)
        if j_cand <= j_u:
            return cand, j_cand
        step *= 0.5
    return u, j_u


def _descend(value_fn, grad_fn, u: np.ndarray, gamma: float, max_iters: int):
    j_u = value_fn(u)
    for _ in range(max_iters):
        u_new, j_new = _backtracking_step(value_fn, grad_fn(u), u, j_u, gamma)
        if j_new >= j_u - 1e-14:
            return u_new, j_new
        u, j_u = u_new, j_new
    return u, j_u


def init_u0(
    S_l_fraction,
    S_u_fraction,
    backend_plus: GenerativeBackend,
    backend_minus: GenerativeBackend,
    cfg: TrainConfig,
    tilt_cfg: TiltConfig,
    max_iters: int = U0_MAX_ITERS,
) -> np.ndarray:
    """Prior mean: minimize label risk + half disagreement on held-aside fractions.

    Hidden features are drawn once from the untilted model posteriors
    (C = 0 sampling); the objective is the surrogate without its
    quadratic term and without C-scaling.  Descent runs from
    ``cfg.restarts`` random starts plus one model-based start (the
    backends' natural weights, which realize the generative
    discriminant in feature space -- random starts alone almost always
    sit on the objective's saturated plateaus); the best final value
    wins.  With ``max_iters`` = 0 that is the best start as-is.
    """
    if not S_l_fraction:
        raise InvalidArgumentError("u0 initialization requires labeled examples")
    S_u_fraction = list(S_u_fraction or [])
    untilted = replace(tilt_cfg, C=0.0)
    zero_u = np.zeros(backend_plus.block_dim() + backend_minus.block_dim() + 1)
    labeled = []
    for i, (x, y) in enumerate(S_l_fraction):
        rng = derive_rng(cfg.seed, _PHASE_U0_SAMPLES, i)
        s = rejection_sample(x, y, backend_plus, backend_minus, zero_u, untilted, rng, example_id=i)
        labeled.append((s.feature_matrix(), y))
    unlabeled = []
    for i, x in enumerate(S_u_fraction):
        rng = derive_rng(cfg.seed, _PHASE_U0_SAMPLES, len(S_l_fraction) + i)
        s = rejection_sample(x, None, backend_plus, backend_minus, zero_u, untilted, rng)
        unlabeled.append(s.feature_matrix())

    m_l, m_u = len(labeled), len(unlabeled)
    m, n = m_l + m_u, tilt_cfg.n_draws
    dim = labeled[0][0].shape[1]

    def objective(u):
        return surrogate_objective(labeled, unlabeled, u, u, 1.0, m, m_l, m_u, n)

    def gradient(u):
        return grad_u(labeled, unlabeled, u, u, 1.0, m, m_l, m_u, n)

    starts = [
        derive_rng(cfg.seed, _PHASE_U0_STARTS, r).uniform(-cfg.init_range, cfg.init_range, dim)
        for r in range(cfg.restarts)
    ]
    starts.append(
        np.concatenate(
            [backend_plus.natural_weights(), -backend_minus.natural_weights(), [0.0]]
        )
    )
    best_u, best_j = None, math.inf
    for start in starts:
        u_r, j_r = _descend(objective, gradient, start, cfg.gamma_u, max_iters)
        if j_r < best_j:
            best_u, best_j = u_r, j_r
    return best_u


def _hidden_kl(sample_sets, m: int) -> float:
    """Per-example posterior-vs-model KL, estimated from the sampler.

    Accepted draws estimate the tilted-posterior expectation of the log
    tilt; the acceptance rate estimates the normalizer.  Clamped at 0
    (the exact quantity is nonnegative; estimates can dip below).
    """
    total = 0.0
    for s in sample_sets:
        rate = max(s.acceptance_rate, np.finfo(float).tiny)
        total += max(0.0, s.mean_exponent() - np.log(rate))
    return total / m


def _evaluate(labeled, unlabeled, sets_l, sets_u, u, u0, C, delta, m, m_l, m_u, n) -> RiskReport:
    """Full risk report at the current state, on the current samples."""
    risks = empirical_risks(labeled, unlabeled, u)
    klw = kl_weights(u, u0)
    kl_hidden = _hidden_kl(sets_l + sets_u, m)
    kl_total = klw + kl_hidden
    J = surrogate_objective(labeled, unlabeled, u, u0, C, m, m_l, m_u, n)
    if C == 0.0:
        raw = float("inf")  # the bound degenerates as C -> 0; vacuous
    elif m_u > 0:
        raw = bound_semisupervised(risks.e_S, risks.d_S, kl_total, C, delta, m)
    else:
        raw = bound_supervised(risks.R_S, kl_total, C, delta, m)
    rates = [s.acceptance_rate for s in sets_l + sets_u]
    return RiskReport(
        e_S=risks.e_S,
        d_S=risks.d_S,
        R_S=risks.R_S,
        kl_w=klw,
        J=J,
        bound=min(raw, 1.0),
        bound_raw=raw,
        kl_hidden=kl_hidden,
        acceptance_rate=float(np.mean(rates)),
        C=C,
    )


def train(
    S_l,
    S_u,
    backend_plus: GenerativeBackend,
    backend_minus: GenerativeBackend,
    cfg: TrainConfig,
    tilt_cfg: TiltConfig | None = None,
    initial_u: np.ndarray | None = None,
) -> TrainedTask:
    """Run the full loop on labeled pairs ``S_l`` and unlabeled inputs ``S_u``.

    The supplied backends are cloned, never mutated.  With no
    ``initial_u`` the loop starts from the fitted prior mean.
    """
    S_l = list(S_l)
    S_u = list(S_u or [])
    if not S_l:
        raise InvalidArgumentError("training requires labeled examples")
    m_l, m_u = len(S_l), len(S_u)
    m = m_l + m_u
    bp, bm = backend_plus.clone(), backend_minus.clone()
    dim = bp.block_dim() + bm.block_dim() + 1

    if tilt_cfg is None:
        tilt_cfg = TiltConfig(C=cfg.C_init, m=m, m_l=m_l, m_u=m_u)
    else:
        tilt_cfg = replace(tilt_cfg, m=m, m_l=max(m_l, 1), m_u=max(m_u, 1))
    n = tilt_cfg.n_draws

    frac_rng = derive_rng(cfg.seed, _PHASE_FRACTIONS)
    n_l0 = max(1, math.ceil(cfg.u0_fraction * m_l))
    idx_l = frac_rng.permutation(m_l)[:n_l0]
    idx_u = frac_rng.permutation(m_u)[: int(round(cfg.u0_fraction * m_u))]
    u0 = init_u0(
        [S_l[i] for i in idx_l], [S_u[i] for i in idx_u], bp, bm, cfg, tilt_cfg
    )

    u = u0.copy() if initial_u is None else np.asarray(initial_u, dtype=float).copy()
    if u.shape != (dim,):
        raise InvalidArgumentError(f"initial u must have dimension {dim}")
    C = float(cfg.C_init)
    if cfg.c_update == "cross_validation":
        C = select_C_by_cv(S_l, backend_plus, backend_minus, cfg, tilt_cfg)

    history: list[RiskReport] = []
    degraded_counts: list[int] = []
    prev_j = None
    consecutive_small = 0
    for it in range(cfg.max_outer_iters):
        tcfg = replace(tilt_cfg, C=C)
        sets_l, sets_u = _sample_sets(S_l, S_u, bp, bm, u, tcfg, cfg.seed, it)
        n_degraded = sum(s.degraded for s in sets_l) + sum(s.degraded for s in sets_u)
        degraded_counts.append(n_degraded)
        if n_degraded > DEGRADED_ABORT_FRACTION * m:
            raise TrainingAbort(
                f"iteration {it}: {n_degraded}/{m} examples exhausted the sampling "
                f"budget (>{DEGRADED_ABORT_FRACTION:.0%}); lower C or raise max_attempts"
            )

        plus_samples = [
            (x, h_plus, 1.0)
            for (x, y), s in zip(S_l, sets_l)
            if y == 1
            for h_plus, _, _, _ in s.draws
        ]
        minus_samples = [
            (x, h_minus, 1.0)
            for (x, y), s in zip(S_l, sets_l)
            if y == -1
            for _, h_minus, _, _ in s.draws
        ]
        if plus_samples:
            bp.update_parameters(plus_samples)
        if minus_samples:
            bm.update_parameters(minus_samples)

        labeled = [(s.feature_matrix(), y) for (_, y), s in zip(S_l, sets_l)]
        unlabeled = [s.feature_matrix() for s in sets_u]

        report = _evaluate(
            labeled, unlabeled, sets_l, sets_u, u, u0, C, cfg.delta, m, m_l, m_u, n
        )
        history.append(report)

        def j_of(v):
            return surrogate_objective(labeled, unlabeled, v, u0, C, m, m_l, m_u, n)

        g = grad_u(labeled, unlabeled, u, u0, C, m, m_l, m_u, n)
        u, j_after = _backtracking_step(j_of, g, u, report.J, cfg.gamma_u)
        if np.linalg.norm(u) > MAX_U_NORM:
            raise TrainingAbort(f"iteration {it}: ||u|| exceeded {MAX_U_NORM:g}; diverged")

        if cfg.c_update == "gradient":
            step = cfg.gamma_c * grad_C(j_after, report.R_S, report.d_S, C, cfg.delta, m)
            C = max(C - step, MIN_C)

        if prev_j is not None and abs(report.J - prev_j) < cfg.convergence_tol:
            consecutive_small += 1
            if consecutive_small >= 3:
                prev_j = report.J
                break
        else:
            consecutive_small = 0
        prev_j = report.J

    return TrainedTask(
        u0=u0,
        u=u,
        C=C,
        backend_plus=bp,
        backend_minus=bm,
        history=history,
        flags={
            "degraded_per_iteration": degraded_counts,
            "bound_is_heuristic": cfg.c_update != "fixed",
        },
        delta=cfg.delta,
    )


def multi_restart_train(
    S_l,
    S_u,
    backend_plus: GenerativeBackend,
    backend_minus: GenerativeBackend,
    cfg: TrainConfig,
    tilt_cfg: TiltConfig | None = None,
) -> TrainedTask:
    """Best of ``cfg.restarts`` runs by final surrogate value.

    Restart 0 reproduces :func:`train` exactly (same seed, prior-mean
    start); later restarts use shifted seeds and random initial weights.
    Per-run aborts propagate only if every restart aborts.
    """
    dim = backend_plus.block_dim() + backend_minus.block_dim() + 1
    best: TrainedTask | None = None
    failures: list[str] = []
    for r in range(cfg.restarts):
        cfg_r = replace(cfg, seed=cfg.seed + r)
        initial_u = None
        if r > 0:
            initial_u = derive_rng(cfg_r.seed, _PHASE_INITIAL_U).uniform(
                -cfg.init_range, cfg.init_range, dim
            )
        try:
            task = train(S_l, S_u, backend_plus, backend_minus, cfg_r, tilt_cfg, initial_u)
        except TrainingAbort as exc:
            failures.append(f"restart {r}: {exc}")
            continue
        if best is None or task.history[-1].J < best.history[-1].J:
            best = task
    if best is None:
        raise TrainingAbort("all restarts aborted:\n" + "\n".join(failures))
    return best


def evaluate_bounds(
    S_l,
    S_u,
    task: TrainedTask,
    tilt_cfg: TiltConfig,
    delta: float,
    seed: int,
) -> dict:
    """Risk and bound components of a trained task on the given data.

    Hidden samples are drawn from the tilted posteriors at the task's
    (u, C); both the supervised and the semi-supervised bound are
    reported raw (callers clamp for display).
    """
    S_l = list(S_l)
    S_u = list(S_u or [])
    m_l, m_u = len(S_l), len(S_u)
    m = m_l + m_u
    tcfg = replace(tilt_cfg, C=task.C, m=m, m_l=max(m_l, 1), m_u=max(m_u, 1))
    sets_l, sets_u = _sample_sets(
        S_l, S_u, task.backend_plus, task.backend_minus, task.u, tcfg, seed, 0
    )
    labeled = [(s.feature_matrix(), y) for (_, y), s in zip(S_l, sets_l)]
    unlabeled = [s.feature_matrix() for s in sets_u]
    risks = empirical_risks(labeled, unlabeled, task.u)
    klw = kl_weights(task.u, task.u0)
    kl_hidden = _hidden_kl(sets_l + sets_u, m)
    kl_total = klw + kl_hidden
    if m_u > 0:
        semi = bound_semisupervised(risks.e_S, risks.d_S, kl_total, task.C, delta, m)
    else:
        # With every example labeled, the combined risk e + d/2 over the
        # whole set collapses to R by the decomposition identity, so the
        # two bounds coincide.
        semi = bound_supervised(risks.R_S, kl_total, task.C, delta, m)
    return {
        "R_S": risks.R_S,
        "e_S": risks.e_S,
        "d_S": risks.d_S,
        "kl_w": klw,
        "kl_hidden": kl_hidden,
        "bound_supervised_raw": bound_supervised(risks.R_S, kl_total, task.C, delta, m),
        "bound_semisupervised_raw": semi,
    }


def select_C_by_cv(
    S_l,
    backend_plus: GenerativeBackend,
    backend_minus: GenerativeBackend,
    cfg: TrainConfig,
    tilt_cfg: TiltConfig,
    n_votes: int = 5,
) -> float:
    """Pick C from {2^-6 .. 2^6} by stratified 10-fold CV accuracy on S_l."""
    ys = np.array([y for _, y in S_l])
    pos = np.flatnonzero(ys == 1)
    neg = np.flatnonzero(ys == -1)
    n_folds = min(10, pos.size, neg.size)
    if n_folds < 2:
        warnings.warn("too few examples per class for CV; keeping C_init")
        return float(cfg.C_init)

    rng = derive_rng(cfg.seed, _PHASE_CV)
    fold_of = np.empty(len(S_l), dtype=int)
    for group in (pos, neg):
        perm = rng.permutation(group)
        fold_of[perm] = np.arange(perm.size) % n_folds

    inner_cfg = replace(cfg, c_update="fixed", restarts=1)
    best_c, best_acc = float(cfg.C_init), -1.0
    for k in range(-6, 7):
        C = 2.0**k
        accs = []
        for f in range(n_folds):
            train_set = [S_l[i] for i in range(len(S_l)) if fold_of[i] != f]
            val_set = [S_l[i] for i in range(len(S_l)) if fold_of[i] == f]
            cfg_f = replace(inner_cfg, C_init=C, seed=cfg.seed + 1000 * (k + 7) + f)
            try:
                task = train(train_set, [], backend_plus, backend_minus, cfg_f, tilt_cfg)
            except TrainingAbort:
                accs.append(0.0)
                continue
            eval_rng = derive_rng(cfg_f.seed, _PHASE_CV, 1)
            correct = 0
            for x, y in val_set:
                score = score_example(
                    x, task.backend_plus, task.backend_minus, task.u, n_votes, eval_rng
                )
                correct += (1 if score >= 0 else -1) == y
            accs.append(correct / len(val_set))
        mean_acc = float(np.mean(accs))
        if mean_acc > best_acc:
            best_c, best_acc = C, mean_acc
    return best_c
