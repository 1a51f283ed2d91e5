"""Risks, KL terms, risk bounds, the training surrogate and its gradients.

The classifier weight is Gaussian, ``w ~ N(u, I)`` with prior ``N(u0, I)``,
so the per-sample expectations over ``w`` have closed forms in the unit
feature ``phi_bar``:

* misclassification:  ``E_w I(sign(w.phi_bar) != y) = phi_tail(y * u.phi_bar)``
* disagreement of two independent draws:
  ``E I(f_w1 != f_w2) = 2 * phi_tail(a) * phi_tail(-a)`` with ``a = u.phi_bar``

Sampled hidden configurations enter through per-example feature matrices
(one row per draw, rows unit-norm).  The surrogate objective ``J(u)``
replaces the intractable log-normalizers with their Jensen bound::

    J(u) = ||u - u0||^2 / (2m)
         + (C / (m_l n)) sum_ij  phi_tail(y_i a_ij)
         + (C / (m_u n)) sum_ij  phi_tail(a_ij) phi_tail(-a_ij)

and its analytic ``u``-gradient is implemented alongside for descent.
The trade-off constant ``C`` has its own descent direction, implemented
exactly as the derivative of the bound treated as a function of ``C``
with the risk terms entering ``J`` linearly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InvalidArgumentError
from .numerics import Probability, gauss_pdf, phi_tail

# Per-example sampled features: matrix of unit-norm rows, one per draw.
LabeledFeatures = list[tuple[np.ndarray, int]]
UnlabeledFeatures = list[np.ndarray]

_UNIT_TOL = 1e-6


@dataclass
class ClassifierState:
    """Weight-posterior mean, prior mean, trade-off constant, confidence."""

    u: np.ndarray
    u0: np.ndarray
    C: float
    delta: float = 0.05

    def __post_init__(self):
        if self.u.shape != self.u0.shape:
            raise InvalidArgumentError("u and u0 must have equal dimensions")
        if not self.C > 0:
            raise InvalidArgumentError(f"C must be positive, got {self.C}")
        if not 0.0 < self.delta <= 1.0:
            raise InvalidArgumentError(f"delta must lie in (0, 1], got {self.delta}")


@dataclass
class RiskReport:
    """Per-evaluation risk summary.

    ``bound`` is clamped to [0, 1] for reporting; ``bound_raw`` preserves
    the unclamped value.  ``acceptance_rate`` and ``C`` ride along for
    training telemetry.
    """

    e_S: float = float("nan")
    d_S: float = float("nan")
    R_S: float = float("nan")
    kl_w: float = float("nan")
    J: float = float("nan")
    bound: float = float("nan")
    bound_raw: float = float("nan")
    kl_hidden: float = float("nan")
    acceptance_rate: float = float("nan")
    C: float = float("nan")


def _check_unit_rows(mat: np.ndarray):
    norms = np.linalg.norm(mat, axis=-1)
    if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
        raise ContractViolationError(
            f"feature rows must be unit-norm (max deviation {np.abs(norms - 1.0).max():.3g})"
        )


def expected_error(u: np.ndarray, phi_bar: np.ndarray, y: int) -> Probability:
    """Closed-form Gibbs misclassification probability for one sample."""
    if y not in (-1, 1):
        raise InvalidArgumentError(f"label must be -1 or +1, got {y}")
    phi_bar = np.asarray(phi_bar, dtype=float)
    _check_unit_rows(phi_bar[None, :])
    return phi_tail(y * float(u @ phi_bar))


def expected_disagreement(u: np.ndarray, phi_bar: np.ndarray) -> Probability:
    """Closed-form disagreement probability of two independent weight draws."""
    phi_bar = np.asarray(phi_bar, dtype=float)
    _check_unit_rows(phi_bar[None, :])
    a = float(u @ phi_bar)
    return 2.0 * phi_tail(a) * phi_tail(-a)


def kl_weights(u: np.ndarray, u0: np.ndarray) -> float:
    """KL(N(u, I) || N(u0, I)) = ||u - u0||^2 / 2."""
    u = np.asarray(u, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if u.shape != u0.shape:
        raise InvalidArgumentError("u and u0 must have equal dimensions")
    diff = u - u0
    return 0.5 * float(diff @ diff)


def _margins(u: np.ndarray, features: np.ndarray) -> np.ndarray:
    _check_unit_rows(features)
    return features @ u


def empirical_risks(
    labeled: LabeledFeatures,
    unlabeled: UnlabeledFeatures,
    u: np.ndarray,
    exact_pairing: bool = False,
) -> RiskReport:
    """Sample-averaged risks at ``u``: e_S on labeled, d_S on unlabeled, R_S on labeled.

    e_S pairs the two independent weight draws on the same hidden sample
    (``phi_tail(y a)^2`` per draw); with ``exact_pairing`` both expectations
    run over all draw pairs of an example, i.e. the per-example value is
    ``mean_j(phi_tail)^2``.  An empty unlabeled set yields d_S = 0
    (supervised mode); an empty labeled set is an error.
    """
    if not labeled:
        raise InvalidArgumentError("empirical_risks requires at least one labeled example")
    e_terms = []
    r_terms = []
    for feats, y in labeled:
        p = phi_tail(y * _margins(u, feats))
        r_terms.append(p.mean())
        e_terms.append(p.mean() ** 2 if exact_pairing else (p * p).mean())
    d_terms = []
    for feats in unlabeled:
        a = _margins(u, feats)
        p, q = phi_tail(a), phi_tail(-a)
        d_terms.append(2.0 * p.mean() * q.mean() if exact_pairing else (2.0 * p * q).mean())
    return RiskReport(
        e_S=float(np.mean(e_terms)),
        d_S=float(np.mean(d_terms)) if d_terms else 0.0,
        R_S=float(np.mean(r_terms)),
    )


def _validate_counts(labeled, unlabeled, m: int, m_l: int, m_u: int, n: int):
    if m_l != len(labeled) or m_u != len(unlabeled):
        raise InvalidArgumentError("m_l/m_u must match the provided feature lists")
    if m != m_l + m_u:
        raise InvalidArgumentError(f"m must equal m_l + m_u ({m} != {m_l} + {m_u})")
    if n < 1:
        raise InvalidArgumentError("need at least one hidden draw per example")


def surrogate_objective(
    labeled: LabeledFeatures,
    unlabeled: UnlabeledFeatures,
    u: np.ndarray,
    u0: np.ndarray,
    C: float,
    m: int,
    m_l: int,
    m_u: int,
    n: int,
) -> float:
    """The Jensen surrogate J(u) over fixed hidden samples."""
    _validate_counts(labeled, unlabeled, m, m_l, m_u, n)
    value = kl_weights(u, u0) / m
    lab = 0.0
    for feats, y in labeled:
        lab += phi_tail(y * _margins(u, feats)).mean()
    value += C * lab / m_l
    if m_u > 0:
        unl = 0.0
        for feats in unlabeled:
            a = _margins(u, feats)
            unl += (phi_tail(a) * phi_tail(-a)).mean()
        value += C * unl / m_u
    return float(value)


def grad_u(
    labeled: LabeledFeatures,
    unlabeled: UnlabeledFeatures,
    u: np.ndarray,
    u0: np.ndarray,
    C: float,
    m: int,
    m_l: int,
    m_u: int,
    n: int,
) -> np.ndarray:
    """Analytic gradient of the surrogate J(u) with respect to ``u``."""
    _validate_counts(labeled, unlabeled, m, m_l, m_u, n)
    grad = (u - u0) / m
    lab = np.zeros_like(grad)
    for feats, y in labeled:
        a = _margins(u, feats)
        lab += (gauss_pdf(y * a) * y) @ feats / feats.shape[0]
    grad -= C * lab / m_l
    if m_u > 0:
        unl = np.zeros_like(grad)
        for feats in unlabeled:
            a = _margins(u, feats)
            unl += (gauss_pdf(a) * (phi_tail(a) - phi_tail(-a))) @ feats / feats.shape[0]
        grad += C * unl / m_u
    return grad


def _check_bound_args(risk: float, kl_total: float, C: float, delta: float, m: int):
    if not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}")
    if not 0.0 < delta <= 1.0:
        raise InvalidArgumentError(f"delta must lie in (0, 1], got {delta}")
    if not 0.0 <= risk <= 1.0:
        raise InvalidArgumentError(f"risk must lie in [0, 1], got {risk}")
    if kl_total < 0.0:
        raise InvalidArgumentError(f"KL must be nonnegative, got {kl_total}")
    if m < 1:
        raise InvalidArgumentError(f"m must be at least 1, got {m}")


def bound_supervised(R_S: float, kl_total: float, C: float, delta: float, m: int) -> float:
    """High-probability upper bound on the true Gibbs risk (labeled data only).

    Returns the raw value; callers clamp to 1 for display.
    """
    _check_bound_args(R_S, kl_total, C, delta, m)
    exponent = -C * R_S - (kl_total - np.log(delta)) / m
    return float((1.0 - np.exp(exponent)) / (1.0 - np.exp(-C)))


def bound_semisupervised(
    e_S: float, d_S: float, kl_total: float, C: float, delta: float, m: int
) -> float:
    """Semi-supervised bound: the supervised form at combined risk e_S + d_S/2."""
    return bound_supervised(e_S + 0.5 * d_S, kl_total, C, delta, m)


def grad_C(J_Q: float, R_Sl: float, d_Su: float, C: float, delta: float, m: int) -> float:
    """Descent direction for the trade-off constant.

    Derivative in ``C`` of ``[1 - exp(-J - log(delta)/m)] / (1 - exp(-C))``
    with the risk terms entering J at rate ``R_Sl + d_Su``.
    """
    if not C > 0:
        raise InvalidArgumentError(f"C must be positive, got {C}")
    if not 0.0 < delta <= 1.0:
        raise InvalidArgumentError(f"delta must lie in (0, 1], got {delta}")
    expm = np.exp(-C)
    inner = np.exp(-J_Q - np.log(delta) / m)
    first = -expm / (1.0 - expm) ** 2 * (1.0 - inner)
    second = (R_Sl + d_Su) * inner / (1.0 - expm)
    return float(first + second)
