"""Discrete-output hidden Markov backend for variable-length sequences.

Hidden variable: a state path ``q`` (stored as an int array of state
indices, one per time step).  Inference uses the scaled forward-backward
recursions; exact path draws use forward-filter backward-sampling, so the
proposal distribution is exactly P(q | x) as the rejection rule requires.

The feature block for a realization ``(x, q)`` stacks, in order::

    [ initial-state indicator        (M entries)
      transition counts n_ij         (M*M, row-major)
      n_ij * log Apost_ij            (M*M)
      state-symbol co-occurrences    (M*K_out) ]

where ``Apost`` is the per-example posterior transition matrix estimated
from that example's pairwise marginals.  All probability rows are floored
at ``PROB_FLOOR`` so the ``log Apost`` entries stay finite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidSequenceError
from .features import GenerativeBackend

DEFAULT_STATES = 10
DEFAULT_SYMBOLS = 22
PROB_FLOOR = 1e-8


def _floor_rows(p: np.ndarray, floor: float) -> np.ndarray:
    """Floor entries then renormalize rows (or a single distribution)."""
    p = np.maximum(p, floor)
    return p / p.sum(axis=-1, keepdims=True)


@dataclass
class HmmParams:
    """Initial distribution, row-stochastic transition and emission matrices."""

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.emission.shape[1]

    def copy(self) -> "HmmParams":
        return HmmParams(self.initial.copy(), self.transition.copy(), self.emission.copy())


@dataclass
class HmmPosterior:
    """Exact posteriors of one sequence under fixed parameters.

    gamma: per-time state marginals, shape (L, M).
    xi: per-time pairwise marginals, shape (L-1, M, M); each slice sums to 1.
    transition_post: row-normalized sum of xi over time (uniform rows where
        a state carries no visit mass), floored; this is the per-example
        posterior transition matrix whose log enters the feature block.
    alphas: scaled forward variables, kept for backward sampling.
    log_likelihood: log P(x) from the forward scaling constants.
    """

    gamma: np.ndarray
    xi: np.ndarray
    transition_post: np.ndarray
    alphas: np.ndarray = field(repr=False, default=None)
    log_likelihood: float = 0.0


def _check_tokens(x: np.ndarray, n_symbols: int) -> np.ndarray:
    x = np.asarray(x, dtype=int)
    if x.ndim != 1 or x.size < 1:
        raise InvalidSequenceError("sequence must be a 1-d token array of length >= 1")
    if np.any(x < 0) or np.any(x >= n_symbols):
        bad = int(x[(x < 0) | (x >= n_symbols)][0])
        raise InvalidSequenceError(f"token {bad} outside alphabet of size {n_symbols}")
    return x


def forward_backward(x: np.ndarray, params: HmmParams, prob_floor: float = PROB_FLOOR) -> HmmPosterior:
    """Scaled forward-backward pass; returns exact posteriors for ``x``."""
    x = _check_tokens(x, params.n_symbols)
    L, M = x.size, params.n_states
    emit = params.emission[:, x]  # (M, L)

    alphas = np.empty((L, M))
    scales = np.empty(L)
    alphas[0] = params.initial * emit[:, 0]
    scales[0] = alphas[0].sum()
    alphas[0] /= scales[0]
    for t in range(1, L):
        alphas[t] = (alphas[t - 1] @ params.transition) * emit[:, t]
        scales[t] = alphas[t].sum()
        alphas[t] /= scales[t]

    betas = np.empty((L, M))
    betas[L - 1] = 1.0
    for t in range(L - 2, -1, -1):
        betas[t] = params.transition @ (emit[:, t + 1] * betas[t + 1]) / scales[t + 1]

    gamma = alphas * betas
    xi = np.empty((L - 1, M, M))
    for t in range(L - 1):
        xi[t] = (
            alphas[t][:, None]
            * params.transition
            * (emit[:, t + 1] * betas[t + 1])[None, :]
            / scales[t + 1]
        )

    counts = xi.sum(axis=0) if L > 1 else np.zeros((M, M))
    row_mass = counts.sum(axis=1)
    a_post = np.full((M, M), 1.0 / M)
    occupied = row_mass > 0.0
    a_post[occupied] = counts[occupied] / row_mass[occupied, None]
    a_post = _floor_rows(a_post, prob_floor)

    return HmmPosterior(
        gamma=gamma,
        xi=xi,
        transition_post=a_post,
        alphas=alphas,
        log_likelihood=float(np.log(scales).sum()),
    )


def _categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    return min(int(np.searchsorted(np.cumsum(p), p.sum() * rng.random())), p.shape[0] - 1)


def sample_path(
    x: np.ndarray, params: HmmParams, posterior: HmmPosterior, rng: np.random.Generator
) -> np.ndarray:
    """Exact draw from P(q | x) by backward sampling of the forward filter."""
    alphas = posterior.alphas
    L = alphas.shape[0]
    q = np.empty(L, dtype=int)
    q[L - 1] = _categorical(alphas[L - 1], rng)
    for t in range(L - 2, -1, -1):
        q[t] = _categorical(alphas[t] * params.transition[:, q[t + 1]], rng)
    return q


def feature_block_hmm(
    x: np.ndarray, q: np.ndarray, transition_post: np.ndarray, n_symbols: int
) -> np.ndarray:
    """Feature block of dimension M + 2*M^2 + M*K_out for the path ``q``."""
    M = transition_post.shape[0]
    init = np.zeros(M)
    init[q[0]] = 1.0
    trans_counts = np.zeros((M, M))
    np.add.at(trans_counts, (q[:-1], q[1:]), 1.0)
    emit_counts = np.zeros((M, n_symbols))
    np.add.at(emit_counts, (q, x), 1.0)
    return np.concatenate(
        [
            init,
            trans_counts.ravel(),
            (trans_counts * np.log(transition_post)).ravel(),
            emit_counts.ravel(),
        ]
    )


def joint_log_density_hmm(x: np.ndarray, q: np.ndarray, params: HmmParams) -> float:
    """log P(x, q) along the path: initial + transitions + emissions."""
    total = np.log(params.initial[q[0]])
    total += np.log(params.transition[q[:-1], q[1:]]).sum()
    total += np.log(params.emission[q, x]).sum()
    return float(total)


def m_step_hmm(
    samples: list[tuple[np.ndarray, np.ndarray, float]],
    previous: HmmParams,
    prob_floor: float = PROB_FLOOR,
) -> HmmParams:
    """Weighted re-estimation of initial/transition/emission from (x, q, w) triples."""
    if not samples:
        warnings.warn("m_step_hmm called with no samples; parameters unchanged")
        return previous.copy()
    M, K = previous.n_states, previous.n_symbols
    init_counts = np.zeros(M)
    trans_counts = np.zeros((M, M))
    emit_counts = np.zeros((M, K))
    total_w = 0.0
    for x, q, w in samples:
        x = np.asarray(x, dtype=int)
        q = np.asarray(q, dtype=int)
        init_counts[q[0]] += w
        np.add.at(trans_counts, (q[:-1], q[1:]), w)
        np.add.at(emit_counts, (q, x), w)
        total_w += w
    if total_w <= 0.0:
        warnings.warn("m_step_hmm called with zero total weight; parameters unchanged")
        return previous.copy()

    def normalize(counts: np.ndarray) -> np.ndarray:
        counts = np.atleast_2d(counts)
        out = np.empty_like(counts, dtype=float)
        for i, row in enumerate(counts):
            s = row.sum()
            out[i] = row / s if s > 0 else np.full(row.shape, 1.0 / row.size)
        return _floor_rows(out, prob_floor)

    return HmmParams(
        initial=normalize(init_counts)[0],
        transition=normalize(trans_counts),
        emission=normalize(emit_counts),
    )


class HmmBackend(GenerativeBackend):
    """Generative-backend adapter around the HMM operations."""

    def __init__(self, params: HmmParams, prob_floor: float = PROB_FLOOR):
        self.params = params
        self.prob_floor = prob_floor

    @classmethod
    def from_data(
        cls,
        sequences: list[np.ndarray],
        n_states: int,
        n_symbols: int,
        rng: np.random.Generator,
    ) -> "HmmBackend":
        """Initialize with uniform start, perturbed-uniform transitions, and
        emissions biased toward the empirical symbol frequencies."""
        if not sequences:
            raise InvalidArgumentError("need at least one training sequence")
        freq = np.zeros(n_symbols)
        for s in sequences:
            np.add.at(freq, np.asarray(s, dtype=int), 1.0)
        freq = _floor_rows(freq / freq.sum(), PROB_FLOOR)
        transition = _floor_rows(1.0 + 0.5 * rng.random((n_states, n_states)), PROB_FLOOR)
        emission = _floor_rows(freq[None, :] * (1.0 + 0.5 * rng.random((n_states, n_symbols))), PROB_FLOOR)
        params = HmmParams(
            initial=np.full(n_states, 1.0 / n_states),
            transition=transition,
            emission=emission,
        )
        return cls(params)

    def block_dim(self) -> int:
        M = self.params.n_states
        return M + 2 * M * M + M * self.params.n_symbols

    def approx_posterior(self, x) -> HmmPosterior:
        return forward_backward(x, self.params, self.prob_floor)

    def sample_hidden(self, x, posterior, rng: np.random.Generator) -> np.ndarray:
        return sample_path(x, self.params, posterior, rng)

    def joint_log_density(self, x, h) -> float:
        return joint_log_density_hmm(np.asarray(x, dtype=int), h, self.params)

    def feature_block(self, x, h, posterior) -> np.ndarray:
        return feature_block_hmm(
            np.asarray(x, dtype=int), h, posterior.transition_post, self.params.n_symbols
        )

    def update_parameters(self, samples) -> None:
        self.params = m_step_hmm(samples, self.params, self.prob_floor)

    def natural_weights(self) -> np.ndarray:
        """[log initial; log transition; -1 per posterior-transition term; log emission].

        With these coefficients, w . block equals log P(x, q) minus the
        transition part of the posterior path probability.
        """
        p = self.params
        return np.concatenate(
            [
                np.log(p.initial),
                np.log(p.transition).ravel(),
                -np.ones(p.n_states * p.n_states),
                np.log(p.emission).ravel(),
            ]
        )

    def clone(self) -> "HmmBackend":
        return HmmBackend(self.params.copy(), self.prob_floor)
