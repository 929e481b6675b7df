"""Simulation-based estimation of the projected system via Markov trajectories.

A single trajectory i_0, i_1, ... from a proposal chain P drives an
eligibility trace

    z_t = lam * w_{t-1} * z_{t-1} + phi(i_t),    w_t = A[i_t, i_{t+1}] / P[i_t, i_{t+1}],

and the running means of z_t (phi(i_t) - w_t phi(i_{t+1}))' and z_t b[i_t]
estimate Phi' Xi (I - A_lam) Phi and Phi' Xi b_lam, where Xi is the chain's
stationary distribution. Normalizing by the running feature Gram matrix
gives estimates directly comparable to the exact projected system, so the
deterministic iterations of ``galerkin`` can be replayed on estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    BadStochastic,
    MismatchedConfig,
    NoConvergence,
    SingularMatrix,
    UnsupportedTransition,
)
from .galerkin import (
    LowDimSystem,
    ProjectionSpec,
    lstd_solve,
    lspe_iterate,
    prox_projected_iterate,
    sigma_regularized_iterate,
)
from .linalg import as_matrix, as_vector, inf_norm, lu_solve
from .proxmulti import AffineMap, MultistepParam, apply_T

LAM_VARIANCE_WARN = 0.9

__all__ = [
    "ChainSpec",
    "EstimatorState",
    "TdState",
    "as_lowdim",
    "default_proposal",
    "merge_estimates",
    "multistep_via_td",
    "run_estimation",
    "run_td_lambda",
    "sample_trajectory",
    "sim_lspe_step",
    "sim_lstd",
    "sim_prox_step",
    "stationary_distribution",
    "td_lambda_step",
    "temporal_difference",
    "update_estimates",
]


@dataclass(frozen=True)
class ChainSpec:
    """Row-stochastic proposal chain with an initial distribution and seed."""

    P: np.ndarray
    initial: np.ndarray
    seed: int = 0

    def __post_init__(self):
        P = as_matrix(self.P, square=True)
        initial = as_vector(self.initial, P.shape[0])
        if np.any(P < 0.0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-10):
            raise BadStochastic("rows of P must be probability distributions")
        if np.any(initial < 0.0) or abs(initial.sum() - 1.0) > 1e-10:
            raise BadStochastic("initial distribution must be a probability vector")
        P.setflags(write=False)
        initial.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "initial", initial)

    @property
    def n(self) -> int:
        return self.P.shape[0]


def default_proposal(m: AffineMap, seed: int = 0) -> ChainSpec:
    """Proposal chain with P_ij proportional to |A_ij| plus a uniform floor.

    The floor (1e-6 / n) keeps every transition available, so the importance
    weights a_ij / p_ij stay defined wherever a_ij is nonzero.
    """
    weights = np.abs(m.A) + 1e-6 / m.n
    P = weights / weights.sum(axis=1, keepdims=True)
    return ChainSpec(P, np.full(m.n, 1.0 / m.n), seed)


def stationary_distribution(chain: ChainSpec) -> np.ndarray:
    """Solve xi' P = xi', sum(xi) = 1; unique for irreducible chains."""
    n = chain.n
    M = chain.P.T - np.eye(n)
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return lu_solve(M, rhs)


def sample_trajectory(chain: ChainSpec, length: int, seed: int | None = None) -> np.ndarray:
    """Draw i_0, ..., i_length by inverse-CDF sampling; deterministic given seed."""
    if length < 0:
        raise ValueError("length must be nonnegative")
    rng = np.random.default_rng(chain.seed if seed is None else seed)
    n = chain.n
    cum_rows = np.cumsum(chain.P, axis=1)
    out = np.empty(length + 1, dtype=np.int64)
    out[0] = min(int(np.searchsorted(np.cumsum(chain.initial), rng.random(), side="right")), n - 1)
    draws = rng.random(length)
    state = out[0]
    for t in range(length):
        state = min(int(np.searchsorted(cum_rows[state], draws[t], side="right")), n - 1)
        out[t + 1] = state
    return out


def _check_lam(lam: float) -> float:
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lam must lie in [0, 1), got {lam}")
    if lam > LAM_VARIANCE_WARN:
        warnings.warn(
            f"lam = {lam} is close to 1: estimator variance grows sharply", stacklevel=3
        )
    return float(lam)


@dataclass(frozen=True)
class EstimatorState:
    """Mergeable running estimates from a trajectory segment.

    Raw sample sums are stored; ``chat``, ``dhat`` and ``gram`` expose the
    running means. ``last_state`` is the state the trajectory currently sits
    at (None for a fresh or merged state, whose trace starts over).
    """

    z: np.ndarray
    chat_sum: np.ndarray
    dhat_sum: np.ndarray
    gram_sum: np.ndarray
    t: int
    lam: float
    last_state: int | None = None

    @classmethod
    def fresh(cls, s: int, lam: float) -> "EstimatorState":
        lam = _check_lam(lam)
        return cls(np.zeros(s), np.zeros((s, s)), np.zeros(s), np.zeros((s, s)), 0, lam)

    @classmethod
    def from_estimates(cls, chat, dhat, lam: float, t: int = 1) -> "EstimatorState":
        """State whose means equal the given estimates, with identity Gram."""
        chat = as_matrix(chat, square=True)
        dhat = as_vector(dhat, chat.shape[0])
        s = chat.shape[0]
        return cls(np.zeros(s), chat * t, dhat * t, np.eye(s) * t, t, _check_lam(lam))

    @property
    def s(self) -> int:
        return self.dhat_sum.shape[0]

    @property
    def chat(self) -> np.ndarray:
        return self.chat_sum / self.t if self.t else self.chat_sum.copy()

    @property
    def dhat(self) -> np.ndarray:
        return self.dhat_sum / self.t if self.t else self.dhat_sum.copy()

    @property
    def gram(self) -> np.ndarray:
        return self.gram_sum / self.t if self.t else self.gram_sum.copy()


def _require_orthogonal_features(spec: ProjectionSpec):
    if spec.psi is not spec.phi and not np.array_equal(spec.psi, spec.phi):
        raise ValueError("simulation estimators support the Psi = Phi path only")


def _importance_weight(m: AffineMap, chain: ChainSpec, i: int, j: int) -> float:
    p_ij = chain.P[i, j]
    a_ij = m.A[i, j]
    if p_ij <= 0.0:
        if a_ij != 0.0:
            raise UnsupportedTransition(
                f"transition ({i}, {j}) has zero proposal probability but A[{i},{j}] != 0"
            )
        return 0.0
    return a_ij / p_ij


def update_estimates(
    state: EstimatorState,
    m: AffineMap,
    spec: ProjectionSpec,
    chain: ChainSpec,
    transition: tuple,
) -> EstimatorState:
    """Fold one observed transition (i, j) into the running estimates.

    Consecutive calls must chain (i equals the previous call's j); a fresh or
    merged state restarts the eligibility trace at phi(i).
    """
    _require_orthogonal_features(spec)
    i, j = (int(k) for k in transition)
    phi = spec.phi
    if state.last_state is None:
        z = state.z + phi[i]
    else:
        if i != state.last_state:
            raise ValueError(
                f"transition starts at {i} but the trajectory sits at {state.last_state}"
            )
        z = state.z
    w = _importance_weight(m, chain, i, j)
    chat_sum = state.chat_sum + np.outer(z, phi[i] - w * phi[j])
    dhat_sum = state.dhat_sum + m.b[i] * z
    gram_sum = state.gram_sum + np.outer(phi[i], phi[i])
    z_next = state.lam * w * z + phi[j]
    return EstimatorState(z_next, chat_sum, dhat_sum, gram_sum, state.t + 1, state.lam, j)


def run_estimation(
    m: AffineMap,
    spec: ProjectionSpec,
    chain: ChainSpec,
    num_samples: int,
    lam: float | None = None,
    seed: int | None = None,
    state: EstimatorState | None = None,
    trajectory=None,
) -> EstimatorState:
    """Collect ``num_samples`` transitions from one seeded trajectory.

    Equivalent to folding update_estimates over the sampled transitions, in a
    tight loop. Continues an existing ``state`` when given (its trace restarts
    if it was merged). Pass ``trajectory`` (an index sequence of length
    num_samples + 1) to consume a precomputed segment instead of sampling;
    a continued state must sit at the segment's first index.
    """
    _require_orthogonal_features(spec)
    if state is None:
        state = EstimatorState.fresh(spec.s, 0.5 if lam is None else lam)
    elif lam is not None and lam != state.lam:
        raise MismatchedConfig("lam differs from the state being continued")
    _check_lam(state.lam)
    if trajectory is None:
        idx = sample_trajectory(chain, num_samples, seed)
    else:
        idx = np.asarray(trajectory, dtype=np.int64)
        if idx.shape != (num_samples + 1,):
            raise ValueError(f"trajectory must hold {num_samples + 1} indices")
    if state.last_state is not None and num_samples > 0 and int(idx[0]) != state.last_state:
        raise ValueError(
            f"segment starts at {int(idx[0])} but the state sits at {state.last_state}"
        )
    phi = spec.phi
    A, b, P, lam_ = m.A, m.b, chain.P, state.lam
    z = state.z.copy()
    chat_sum = state.chat_sum.copy()
    dhat_sum = state.dhat_sum.copy()
    gram_sum = state.gram_sum.copy()
    last = state.last_state
    for t in range(num_samples):
        i, j = int(idx[t]), int(idx[t + 1])
        if last is None:
            z = z + phi[i]
        p_ij = P[i, j]
        if p_ij <= 0.0:
            if A[i, j] != 0.0:
                raise UnsupportedTransition(
                    f"transition ({i}, {j}) has zero proposal probability but A[{i},{j}] != 0"
                )
            w = 0.0
        else:
            w = A[i, j] / p_ij
        chat_sum += np.outer(z, phi[i] - w * phi[j])
        dhat_sum += b[i] * z
        gram_sum += np.outer(phi[i], phi[i])
        z = lam_ * w * z + phi[j]
        last = j
    return EstimatorState(z, chat_sum, dhat_sum, gram_sum, state.t + num_samples, lam_, last)


def merge_estimates(s1: EstimatorState, s2: EstimatorState) -> EstimatorState:
    """Count-weighted combination of two independently collected states.

    The eligibility trace does not carry across segments: the merged state
    restarts it, which biases cross-segment terms by O(lam^gap).
    """
    if s1.lam != s2.lam or s1.s != s2.s:
        raise MismatchedConfig("states must share lam and feature dimension")
    return EstimatorState(
        np.zeros(s1.s),
        s1.chat_sum + s2.chat_sum,
        s1.dhat_sum + s2.dhat_sum,
        s1.gram_sum + s2.gram_sum,
        s1.t + s2.t,
        s1.lam,
        None,
    )


def as_lowdim(state: EstimatorState) -> LowDimSystem:
    """Gram-normalized estimated system, comparable to assemble_lowdim output.

    Raises SingularMatrix while the visited features do not yet span the
    coordinate space.
    """
    try:
        chat = lu_solve(state.gram, state.chat)
        dhat = lu_solve(state.gram, state.dhat)
    except SingularMatrix as exc:
        raise SingularMatrix("feature Gram estimate is singular (too few samples)") from exc
    return LowDimSystem.from_c(chat, dhat, state.lam)


def sim_lstd(state: EstimatorState) -> np.ndarray:
    """Solve the estimated system by matrix inversion (the one-shot method)."""
    return lstd_solve(as_lowdim(state))


def sim_lspe_step(state: EstimatorState, r, interpolated: bool = False, lam: float | None = None):
    """lspe_iterate on the estimated system."""
    return lspe_iterate(as_lowdim(state), r, interpolated, lam)


def sim_prox_step(
    state: EstimatorState,
    r,
    chat: float,
    Sigma=None,
    extrapolated: bool = False,
):
    """Proximal (optionally Sigma-regularized, optionally extrapolated) step
    on the estimated system; same arithmetic as the deterministic analogs."""
    sys = as_lowdim(state)
    if Sigma is None:
        return prox_projected_iterate(sys, chat, r, extrapolated)
    return sigma_regularized_iterate(sys, Sigma, chat, r, extrapolated)


def temporal_difference(m: AffineMap, x, ell: int) -> np.ndarray:
    """Propagated residual A^ell (Ax + b - x)."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    d = apply_T(m, x) - as_vector(x, m.n)
    for _ in range(ell):
        d = m.A @ d
    return d


def multistep_via_td(m: AffineMap, p: MultistepParam, x, eps: float = 1e-10) -> np.ndarray:
    """Multistep value as the temporal-difference expansion x + sum lam^l d(x, l).

    Truncates at the first term with lam^l * ||d(x, l)||_inf below eps;
    matches the closed-form solve within 10 * eps / (1 - lam).
    """
    x = as_vector(x, m.n)
    lam = p.lam
    acc = x.copy()
    d = apply_T(m, x) - x
    factor = 1.0
    for _ in range(1_000_000):
        acc = acc + factor * d
        if factor * inf_norm(d) < eps:
            return acc
        d = m.A @ d
        factor *= lam
    raise NoConvergence("temporal-difference expansion did not reach the truncation bound")


@dataclass(frozen=True)
class TdState:
    """Iterate of the stochastic-approximation solver, with its stepsize rule.

    rule is ("harmonic", a) for gamma_k = a / (k + 1), or ("constant", g).
    """

    r: np.ndarray
    k: int = 0
    rule: tuple = ("harmonic", 1.0)

    def stepsize(self) -> float:
        kind, value = self.rule
        if kind == "harmonic":
            return value / (self.k + 1.0)
        if kind == "constant":
            return value
        raise ValueError(f"unknown stepsize rule {kind!r}")


def td_lambda_step(td: TdState, z, q: float) -> TdState:
    """One stochastic update r <- r + gamma_k * q * z."""
    gamma = td.stepsize()
    if gamma <= 0.0:
        raise ValueError("stepsize must be positive")
    return replace(td, r=td.r + gamma * q * np.asarray(z, dtype=float), k=td.k + 1)


def run_td_lambda(
    m: AffineMap,
    spec: ProjectionSpec,
    chain: ChainSpec,
    lam: float,
    steps: int,
    rule: tuple = ("harmonic", 1.0),
    seed: int | None = None,
    r0=None,
    record_every: int = 0,
):
    """Drive td_lambda_step along one trajectory.

    The per-transition sample is the importance-weighted one-step difference
    q_t = b[i] + w_t phi(j)'r - phi(i)'r, accumulated through the same
    eligibility trace as the matrix estimators. Returns the final TdState and
    a list of (step, r) checkpoints when ``record_every`` is positive.
    """
    _require_orthogonal_features(spec)
    lam = _check_lam(lam)
    idx = sample_trajectory(chain, steps, seed)
    phi = spec.phi
    td = TdState(np.zeros(spec.s) if r0 is None else as_vector(r0, spec.s), 0, rule)
    z = np.zeros(spec.s)
    history = []
    for t in range(steps):
        i, j = int(idx[t]), int(idx[t + 1])
        if t == 0:
            z = z + phi[i]
        w = _importance_weight(m, chain, i, j)
        q = m.b[i] + w * (phi[j] @ td.r) - phi[i] @ td.r
        td = td_lambda_step(td, z, q)
        z = lam * w * z + phi[j]
        if record_every and (t + 1) % record_every == 0:
            history.append((t + 1, td.r.copy()))
    return td, history
