"""Reversible-jump MCMC over symmetric Bingham mixture states.

Each iteration proposes a component-count change through a banded
transition matrix (death: drop the minimum-weight component and share its
weight equally; birth: add a component), then proposes new weights, frame
axes, and concentrations for the fixed dimension through symmetric random
walks accepted jointly.  Proposal variances adapt during burn-in only.

Two dimension-move acceptance rules are available:

``corrected`` (default)
    Births insert a fresh component at a uniformly chosen slot with weight
    w ~ U(0, M*min(alpha)/(M+1)) subtracted equally from the others, a
    uniformly distributed first frame axis, and concentrations from a
    two-scale ordered-exponential mixture restricted to the supported
    range.  This is the exact inverse of the death map, the weight-map
    Jacobian is 1, and the acceptance ratio carries the proposal
    densities, so detailed balance holds and a likelihood-free run
    reproduces the prior exactly.

``literal``
    Births reuse the cumulative-insertion weight construction with a zero
    concentration vector and a modal-orientation frame, and the acceptance
    is the plain posterior ratio times the transition-matrix ratio with no
    proposal-density correction.  This variant is kept for cross-checking;
    the unmatched prior factors of the deterministically born component
    bias the trans-dimensional equilibrium, so it cannot reproduce the
    prior in a likelihood-free run.

Likelihood evaluations cache one log-kernel row per component, so dimension
moves cost almost nothing and a within-dimension move costs one kernel
sweep over the data.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import bingham, mixture
from .bingham import TWO_PI_SQ, BinghamComponent, complete_basis, sym_log_kernel
from .mixture import Dataset, Hyperparams, MixtureState
from .quat import canonicalize_batch, qmul

__all__ = [
    "SamplerConfig",
    "TransitionMatrix",
    "ModalOrientations",
    "ChainTrace",
    "default_transition_matrix",
    "death_map",
    "birth_map",
    "accept_dimension",
    "accept_within",
    "propose_weights",
    "propose_orientation",
    "propose_scales",
    "modal_orientations",
    "run",
]

ADAPT_WINDOW = 100
ADAPT_GAIN = 0.5
ADAPT_TARGET = 0.25
PROPOSAL_RETRIES = 1000


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, proposal variances, and behavior switches for one chain."""

    n_iters: int
    burn_in: int = 0
    b: float = 0.01
    c: float = 2.0
    d: float = 0.05
    seed: int = 0
    adapt: bool = True
    thin: int = 1
    forced_uniform: bool = False
    prior_only: bool = False
    weights_normalization: str = "cumulative"
    dimension_rule: str = "corrected"
    lam_max: float = 50.0

    def __post_init__(self):
        if self.n_iters < 0 or self.burn_in < 0:
            raise ValueError("n_iters and burn_in must be nonnegative")
        if self.n_iters > 0 and self.burn_in >= self.n_iters:
            raise ValueError("burn_in must be smaller than n_iters")
        if min(self.b, self.c, self.d) <= 0:
            raise ValueError("proposal variances must be positive")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.weights_normalization not in ("cumulative", "literal"):
            raise ValueError("weights_normalization must be 'cumulative' or 'literal'")
        if self.dimension_rule not in ("corrected", "literal"):
            raise ValueError("dimension_rule must be 'corrected' or 'literal'")


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic matrix of component-count proposal probabilities."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).copy()
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("transition matrix must be square")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix rows must sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)


def default_transition_matrix(m_max: int) -> TransitionMatrix:
    """Banded proposal matrix: 0.7 stay, 0.3 at the edges, 0.15 per neighbor."""
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    if m_max == 1:
        return TransitionMatrix(p=np.array([[1.0]]))
    p = np.zeros((m_max, m_max))
    for i in range(m_max):
        p[i, i] = 0.7
        if i == 0:
            p[i, 1] = 0.3
        elif i == m_max - 1:
            p[i, i - 1] = 0.3
        else:
            p[i, i - 1] = p[i, i + 1] = 0.15
    return TransitionMatrix(p=p)


@dataclass(frozen=True)
class ModalOrientations:
    """Cluster representatives computed from the data before sampling."""

    quats: np.ndarray
    sizes: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quats, dtype=float).copy()
        q.setflags(write=False)
        object.__setattr__(self, "quats", q)


@dataclass
class ChainTrace:
    """Saved post-burn-in states plus diagnostics.

    ``accept_dim`` entries are None on iterations without a dimension
    attempt.  ``adaptation`` lists (iteration, b, c, d) after each tuning
    window; ``swap_stats`` is populated by the tempering driver.
    """

    states: list = field(default_factory=list)
    log_posteriors: list = field(default_factory=list)
    accept_dim: list = field(default_factory=list)
    accept_within: list = field(default_factory=list)
    iters: list = field(default_factory=list)
    initial_state: MixtureState | None = None
    adaptation: list = field(default_factory=list)
    final_proposals: tuple | None = None
    swap_stats: dict | None = None
    qc: object = None
    qs: object = None

    def __len__(self) -> int:
        return len(self.states)


# ---------------------------------------------------------------------------
# dimension maps (printed mechanics)
# ---------------------------------------------------------------------------


def _free_weight_indices(state: MixtureState) -> np.ndarray:
    return np.arange(state.m - 1 if state.forced_uniform else state.m)


def death_map(state: MixtureState) -> MixtureState:
    """Remove the minimum-weight component and share its weight equally.

    Ties go to the lowest index.  With ``forced_uniform`` the pinned last
    component is never removed, so the minimum is taken over the free ones.
    """
    if state.m < 2:
        raise ValueError("death requires at least two components")
    free = _free_weight_indices(state)
    m_star = int(free[np.argmin(state.weights[free])])
    w = state.weights[m_star]
    weights = np.delete(state.weights, m_star)
    weights = weights + w / weights.shape[0]
    weights = weights / weights.sum()
    comps = state.components[:m_star] + state.components[m_star + 1 :]
    return MixtureState(weights=weights, components=comps, forced_uniform=state.forced_uniform)


def birth_map(state: MixtureState, g_bar: ModalOrientations, u: float) -> MixtureState:
    """Cumulative-insertion birth of a uniform component.

    Inserts ``u`` into the cumulative weights, differences back to M+1
    weights, and swaps the smallest into the last slot.  The new component
    has zero concentrations and a frame completed from the modal
    orientation for the new count; the dimension-map Jacobian is 1.
    """
    m = state.m
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    cum = np.cumsum(state.weights)
    s = np.sort(np.concatenate([cum, [u]]))
    weights = np.diff(s, prepend=0.0)
    k = int(np.argmin(weights))
    weights[k], weights[-1] = weights[-1], weights[k]
    weights = weights / weights.sum()
    new_comp = BinghamComponent(lam=np.zeros(4), frame=complete_basis(g_bar.quats[m]))
    comps = state.components + (new_comp,)
    return MixtureState(weights=weights, components=comps, forced_uniform=state.forced_uniform)


# ---------------------------------------------------------------------------
# within-dimension proposals
# ---------------------------------------------------------------------------


def propose_weights(
    alpha,
    b: float,
    rng: np.random.Generator,
    mode: str = "cumulative",
    max_retries: int = PROPOSAL_RETRIES,
) -> np.ndarray:
    """Random-walk proposal on the cumulative weights.

    Perturbs the running sums with isotropic Gaussian noise of variance
    ``b``, rescales, and differences back to weights, retrying until all
    entries are nonnegative.  ``cumulative`` rescales so the last running
    sum is exactly one; ``literal`` rescales the perturbed vector to unit
    sum first and renormalizes the differences afterwards.  After
    ``max_retries`` failures the current weights are returned unchanged.
    """
    alpha = np.asarray(alpha, dtype=float)
    m = alpha.shape[0]
    if m == 1:
        return np.array([1.0])
    cum = np.cumsum(alpha)
    std = math.sqrt(b)
    for _ in range(max_retries):
        s = cum + std * rng.standard_normal(m)
        if mode == "cumulative":
            if s[-1] <= 0.0:
                continue
            s = s / s[-1]
        else:
            total = s.sum()
            if total <= 0.0:
                continue
            s = s / total
        cand = np.diff(s, prepend=0.0)
        if np.all(cand >= 0.0):
            total = cand.sum()
            if total <= 0.0:
                continue
            return cand / total
    return alpha.copy()


def propose_orientation(comp: BinghamComponent, d: float, rng: np.random.Generator) -> BinghamComponent:
    """Perturb the first frame axis by a small random rotation.

    Draws a 4-vector from N((1,0,0,0), d*I), normalizes it to a unit
    quaternion near the identity, right-multiplies the first axis, and
    rebuilds the frame by deterministic completion.  The construction is
    symmetric: a perturbation and its inverse are equally likely.
    """
    vec = rng.standard_normal(4) * math.sqrt(d)
    vec[0] += 1.0
    rot = vec / np.linalg.norm(vec)
    v1 = qmul(comp.frame[:, 0], rot)
    return BinghamComponent(lam=comp.lam, frame=complete_basis(v1))


def propose_scales(
    comp: BinghamComponent,
    c: float,
    rng: np.random.Generator,
    lam_max: float = math.inf,
    max_retries: int = PROPOSAL_RETRIES,
) -> BinghamComponent:
    """Gaussian random walk on the three free concentrations.

    Retries until the draw is descending, nonnegative, and within the
    supported range; keeps the current values after ``max_retries``.
    """
    std = math.sqrt(c)
    cur = comp.lam[:3]
    for _ in range(max_retries):
        cand = cur + std * rng.standard_normal(3)
        if cand[0] >= cand[1] >= cand[2] >= 0.0 and cand[0] <= lam_max:
            return BinghamComponent(
                lam=np.concatenate([cand, [0.0]]), frame=comp.frame
            )
    return comp


# ---------------------------------------------------------------------------
# acceptance probabilities (full-recompute reference forms)
# ---------------------------------------------------------------------------


def accept_dimension(
    data: Dataset,
    cur: MixtureState,
    can: MixtureState,
    h: Hyperparams,
    table,
    p: TransitionMatrix,
) -> float:
    """Plain dimension-move acceptance: posterior ratio times the
    transition-probability ratio, evaluated in the log domain."""
    if abs(can.m - cur.m) > 1:
        raise ValueError("dimension moves change the count by at most one")
    if can.m == cur.m:
        return 1.0
    log_ratio = (
        mixture.log_posterior(data, can, h, table)
        - mixture.log_posterior(data, cur, h, table)
        + math.log(p.p[can.m - 1, cur.m - 1])
        - math.log(p.p[cur.m - 1, can.m - 1])
    )
    return float(math.exp(min(log_ratio, 0.0)))


def accept_within(data: Dataset, cur: MixtureState, can: MixtureState, h: Hyperparams, table) -> float:
    """Within-dimension acceptance: plain posterior ratio."""
    if can.m != cur.m:
        raise ValueError("within-dimension moves keep the component count")
    log_ratio = mixture.log_posterior(data, can, h, table) - mixture.log_posterior(
        data, cur, h, table
    )
    return float(math.exp(min(log_ratio, 0.0)))


# ---------------------------------------------------------------------------
# modal orientations
# ---------------------------------------------------------------------------


def _spherical_kmeans(points: np.ndarray, k: int, rng: np.random.Generator):
    """One spherical k-means pass with the antipodal metric 1 - |dot|.

    Returns (centers, sizes, objective) or None when a cluster empties.
    """
    n = points.shape[0]
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    assign = np.full(n, -1)
    for _ in range(200):
        sim = np.abs(points @ centers.T)
        new_assign = np.argmax(sim, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = points[assign == j]
            if members.shape[0] == 0:
                return None
            signs = np.sign(members @ centers[j])
            signs[signs == 0.0] = 1.0
            mean = (signs[:, None] * members).mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm < 1e-12:
                return None
            centers[j] = mean / norm
    sim = np.abs(points @ centers.T)
    objective = float(np.sum(1.0 - sim.max(axis=1)))
    sizes = np.bincount(np.argmax(sim, axis=1), minlength=k)
    return centers, sizes, objective


def modal_orientations(data: Dataset, m_max: int, restarts: int = 10) -> ModalOrientations:
    """Cluster representatives for dimension-move frames and initialization.

    Observations are canonicalized to the fundamental zone and clustered by
    spherical k-means under the antipodal metric with ``restarts`` seeded
    restarts; the seed derives from a hash of the sorted canonical data, so
    the result ignores dataset ordering.  Centers are returned canonicalized
    and ordered by cluster size.  If the data spans fewer than ``m_max``
    distinct clusters, the surplus slots repeat the largest cluster's
    center.
    """
    if data.n < m_max:
        raise ValueError(f"need at least m_max={m_max} observations, got {data.n}")
    canon = canonicalize_batch(data.quats, data.qc, data.qs)
    order = np.lexsort((canon[:, 3], canon[:, 2], canon[:, 1], canon[:, 0]))
    canon = np.ascontiguousarray(canon[order])
    digest = hashlib.sha256(canon.round(12).tobytes()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))

    best = None
    for _ in range(restarts):
        result = _spherical_kmeans(canon, m_max, rng)
        if result is None:
            continue
        if best is None or result[2] < best[2]:
            best = result
    if best is None:
        # degenerate data: fall back to a single cluster repeated
        signs = np.sign(canon @ canon[0])
        signs[signs == 0.0] = 1.0
        mean = (signs[:, None] * canon).mean(axis=0)
        center = mean / np.linalg.norm(mean)
        centers = np.tile(center, (m_max, 1))
        sizes = np.zeros(m_max, dtype=int)
        sizes[0] = data.n
    else:
        centers, sizes, _ = best
        rank = np.argsort(-sizes, kind="stable")
        centers, sizes = centers[rank], sizes[rank]
    centers = canonicalize_batch(centers, data.qc, data.qs)
    return ModalOrientations(quats=centers, sizes=np.asarray(sizes))


# ---------------------------------------------------------------------------
# chain engine
# ---------------------------------------------------------------------------


class _Shared:
    """Immutable per-run context shared by every rung."""

    def __init__(self, data, h, config, table, p_matrix, g_bar):
        self.h = h
        self.config = config
        self.table = table
        self.p = p_matrix.p
        self.p_cum = np.cumsum(p_matrix.p, axis=1)
        self.g_bar = g_bar
        if config.prior_only:
            jk = len(data.qc) * len(data.qs)
            self.expanded = np.zeros((0, jk, 4))
        else:
            if table is None:
                raise ValueError("a normalizer table is required unless prior_only is set")
            self.expanded = data.expanded()
        self.lam_max = table.lam_max if table is not None else config.lam_max

    def log_f(self, comp: BinghamComponent) -> float:
        if self.table is None:
            return 0.0
        return math.log(bingham.f_interp(self.table, comp.lam[:3]))

    def log_kernel(self, comp: BinghamComponent) -> np.ndarray:
        if self.expanded.shape[0] == 0:
            return np.zeros(0)
        return sym_log_kernel(self.expanded, comp.lam, comp.frame)

    def log_kernels(self, comps) -> np.ndarray:
        if self.expanded.shape[0] == 0:
            return np.zeros((len(comps), 0))
        lams = np.stack([c.lam for c in comps])
        frames = np.stack([c.frame for c in comps])
        return bingham.sym_log_kernels(self.expanded, lams, frames)


class _Chain:
    """Mutable per-rung state with cached likelihood pieces."""

    def __init__(self, state, shared: _Shared, rng: np.random.Generator):
        self.state = state
        self.rng = rng
        self.log_k = shared.log_kernels(state.components)
        self.log_f = np.array([shared.log_f(c) for c in state.components])
        self.loglik = self._mix_loglik(state.weights, self.log_k, self.log_f)
        self.logpri = mixture.log_prior(state, shared.h)
        self.b = shared.config.b
        self.c = shared.config.c
        self.d = shared.config.d
        self.window_within = [0, 0]  # attempts, accepts
        self.dim_counts = {"attempts": 0, "accepts": 0}
        self.within_counts = {"attempts": 0, "accepts": 0}

    @staticmethod
    def _mix_loglik(weights, log_k, log_f) -> float:
        if log_k.shape[1] == 0:
            return 0.0
        return float(np.sum(mixture.mix_logpdf_rows(weights, log_k, log_f)))

    @property
    def log_posterior(self) -> float:
        return self.loglik + self.logpri

    def adopt(self, state, log_k, log_f, loglik, logpri):
        self.state = state
        self.log_k = log_k
        self.log_f = log_f
        self.loglik = loglik
        self.logpri = logpri


def _init_state(g_bar: ModalOrientations, forced_uniform: bool) -> MixtureState:
    comp = BinghamComponent(lam=np.zeros(4), frame=complete_basis(g_bar.quats[0]))
    return MixtureState(weights=np.array([1.0]), components=(comp,), forced_uniform=forced_uniform)


def _birth_scale_means(h: Hyperparams, lam_max: float) -> tuple:
    """Concentration scales of the two-part birth proposal.

    Births draw the three free concentrations from an equal mixture of
    ordered-exponential laws at the prior scale and at a wide scale, both
    restricted to the supported range.  The wide part lets a birth land
    directly on a sharp feature instead of waiting for a random walk to
    build one up; the acceptance ratio carries the exact mixture density,
    so the move stays a valid proposal.
    """
    return h.mu, max(lam_max / 2.0, h.mu)


def _sample_birth_component(h: Hyperparams, lam_max: float, rng: np.random.Generator) -> BinghamComponent:
    scales = _birth_scale_means(h, lam_max)
    while True:
        scale = scales[int(rng.random() < 0.5)]
        lam123 = np.sort(rng.exponential(scale, size=3))[::-1]
        if lam123[0] <= lam_max:
            break
    v1 = rng.standard_normal(4)
    v1 /= np.linalg.norm(v1)
    return BinghamComponent(lam=np.concatenate([lam123, [0.0]]), frame=complete_basis(v1))


def _log_q_component(comp: BinghamComponent, shared: _Shared) -> float:
    """Exact log density of the birth proposal at a component's parameters.

    Equal mixture of two truncated ordered-exponential laws on the
    concentrations plus the uniform law on the first frame axis.
    """
    h = shared.h
    mu_a, mu_b = _birth_scale_means(h, shared.lam_max)
    total = float(comp.lam[:3].sum())
    log_fa = mixture.LOG_SIX - 3.0 * math.log(mu_a) - total / mu_a
    log_fb = mixture.LOG_SIX - 3.0 * math.log(mu_b) - total / mu_b
    z_a = (1.0 - math.exp(-shared.lam_max / mu_a)) ** 3
    z_b = (1.0 - math.exp(-shared.lam_max / mu_b)) ** 3
    log_mix = np.logaddexp(log_fa + math.log(0.5), log_fb + math.log(0.5)) - math.log(
        0.5 * z_a + 0.5 * z_b
    )
    return float(log_mix) + mixture.LOG_UNIFORM


def _dim_move(ch: _Chain, shared: _Shared, temperature: float):
    """One dimension proposal; returns True/False on attempt, None otherwise."""
    rng = ch.rng
    m = ch.state.m
    u = rng.random()
    m_can = int(np.searchsorted(shared.p_cum[m - 1], u, side="right")) + 1
    m_can = min(max(m_can, 1), shared.h.m_max)
    if m_can == m:
        return None
    log_p_fwd = math.log(shared.p[m - 1, m_can - 1])
    log_p_rev = math.log(shared.p[m_can - 1, m - 1])

    literal = shared.config.dimension_rule == "literal"
    if m_can > m:
        if literal:
            can = birth_map(ch.state, shared.g_bar, rng.random())
            new_comp = can.components[-1]
            log_k_can = np.vstack([ch.log_k, np.zeros((1, ch.log_k.shape[1]))])
            log_f_can = np.append(ch.log_f, 0.0 if shared.table is None else math.log(TWO_PI_SQ))
            log_q = 0.0
        else:
            alpha = ch.state.weights
            if alpha.min() <= 0.0:
                return False  # degenerate weight; no reversible birth exists
            w_hi = m * float(alpha.min()) / (m + 1)
            w = rng.uniform(0.0, w_hi)
            slots = m if ch.state.forced_uniform else m + 1
            j = int(rng.integers(slots))
            new_comp = _sample_birth_component(shared.h, shared.lam_max, rng)
            weights = np.insert(alpha - w / m, j, w)
            weights = weights / weights.sum()
            comps = ch.state.components[:j] + (new_comp,) + ch.state.components[j:]
            can = MixtureState(weights=weights, components=comps, forced_uniform=ch.state.forced_uniform)
            log_k_can = np.insert(ch.log_k, j, shared.log_kernel(new_comp), axis=0)
            log_f_can = np.insert(ch.log_f, j, shared.log_f(new_comp))
            log_q = (
                -math.log(slots)
                + math.log(m + 1)
                - math.log(m * float(alpha.min()))
                + _log_q_component(new_comp, shared)
            )
    else:
        free = _free_weight_indices(ch.state)
        m_star = int(free[np.argmin(ch.state.weights[free])])
        dying = ch.state.components[m_star]
        can = death_map(ch.state)
        log_k_can = np.delete(ch.log_k, m_star, axis=0)
        log_f_can = np.delete(ch.log_f, m_star)
        if literal:
            log_q = 0.0
        else:
            mx = can.m
            if can.weights.min() <= 0.0:
                return False  # reverse birth would be degenerate
            slots = mx if can.forced_uniform else mx + 1
            log_q = -(
                -math.log(slots)
                + math.log(mx + 1)
                - math.log(mx * float(can.weights.min()))
                + _log_q_component(dying, shared)
            )

    loglik_can = _Chain._mix_loglik(can.weights, log_k_can, log_f_can)
    logpri_can = mixture.log_prior(can, shared.h)
    delta = loglik_can + logpri_can - ch.loglik - ch.logpri
    if literal:
        log_a = temperature * (delta + log_p_rev - log_p_fwd)
    else:
        log_a = temperature * delta + log_p_rev - log_p_fwd - log_q
    accepted = math.log(rng.random()) < log_a
    if accepted:
        ch.adopt(can, log_k_can, log_f_can, loglik_can, logpri_can)
    return bool(accepted)


def _within_move(ch: _Chain, shared: _Shared, temperature: float):
    """Joint weight/frame/concentration proposal; returns acceptance or None."""
    rng = ch.rng
    state = ch.state
    free = list(state.free_indices())
    if state.m == 1 and not free:
        return None
    if state.m > 1:
        weights = propose_weights(
            state.weights, ch.b, rng, mode=shared.config.weights_normalization
        )
    else:
        weights = np.array([1.0])
    comps = list(state.components)
    log_k_can = ch.log_k.copy()
    log_f_can = ch.log_f.copy()
    for i in free:
        comp = propose_orientation(comps[i], ch.d, rng)
        comp = propose_scales(comp, ch.c, rng, lam_max=shared.lam_max)
        comps[i] = comp
        log_f_can[i] = shared.log_f(comp)
    log_k_can[free] = shared.log_kernels([comps[i] for i in free])
    can = MixtureState(weights=weights, components=tuple(comps), forced_uniform=state.forced_uniform)
    loglik_can = _Chain._mix_loglik(can.weights, log_k_can, log_f_can)
    logpri_can = mixture.log_prior(can, shared.h)
    log_a = temperature * (loglik_can + logpri_can - ch.loglik - ch.logpri)
    accepted = math.log(rng.random()) < log_a
    if accepted:
        ch.adopt(can, log_k_can, log_f_can, loglik_can, logpri_can)
    return bool(accepted)


def chain_step(ch: _Chain, shared: _Shared, temperature: float = 1.0):
    """One full iteration: dimension move then within-dimension move."""
    dim = _dim_move(ch, shared, temperature)
    if dim is not None:
        ch.dim_counts["attempts"] += 1
        ch.dim_counts["accepts"] += int(dim)
    within = _within_move(ch, shared, temperature)
    if within is not None:
        ch.within_counts["attempts"] += 1
        ch.within_counts["accepts"] += int(within)
        ch.window_within[0] += 1
        ch.window_within[1] += int(within)
    return dim, within


def adapt_chain(ch: _Chain) -> None:
    """One burn-in tuning step from the windowed within-move acceptance."""
    attempts, accepts = ch.window_within
    rate = accepts / attempts if attempts else ADAPT_TARGET
    factor = math.exp(ADAPT_GAIN * (rate - ADAPT_TARGET))
    ch.b = float(np.clip(ch.b * factor, 1e-10, 1e6))
    ch.c = float(np.clip(ch.c * factor, 1e-10, 1e6))
    ch.d = float(np.clip(ch.d * factor, 1e-10, 1e6))
    ch.window_within = [0, 0]


def make_shared(data: Dataset, h: Hyperparams, config: SamplerConfig, table) -> _Shared:
    p_matrix = default_transition_matrix(h.m_max)
    g_bar = modal_orientations(data, h.m_max)
    return _Shared(data, h, config, table, p_matrix, g_bar)


def run(data: Dataset, h: Hyperparams, config: SamplerConfig, table=None) -> ChainTrace:
    """Run a single chain and return the thinned post-burn-in trace.

    The chain is a deterministic function of (data, hyperparameters,
    config, seed).  A missing table is only allowed for prior-only runs.
    """
    shared = make_shared(data, h, config, table)
    seeds = np.random.SeedSequence(config.seed).spawn(1)
    ch = _Chain(_init_state(shared.g_bar, config.forced_uniform), shared, np.random.default_rng(seeds[0]))

    trace = ChainTrace(initial_state=ch.state, qc=data.qc, qs=data.qs)
    for it in range(1, config.n_iters + 1):
        dim, within = chain_step(ch, shared, 1.0)
        if config.adapt and it <= config.burn_in and it % ADAPT_WINDOW == 0:
            adapt_chain(ch)
            trace.adaptation.append((it, ch.b, ch.c, ch.d))
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            lp = ch.log_posterior
            if not math.isfinite(lp):
                raise FloatingPointError(f"non-finite log posterior at iteration {it}")
            trace.states.append(ch.state)
            trace.log_posteriors.append(lp)
            trace.accept_dim.append(dim)
            trace.accept_within.append(within)
            trace.iters.append(it)
    trace.final_proposals = (ch.b, ch.c, ch.d)
    return trace
