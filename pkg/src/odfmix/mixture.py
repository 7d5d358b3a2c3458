"""Symmetric Bingham mixture: density, likelihood, priors, posterior.

The observation model treats quaternions as iid draws from a weighted
mixture of symmetric Bingham components.  The hierarchical prior places
independent exponential laws (mean ``mu``) on each component's three free
concentrations restricted to the descending-order region, a uniform law on
the first frame axis (the remaining axes follow by deterministic
completion), a symmetric Dirichlet on the weights, and a shifted Poisson
truncated to {1, ..., m_max} on the component count.

All prior terms carry their normalizing constants, because the sampler
compares states of different dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bingham
from .bingham import TWO_PI_SQ, BinghamComponent, complete_basis, sym_log_kernel
from .quat import SymmetryGroup, expand_class, qnorm

__all__ = [
    "Hyperparams",
    "Dataset",
    "MixtureState",
    "sbm_logpdf",
    "loglik",
    "log_prior",
    "log_posterior",
    "sample_prior",
    "density_evaluator",
    "poisson_trunc_logpmf",
]

LOG_UNIFORM = -math.log(TWO_PI_SQ)
LOG_SIX = math.log(6.0)


@dataclass(frozen=True)
class Hyperparams:
    """Prior hyperparameters.

    mu: mean of the exponential law on each free concentration (> 0).
    beta: symmetric Dirichlet concentration for the weights (> 0).
    nu: rate of the shifted Poisson on the component count (> 0).
    m_max: hard upper bound on the number of components (>= 1).
    """

    mu: float = 10.0
    beta: float = 1.0
    nu: float = 1.0
    m_max: int = 5

    def __post_init__(self):
        if self.mu <= 0 or self.beta <= 0 or self.nu <= 0:
            raise ValueError("mu, beta, nu must all be positive")
        if self.m_max < 1:
            raise ValueError("m_max must be at least 1")


class Dataset:
    """Observed orientations with their symmetry context.

    Rows of ``quats`` are normalized on construction.  The symmetry orbit
    expansion used by every likelihood evaluation is computed once and
    cached.
    """

    def __init__(self, quats, qc: SymmetryGroup, qs: SymmetryGroup, provenance: dict | None = None):
        quats = np.atleast_2d(np.asarray(quats, dtype=float))
        if quats.ndim != 2 or quats.shape[1] != 4 or quats.shape[0] < 1:
            raise ValueError("quats must be a non-empty (n, 4) array")
        quats = quats / qnorm(quats)[:, None]
        quats.setflags(write=False)
        self.quats = quats
        self.qc = qc
        self.qs = qs
        self.provenance = dict(provenance or {})
        self._expanded = None

    @property
    def n(self) -> int:
        return self.quats.shape[0]

    def expanded(self) -> np.ndarray:
        """Cached symmetry orbits of all observations, shape (n, J*K, 4)."""
        if self._expanded is None:
            exp = expand_class(self.quats, self.qc, self.qs)
            exp.setflags(write=False)
            self._expanded = exp
        return self._expanded

    def subset(self, index) -> "Dataset":
        return Dataset(self.quats[index], self.qc, self.qs, self.provenance)


@dataclass(frozen=True)
class MixtureState:
    """Weights plus components; the full variable-dimension sampler state.

    When ``forced_uniform`` is set the last component always has zero
    concentrations, pinning it to the uniform density.
    """

    weights: np.ndarray
    components: tuple
    forced_uniform: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        comps = tuple(self.components)
        if w.ndim != 1 or w.shape[0] != len(comps) or len(comps) < 1:
            raise ValueError("weights and components must have equal positive length")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        if np.any(w < -1e-15) or np.any(w > 1.0 + 1e-15):
            raise ValueError("weights must lie in [0, 1]")
        for comp in comps:
            if not isinstance(comp, BinghamComponent):
                raise TypeError("components must be BinghamComponent instances")
        if self.forced_uniform and not comps[-1].is_uniform():
            raise ValueError("forced_uniform requires the last component to be uniform")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comps)

    @property
    def m(self) -> int:
        return len(self.components)

    def free_indices(self) -> range:
        """Components whose parameters the sampler may move."""
        return range(self.m - 1 if self.forced_uniform else self.m)


def uniform_state(forced_uniform: bool = False) -> MixtureState:
    return MixtureState(
        weights=np.array([1.0]),
        components=(bingham.uniform_component(),),
        forced_uniform=forced_uniform,
    )


# ---------------------------------------------------------------------------
# density and likelihood
# ---------------------------------------------------------------------------


def _state_log_f(state: MixtureState, table) -> np.ndarray:
    """Log normalizing constant per component; table or plain F values."""
    if isinstance(table, (list, tuple, np.ndarray)):
        return np.log(np.asarray(table, dtype=float))
    return np.array(
        [math.log(bingham.f_interp(table, c.lam[:3])) for c in state.components]
    )


def mix_logpdf_rows(weights: np.ndarray, log_k: np.ndarray, log_f: np.ndarray) -> np.ndarray:
    """Per-observation mixture log density from per-component kernel rows.

    log_k has shape (M, n): log symmetrized kernel means.  Combines the
    components by log-sum-exp.
    """
    z = np.log(weights)[:, None] + log_k - log_f[:, None]
    zmax = z.max(axis=0)
    return zmax + np.log(np.exp(z - zmax).sum(axis=0))


def sbm_logpdf(g, state: MixtureState, qc: SymmetryGroup, qs: SymmetryGroup, table) -> float | np.ndarray:
    """Log density of the symmetric Bingham mixture at one or many points."""
    g = np.asarray(g, dtype=float)
    single = g.ndim == 1
    expanded = expand_class(np.atleast_2d(g), qc, qs)
    log_k = np.stack([sym_log_kernel(expanded, c.lam, c.frame) for c in state.components])
    out = mix_logpdf_rows(state.weights, log_k, _state_log_f(state, table))
    return float(out[0]) if single else out


def loglik(data: Dataset, state: MixtureState, table) -> float:
    """Joint log likelihood: sum of the mixture log density over the data."""
    expanded = data.expanded()
    log_k = np.stack([sym_log_kernel(expanded, c.lam, c.frame) for c in state.components])
    return float(np.sum(mix_logpdf_rows(state.weights, log_k, _state_log_f(state, table))))


# ---------------------------------------------------------------------------
# prior
# ---------------------------------------------------------------------------


def ordered_exp_logpdf(lam123, mu: float) -> float:
    """Log density of three iid exponentials (mean mu) sorted descending."""
    lam = np.asarray(lam123, dtype=float)
    return LOG_SIX - 3.0 * math.log(mu) - float(lam.sum()) / mu


def component_log_prior(comp: BinghamComponent, h: Hyperparams) -> float:
    """Prior log density of one free component: ordered scales plus axis."""
    return ordered_exp_logpdf(comp.lam[:3], h.mu) + LOG_UNIFORM


def dirichlet_logpdf(weights: np.ndarray, beta: float) -> float:
    m = weights.shape[0]
    if m == 1:
        return 0.0
    w = np.clip(weights, 1e-300, None)
    return float(
        math.lgamma(m * beta) - m * math.lgamma(beta) + (beta - 1.0) * np.sum(np.log(w))
    )


def poisson_trunc_logpmf(m: int, nu: float, m_max: int) -> float:
    """Log pmf of M where M - 1 ~ Poisson(nu) truncated to 1 <= M <= m_max."""
    if not 1 <= m <= m_max:
        return -math.inf
    raw = np.array([k * math.log(nu) - math.lgamma(k + 1.0) for k in range(m_max)])
    shift = raw.max()
    z = math.log(np.exp(raw - shift).sum()) + shift
    return float((m - 1) * math.log(nu) - math.lgamma(float(m)) - z)


def log_prior(state: MixtureState, h: Hyperparams) -> float:
    """Full prior log density of a mixture state, all constants included.

    A forced uniform component carries no parameter terms: its
    concentrations are pinned and its frame never enters the density.
    """
    if state.m > h.m_max:
        raise ValueError("state has more components than m_max allows")
    out = poisson_trunc_logpmf(state.m, h.nu, h.m_max)
    out += dirichlet_logpdf(state.weights, h.beta)
    for i in state.free_indices():
        comp = state.components[i]
        lam = comp.lam
        if np.any(np.diff(lam) > 0) or lam[2] < 0:
            raise ValueError("component concentrations violate the ordering contract")
        out += component_log_prior(comp, h)
    return float(out)


def log_posterior(data: Dataset, state: MixtureState, h: Hyperparams, table) -> float:
    """Unnormalized posterior log density: likelihood plus prior."""
    return loglik(data, state, table) + log_prior(state, h)


# ---------------------------------------------------------------------------
# prior sampling
# ---------------------------------------------------------------------------


def sample_prior_component(h: Hyperparams, rng: np.random.Generator) -> BinghamComponent:
    lam123 = np.sort(rng.exponential(h.mu, size=3))[::-1]
    v1 = rng.standard_normal(4)
    v1 /= np.linalg.norm(v1)
    return BinghamComponent(lam=np.concatenate([lam123, [0.0]]), frame=complete_basis(v1))


def sample_prior(h: Hyperparams, rng: np.random.Generator, forced_uniform: bool = False) -> MixtureState:
    """Generative draw from the hierarchical prior."""
    pmf = np.exp([poisson_trunc_logpmf(m, h.nu, h.m_max) for m in range(1, h.m_max + 1)])
    m = 1 + int(np.searchsorted(np.cumsum(pmf), rng.random()))
    m = min(m, h.m_max)
    weights = rng.dirichlet(np.full(m, h.beta)) if m > 1 else np.array([1.0])
    weights = weights / weights.sum()
    n_free = m - 1 if forced_uniform else m
    comps = [sample_prior_component(h, rng) for _ in range(n_free)]
    if forced_uniform:
        comps.append(bingham.uniform_component())
    return MixtureState(weights=weights, components=tuple(comps), forced_uniform=forced_uniform)


# ---------------------------------------------------------------------------
# evaluator
# ---------------------------------------------------------------------------


class density_evaluator:
    """Callable mixture density over quaternions for grid exports.

    Evaluates exp(sbm_logpdf) in chunks; immutable once built.
    """

    def __init__(self, state: MixtureState, qc: SymmetryGroup, qs: SymmetryGroup, table):
        self.state = state
        self.qc = qc
        self.qs = qs
        self._log_f = _state_log_f(state, table)

    def __call__(self, quats) -> np.ndarray:
        quats = np.atleast_2d(np.asarray(quats, dtype=float))
        out = np.empty(quats.shape[0])
        for lo in range(0, quats.shape[0], 4096):
            hi = min(lo + 4096, quats.shape[0])
            expanded = expand_class(quats[lo:hi], self.qc, self.qs)
            log_k = np.stack(
                [sym_log_kernel(expanded, c.lam, c.frame) for c in self.state.components]
            )
            out[lo:hi] = np.exp(mix_logpdf_rows(self.state.weights, log_k, self._log_f))
        return out
