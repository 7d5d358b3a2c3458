"""Ground-truth orientation generators for validation runs.

The two-component reference target mixes a tight de la Vallee Poussin lobe
(weight 0.27) with the uniform density (weight 0.73) under cubic crystal
and twofold specimen symmetry; the lobe concentration and center are fixed
documented defaults.  Arbitrary symmetric Bingham mixtures can also be
sampled for recovery experiments.
"""

from __future__ import annotations

import numpy as np

from . import bingham
from .mixture import Dataset, MixtureState
from .quat import SymmetryGroup, euler_to_quat, qmul, symmetry_group

__all__ = [
    "SANTAFE_WEIGHTS",
    "SANTAFE_KAPPA",
    "santafe_center",
    "sample_dvp",
    "santafe_generate",
    "sbm_generate",
]

SANTAFE_WEIGHTS = (0.27, 0.73)  # concentrated lobe, uniform remainder
SANTAFE_KAPPA = 80.0


def santafe_center() -> np.ndarray:
    """Fixed lobe center: Euler angles (60, 54.7356, 45) degrees."""
    return euler_to_quat(np.deg2rad([60.0, 54.7356, 45.0]))


def sample_dvp(center, kappa: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Exact draws from the de la Vallee Poussin kernel centered at ``center``.

    The squared cosine of the half-angle to the center is Beta(kappa + 1/2,
    3/2) distributed, the sign is symmetric, and the rotation axis is
    uniform, so draws are exact with no rejection.
    """
    t = rng.beta(kappa + 0.5, 1.5, size=size)
    cos_half = np.sqrt(t) * rng.choice([-1.0, 1.0], size=size)
    sin_half = np.sqrt(1.0 - t)
    axis = rng.standard_normal((size, 3))
    axis /= np.linalg.norm(axis, axis=1)[:, None]
    rel = np.concatenate([cos_half[:, None], sin_half[:, None] * axis], axis=1)
    return qmul(np.asarray(center, dtype=float), rel)


def _symmetrize(draws: np.ndarray, qc: SymmetryGroup, qs: SymmetryGroup, rng) -> np.ndarray:
    j = rng.integers(len(qc), size=draws.shape[0])
    k = rng.integers(len(qs), size=draws.shape[0])
    return qmul(qc.elements[j], qmul(draws, qs.elements[k]))


def santafe_generate(
    n: int,
    rng: np.random.Generator,
    qc: SymmetryGroup | None = None,
    qs: SymmetryGroup | None = None,
) -> Dataset:
    """Two-component reference dataset: 0.27 concentrated lobe, 0.73 uniform."""
    if n < 1:
        raise ValueError("n must be positive")
    qc = qc or symmetry_group("cubic-24")
    qs = qs or symmetry_group("cyclic-2")
    center = santafe_center()
    concentrated = rng.random(n) < SANTAFE_WEIGHTS[0]
    n_conc = int(concentrated.sum())
    quats = np.empty((n, 4))
    if n_conc:
        lobe = sample_dvp(center, SANTAFE_KAPPA, rng, n_conc)
        quats[concentrated] = _symmetrize(lobe, qc, qs, rng)
    n_unif = n - n_conc
    if n_unif:
        v = rng.standard_normal((n_unif, 4))
        quats[~concentrated] = v / np.linalg.norm(v, axis=1)[:, None]
    truth = {
        "kind": "santafe",
        "weights": list(SANTAFE_WEIGHTS),
        "kappa": SANTAFE_KAPPA,
        "center": [float(x) for x in center],
        "n_concentrated": n_conc,
        "crystal": qc.name,
        "specimen": qs.name,
    }
    return Dataset(quats, qc, qs, provenance=truth)


def sbm_generate(
    n: int,
    state: MixtureState,
    qc: SymmetryGroup,
    qs: SymmetryGroup,
    rng: np.random.Generator,
) -> Dataset:
    """Draws from a symmetric Bingham mixture with known parameters."""
    if n < 1:
        raise ValueError("n must be positive")
    comp_idx = np.searchsorted(np.cumsum(state.weights), rng.random(n), side="right")
    comp_idx = np.minimum(comp_idx, state.m - 1)
    quats = np.empty((n, 4))
    for m in range(state.m):
        mask = comp_idx == m
        cnt = int(mask.sum())
        if cnt:
            quats[mask] = bingham.sample_symmetric_bingham(
                state.components[m], qc, qs, rng, size=cnt
            )
    truth = {
        "kind": "sbm",
        "weights": state.weights.tolist(),
        "lam": [c.lam.tolist() for c in state.components],
        "v1": [c.frame[:, 0].tolist() for c in state.components],
        "component_counts": np.bincount(comp_idx, minlength=state.m).tolist(),
        "crystal": qc.name,
        "specimen": qs.name,
    }
    return Dataset(quats, qc, qs, provenance=truth)
