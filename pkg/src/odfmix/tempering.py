"""Parallel tempering across a descending temperature ladder.

Every rung runs the full reversible-jump iteration with its acceptance
ratios raised to the rung temperature; after each sweep one uniformly
chosen adjacent pair proposes to swap complete states.  Only the
temperature-one chain is recorded, along with per-pair swap statistics.

Two swap rules are available.  The default ``corrected`` rule accepts with
min{1, [pi(x_hot) / pi(x_cold)] ** (T_cold - T_hot)} where pi is the
untempered posterior, which preserves each rung's tempered target.  The
``plain`` ratio pi(x_cold) / pi(x_hot) without temperature exponents is
kept under the name ``literal`` for cross-checking; it does not preserve
the tempered targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rjmcmc
from .mixture import Dataset, Hyperparams
from .rjmcmc import ChainTrace, SamplerConfig, _Chain, adapt_chain, chain_step, make_shared

__all__ = [
    "TemperatureLadder",
    "EnsembleState",
    "PAPER_LADDER",
    "tempered_step",
    "propose_swap",
    "run_pt",
]

DEFAULT_TEMPS = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)
PAPER_LADDER = DEFAULT_TEMPS  # ten evenly spaced rungs ending at 0.1


@dataclass(frozen=True)
class TemperatureLadder:
    """Strictly decreasing temperatures in (0, 1], starting at exactly 1."""

    temps: tuple = DEFAULT_TEMPS

    def __post_init__(self):
        temps = tuple(float(t) for t in self.temps)
        if not temps or temps[0] != 1.0:
            raise ValueError("the first temperature must be exactly 1")
        if any(t <= 0.0 or t > 1.0 for t in temps):
            raise ValueError("temperatures must lie in (0, 1]")
        if any(b >= a for a, b in zip(temps, temps[1:])):
            raise ValueError("temperatures must be strictly decreasing")
        object.__setattr__(self, "temps", temps)

    def __len__(self) -> int:
        return len(self.temps)


@dataclass
class EnsembleState:
    """One chain per rung plus swap bookkeeping.

    Swap attempts and accepts are tracked separately for the burn-in and
    sampling phases; health diagnostics use the sampling phase, where the
    rungs have reached their equilibria.
    """

    chains: list
    ladder: TemperatureLadder
    swap_attempts: np.ndarray = field(default=None)
    swap_accepts: np.ndarray = field(default=None)
    burn_attempts: np.ndarray = field(default=None)
    burn_accepts: np.ndarray = field(default=None)
    in_burn_in: bool = True

    def __post_init__(self):
        n_pairs = max(len(self.ladder) - 1, 0)
        for name in ("swap_attempts", "swap_accepts", "burn_attempts", "burn_accepts"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(n_pairs, dtype=int))


def tempered_step(chain, shared, temperature: float):
    """One full reversible-jump iteration with tempered acceptances.

    At temperature one this is bit-for-bit the plain iteration given the
    same generator state.
    """
    if not 0.0 < temperature <= 1.0:
        raise ValueError("temperature must lie in (0, 1]")
    return chain_step(chain, shared, temperature)


def propose_swap(
    ensemble: EnsembleState,
    t: int,
    rng: np.random.Generator,
    rule: str = "corrected",
) -> bool:
    """Propose swapping the states of rungs ``t`` and ``t + 1`` (0-based).

    Swaps exchange complete states and cached likelihood parts; per-rung
    proposal tuning stays with the rung.
    """
    lo, hi = ensemble.chains[t], ensemble.chains[t + 1]
    if rule == "corrected":
        t_lo = ensemble.ladder.temps[t]
        t_hi = ensemble.ladder.temps[t + 1]
        log_a = (t_lo - t_hi) * (hi.log_posterior - lo.log_posterior)
    elif rule == "literal":
        log_a = lo.log_posterior - hi.log_posterior
    else:
        raise ValueError("swap rule must be 'corrected' or 'literal'")
    attempts = ensemble.burn_attempts if ensemble.in_burn_in else ensemble.swap_attempts
    accepts = ensemble.burn_accepts if ensemble.in_burn_in else ensemble.swap_accepts
    attempts[t] += 1
    accepted = math.log(rng.random()) < log_a
    if accepted:
        accepts[t] += 1
        for attr in ("state", "log_k", "log_f", "loglik", "logpri"):
            a, b = getattr(lo, attr), getattr(hi, attr)
            setattr(lo, attr, b)
            setattr(hi, attr, a)
    return bool(accepted)


def run_pt(
    data: Dataset,
    h: Hyperparams,
    config: SamplerConfig,
    ladder: TemperatureLadder,
    table=None,
    swap_rule: str = "corrected",
) -> ChainTrace:
    """Parallel-tempered run; returns the temperature-one chain's trace.

    With a single-rung ladder the output is byte-identical to
    :func:`odfmix.rjmcmc.run` under the same seed: rung generators come
    from the same spawn positions and the swap generator is never used.
    """
    if swap_rule not in ("corrected", "literal"):
        raise ValueError("swap rule must be 'corrected' or 'literal'")
    shared = make_shared(data, h, config, table)
    n_rungs = len(ladder)
    seeds = np.random.SeedSequence(config.seed).spawn(n_rungs + 1)
    chains = [
        _Chain(
            rjmcmc._init_state(shared.g_bar, config.forced_uniform),
            shared,
            np.random.default_rng(seeds[r]),
        )
        for r in range(n_rungs)
    ]
    swap_rng = np.random.default_rng(seeds[n_rungs])
    ensemble = EnsembleState(chains=chains, ladder=ladder)

    cold = chains[0]
    trace = ChainTrace(initial_state=cold.state, qc=data.qc, qs=data.qs)
    for it in range(1, config.n_iters + 1):
        ensemble.in_burn_in = it <= config.burn_in
        flags = [
            tempered_step(chains[r], shared, ladder.temps[r]) for r in range(n_rungs)
        ]
        if n_rungs > 1:
            t = int(swap_rng.integers(n_rungs - 1))
            propose_swap(ensemble, t, swap_rng, rule=swap_rule)
        if config.adapt and it <= config.burn_in and it % rjmcmc.ADAPT_WINDOW == 0:
            for chain in chains:
                adapt_chain(chain)
            trace.adaptation.append((it, cold.b, cold.c, cold.d))
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            lp = cold.log_posterior
            if not math.isfinite(lp):
                raise FloatingPointError(f"non-finite log posterior at iteration {it}")
            trace.states.append(cold.state)
            trace.log_posteriors.append(lp)
            trace.accept_dim.append(flags[0][0])
            trace.accept_within.append(flags[0][1])
            trace.iters.append(it)
    trace.final_proposals = (cold.b, cold.c, cold.d)

    def _rates(attempts, accepts):
        out = []
        for att, acc in zip(attempts, accepts):
            out.append(None if att == 0 else acc / att)
        return out

    trace.swap_stats = {
        "temps": list(ladder.temps),
        "attempts": ensemble.swap_attempts.tolist(),
        "accepts": ensemble.swap_accepts.tolist(),
        "rates": _rates(ensemble.swap_attempts, ensemble.swap_accepts),
        "burn_in_attempts": ensemble.burn_attempts.tolist(),
        "burn_in_rates": _rates(ensemble.burn_attempts, ensemble.burn_accepts),
        "rule": swap_rule,
    }
    return trace
