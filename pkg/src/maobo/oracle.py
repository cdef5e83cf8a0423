"""Simulated decision makers: archetype construction, sticky mode gating, probit responses.

Archetypes follow the 80/20 construction: each mode concentrates a dominant
mass (default 0.8) uniformly on its objective group and spreads the remainder
uniformly over the other objectives. The latent mode evolves per query by a
stay-or-resample process with persistence rho (the i.i.d. regime is rho = 0
through the same code path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .core import SimplexVector, rng_stream
from .scalarize import MixtureParams, utility

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class ArchetypeSpec:
    """Partition of the objectives into per-mode dominant groups."""

    n_objectives: int
    groups: tuple[tuple[int, ...], ...]
    dominant_mass: float = 0.8

    def __post_init__(self):
        object.__setattr__(
            self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups)
        )
        if not 0.0 < self.dominant_mass < 1.0:
            raise ValueError("dominant_mass must be in (0,1)")
        flat = [i for g in self.groups for i in g]
        if any(len(g) == 0 for g in self.groups):
            raise ValueError("archetype groups must be nonempty")
        if sorted(flat) != list(range(self.n_objectives)):
            raise ValueError(
                f"groups must partition 0..{self.n_objectives - 1}, got {self.groups}"
            )


def build_archetypes(spec: ArchetypeSpec, floor: float | None = None) -> list[SimplexVector]:
    """One weight vector per group: dominant_mass/|G_k| inside, rest uniform outside."""
    L = spec.n_objectives
    out = []
    for g in spec.groups:
        w = np.full(L, (1.0 - spec.dominant_mass) / (L - len(g)))
        w[list(g)] = spec.dominant_mass / len(g)
        w = w / w.sum()
        out.append(SimplexVector(tuple(w), floor=floor))
    return out


@dataclass
class DmState:
    """Single-owner mutable state of one simulated decision maker."""

    eta_star: SimplexVector
    archetypes: tuple[SimplexVector, ...]
    regime: str = "persistent"
    rho: float = 0.5
    sigma_u: float = 0.02
    scalarization: str = "chebyshev"
    current_mode: int | None = None
    resample_count: int = 0  # resample events after the initial draw (diagnostics)

    def __post_init__(self):
        if self.regime not in ("iid", "persistent"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must be in [0,1)")
        if self.regime == "iid":
            self.rho = 0.0
        if len(self.eta_star) != len(self.archetypes):
            raise ValueError("eta_star and archetypes must have equal length")
        if self.sigma_u <= 0:
            raise ValueError("sigma_u must be > 0")

    @property
    def theta(self) -> MixtureParams:
        return MixtureParams(eta=self.eta_star, archetypes=self.archetypes)


def step_mode(state: DmState, stream: np.random.Generator) -> int:
    """Advance the latent mode one query: stay w.p. rho, else resample from eta*.

    A resample may redraw the current mode; run lengths between resample
    events are geometric with mean 1/(1-rho), and resamples over T queries
    number (1-rho)(T-1) in expectation.
    """
    eta = state.eta_star.array
    if state.current_mode is None:
        state.current_mode = int(stream.choice(eta.size, p=eta))
    elif stream.uniform() >= state.rho:
        state.current_mode = int(stream.choice(eta.size, p=eta))
        state.resample_count += 1
    return state.current_mode


def respond(state: DmState, y_i, y_j, stream: np.random.Generator) -> tuple[bool, int]:
    """Probit comparison under the currently active archetype.

    Returns (winner_is_i, mode_used); the mode index is diagnostics-only and
    must never reach the learner.
    """
    if state.current_mode is None:
        raise RuntimeError("state must be stepped before responding")
    w = state.archetypes[state.current_mode]
    gap = utility(y_i, w, state.scalarization) - utility(y_j, w, state.scalarization)
    p = float(np.exp(log_ndtr(gap / (SQRT2 * state.sigma_u))))
    return bool(stream.uniform() < p), state.current_mode


class DmOracle:
    """Seeded simulated DM answering one query per outer iteration.

    Each query t draws from the labelled stream (seed, "dm-t{t}"), so replays
    and the elicitation service's scripted clients reproduce responses exactly.
    """

    def __init__(self, state: DmState, seed: int):
        self.state = state
        self.seed = seed
        self._last_t = 0

    def respond(self, t: int, y_i, y_j) -> tuple[bool, int]:
        if t != self._last_t + 1:
            raise ValueError(f"queries must be sequential: got t={t} after {self._last_t}")
        self._last_t = t
        stream = rng_stream(self.seed, f"dm-t{t}")
        step_mode(self.state, stream)
        return respond(self.state, y_i, y_j, stream)
