"""Shared domain types, deterministic RNG streams, run configuration and persistence.

Every stochastic component in the system draws from a labelled stream obtained
via :func:`rng_stream`, so that a run is fully determined by its seed. Run
records are persisted as JSON lines (one record per line after a header line)
with floats serialized via ``repr`` round-trip, which is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

SIMPLEX_TOL = 1e-9

RUN_FILE_HEADER = {"format": "maobo-run", "version": 1}

QUERY_MODES = ("random", "clusterless", "inter", "intra", "hybrid")
CONTEXT_REGIMES = ("iid", "persistent")
SCALARIZATIONS = ("chebyshev", "weighted_sum")


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Deterministic labelled substream of the master seed.

    The label is hashed (stable across processes) into a 64-bit word that is
    combined with the master seed, so distinct labels behave as independent
    streams and identical ``(seed, label)`` pairs always reproduce the same
    sequence, regardless of call order elsewhere in the program.
    """
    if not label:
        raise ValueError("stream label must be nonempty")
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    sub = int.from_bytes(digest, "little")
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, sub]))


def _as_float_tuple(values) -> tuple[float, ...]:
    return tuple(float(v) for v in np.asarray(values, dtype=float).ravel())


@dataclass(frozen=True)
class DesignPoint:
    """A design in the unit box [0, 1]^d."""

    x: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", _as_float_tuple(self.x))
        arr = np.asarray(self.x)
        if arr.size == 0:
            raise ValueError("design point must have at least one coordinate")
        if not np.all(np.isfinite(arr)):
            raise ValueError("design point has non-finite coordinates")
        if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12):
            raise ValueError(f"design point outside [0,1]^d: {self.x}")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.x, dtype=float)


@dataclass(frozen=True)
class OutcomeVector:
    """An objective vector (minimization convention)."""

    y: tuple[float, ...]
    bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "y", _as_float_tuple(self.y))
        arr = np.asarray(self.y)
        if arr.size == 0:
            raise ValueError("outcome vector must have at least one objective")
        if not np.all(np.isfinite(arr)):
            raise ValueError("outcome vector has non-finite entries")
        if self.bound is not None and np.max(np.abs(arr)) > self.bound + 1e-12:
            raise ValueError(
                f"outcome magnitude {np.max(np.abs(arr))} exceeds declared bound {self.bound}"
            )

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.y, dtype=float)


@dataclass(frozen=True)
class SimplexVector:
    """Nonnegative weights summing to one, optionally bounded away from the boundary."""

    p: tuple[float, ...]
    floor: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", _as_float_tuple(self.p))
        arr = np.asarray(self.p)
        if arr.size == 0:
            raise ValueError("simplex vector must be nonempty")
        if np.any(arr < 0):
            raise ValueError(f"simplex vector has negative entries: {self.p}")
        if abs(float(arr.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex vector sums to {arr.sum()}, not 1")
        if self.floor is not None:
            if self.floor < 0:
                raise ValueError("simplex floor must be >= 0")
            if np.any(arr < self.floor - 1e-12):
                raise ValueError(
                    f"simplex entry {arr.min()} violates floor {self.floor}"
                )

    @classmethod
    def from_raw(cls, weights, floor: float | None = None) -> "SimplexVector":
        """Normalize raw nonnegative weights, then assert the floor (no clamping)."""
        arr = np.asarray(weights, dtype=float)
        if np.any(arr < 0):
            raise ValueError("raw weights must be nonnegative")
        total = float(arr.sum())
        if total <= 0:
            raise ValueError("raw weights sum to zero")
        return cls(tuple(arr / total), floor=floor)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    def __len__(self) -> int:
        return len(self.p)


def floor_simplex(weights, floor: float) -> np.ndarray:
    """Project a raw weight vector onto the simplex with all entries >= floor.

    Entries below the floor are pinned to it and the remaining mass is
    redistributed proportionally over the rest (exact water-filling; at most
    n rounds). Requires n * floor <= 1.
    """
    arr = np.asarray(weights, dtype=float)
    n = arr.size
    if floor < 0:
        raise ValueError("floor must be nonnegative")
    if n * floor > 1 + 1e-12:
        raise ValueError(f"floor {floor} infeasible for length {n}")
    total = float(arr.sum())
    if total <= 0:
        raise ValueError("raw weights sum to zero")
    w = arr / total
    order = np.argsort(w, kind="stable")
    sorted_w = w[order]
    suffix = np.cumsum(sorted_w[::-1])[::-1]  # suffix[i] = sum of sorted_w[i:]
    # Pin the m smallest entries at the floor; scale the rest to fill 1 - m*floor.
    for m in range(n):
        free_mass = 1.0 - m * floor
        scale = free_mass / suffix[m] if suffix[m] > 0 else np.inf
        if sorted_w[m] * scale >= floor - 1e-15:
            out = np.empty(n)
            out[order[:m]] = floor
            out[order[m:]] = sorted_w[m:] * scale
            return out
    return np.full(n, 1.0 / n)


@dataclass(frozen=True)
class PreferenceDatum:
    """One pairwise comparison: winner first. The unit of DM feedback."""

    winner: tuple[float, ...]
    loser: tuple[float, ...]
    round: int
    latent_mode_truth: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "winner", _as_float_tuple(self.winner))
        object.__setattr__(self, "loser", _as_float_tuple(self.loser))
        if len(self.winner) != len(self.loser):
            raise ValueError(
                f"winner has {len(self.winner)} objectives, loser {len(self.loser)}"
            )
        if self.latent_mode_truth is not None and self.latent_mode_truth < 0:
            raise ValueError("latent mode index must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    """Full configuration of one optimization run. All randomness derives from `seed`."""

    problem: str = "dtlz2"
    seed: int = 0
    out_dir: str = "runs"
    # preference mixture model
    k_trunc: int = 5
    alpha: float = 1.0
    beta_dir: float = 1.0
    sigma_u: float = 0.02
    weight_floor: float = 0.01
    scalarization: str = "chebyshev"
    fixed_pref: bool = False
    # query policy
    query_mode: str = "hybrid"
    hybrid_lambda: float = 0.5
    policy_samples: int = 64
    pair_subsample: int = 200
    # simulated decision maker
    context_regime: str = "persistent"
    rho: float = 0.5
    eta_star: tuple[float, ...] = ()
    groups: tuple[tuple[int, ...], ...] = ()
    dominant_mass: float = 0.8
    sigma_u_oracle: float | None = None
    # budgets
    n_iterations: int = 50
    n_init: int = 5
    svi_steps: int = 500
    svi_lr: float = 1e-3
    svi_mc_samples: int = 8
    ei_mc_samples: int = 12
    ei_restarts: int = 10
    ei_max_evals: int = 200
    ubest_samples: int = 64
    gp_restarts: int = 5
    gp_refit_period: int = 3
    ref_samples: int = 500
    obs_noise: float = 0.0
    theory_check: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eta_star", _as_float_tuple(self.eta_star))
        object.__setattr__(
            self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups)
        )

    def validate(self) -> None:
        errors = []
        if self.query_mode not in QUERY_MODES:
            errors.append(f"query_mode must be one of {QUERY_MODES}, got {self.query_mode!r}")
        if self.context_regime not in CONTEXT_REGIMES:
            errors.append(
                f"context_regime must be one of {CONTEXT_REGIMES}, got {self.context_regime!r}"
            )
        if self.scalarization not in SCALARIZATIONS:
            errors.append(
                f"scalarization must be one of {SCALARIZATIONS}, got {self.scalarization!r}"
            )
        if not 0.0 <= self.hybrid_lambda <= 1.0:
            errors.append(f"hybrid_lambda must be in [0,1], got {self.hybrid_lambda}")
        if not 0.0 <= self.rho < 1.0:
            errors.append(f"rho must be in [0,1), got {self.rho}")
        if not 0.0 < self.dominant_mass < 1.0:
            errors.append(f"dominant_mass must be in (0,1), got {self.dominant_mass}")
        for name in (
            "k_trunc", "policy_samples", "pair_subsample", "n_iterations", "n_init",
            "svi_steps", "svi_mc_samples", "ei_mc_samples", "ei_restarts",
            "ei_max_evals", "ubest_samples", "gp_restarts", "gp_refit_period",
            "ref_samples",
        ):
            if getattr(self, name) < 1:
                errors.append(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("alpha", "beta_dir", "sigma_u", "svi_lr"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be > 0, got {getattr(self, name)}")
        if self.weight_floor <= 0:
            errors.append(f"weight_floor must be > 0, got {self.weight_floor}")
        if self.eta_star:
            arr = np.asarray(self.eta_star)
            if abs(arr.sum() - 1.0) > SIMPLEX_TOL:
                errors.append(f"eta_star sums to {arr.sum()}, not 1")
            if np.any(arr < 0):
                errors.append("eta_star has negative entries")
        if self.obs_noise < 0:
            errors.append(f"obs_noise must be >= 0, got {self.obs_noise}")
        if errors:
            raise ValueError("invalid run config:\n  " + "\n  ".join(errors))

    @property
    def oracle_noise(self) -> float:
        return self.sigma_u if self.sigma_u_oracle is None else self.sigma_u_oracle

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eta_star"] = list(self.eta_star)
        d["groups"] = [list(g) for g in self.groups]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class RunRecord:
    """Snapshot of one outer iteration; the persistence and replay unit."""

    iteration: int
    design: tuple[float, ...]
    outcome: tuple[float, ...]
    query_i: int
    query_j: int
    response_first: bool
    mode_used: int | None = None
    eta_mean: tuple[float, ...] = ()
    archetype_means: tuple[tuple[float, ...], ...] = ()
    archetype_errors: tuple[float, ...] | None = None
    simple_regret: float | None = None
    eta_kl: float | None = None
    pref_errors: tuple[float, float, float] | None = None
    ei_value: float = 0.0
    restart_spread: float = 0.0
    theory: dict | None = None
    wall_clock: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "design", _as_float_tuple(self.design))
        object.__setattr__(self, "outcome", _as_float_tuple(self.outcome))
        object.__setattr__(self, "eta_mean", _as_float_tuple(self.eta_mean))
        object.__setattr__(
            self,
            "archetype_means",
            tuple(_as_float_tuple(w) for w in self.archetype_means),
        )
        if self.archetype_errors is not None:
            object.__setattr__(
                self, "archetype_errors", _as_float_tuple(self.archetype_errors)
            )
        if self.pref_errors is not None:
            object.__setattr__(self, "pref_errors", _as_float_tuple(self.pref_errors))

    def without_wall_clock(self) -> "RunRecord":
        return replace(self, wall_clock=None)


def save_run(records: list[RunRecord], path) -> None:
    """Write records as JSON lines under a one-line header. Bit-exact floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(RUN_FILE_HEADER, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(asdict(rec), allow_nan=False) + "\n")


def load_run(path) -> list[RunRecord]:
    """Inverse of :func:`save_run`; raises naming the offending line on bad input."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"run file not found: {path}")
    records: list[RunRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file, expected header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: line 1: malformed header: {exc}") from exc
    if header.get("format") != RUN_FILE_HEADER["format"]:
        raise ValueError(f"{path}: line 1: not a maobo run file")
    known = {f.name for f in fields(RunRecord)}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {lineno}: malformed record: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: line {lineno}: record is not an object")
        missing = known - set(raw)
        extra = set(raw) - known
        if missing or extra:
            raise ValueError(
                f"{path}: line {lineno}: record fields mismatch"
                f" (missing {sorted(missing)}, extra {sorted(extra)})"
            )
        raw["archetype_means"] = tuple(tuple(w) for w in raw["archetype_means"])
        records.append(RunRecord(**raw))
    prev = None
    for rec in records:
        if prev is not None and rec.iteration <= prev:
            raise ValueError(f"{path}: iterations not strictly increasing at {rec.iteration}")
        prev = rec.iteration
    return records


def write_csv(path, header: list[str], rows) -> None:
    """Plain CSV with header row, UTF-8, LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"csv file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty csv")
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:] if line]
