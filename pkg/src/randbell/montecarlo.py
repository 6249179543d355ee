"""Monte Carlo estimation of nonclassicality probabilities.

Trials are processed in fixed-size chunks of consecutive trial indices.  The
chunk size depends only on ``n`` (never on the thread count) and chunk
results are reduced in index order, so every estimate is a pure function of
the configuration.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from . import inequalities as ineq
from .lcd_lp import DEFAULT_LP_MAX_N, SolverError, decide
from .quantum import (
    GHZ,
    SchmidtPair,
    Singlet,
    StateSpec,
    schmidt_full_tensors,
    schmidt_marginal_tensors,
    tensors_for_state,
)
from .sampling import (
    SamplingMode,
    draws_per_trial,
    frames_from_uniforms,
    schmidt_angle_from_uniform,
    uniform_rows,
)

RANDOM_PURE = "random-pure-two-qubit"
WILSON_Z = 1.959963984540054
MAX_INVALID_FRACTION = 1e-3
THREADS_ENV = "RANDBELL_THREADS"


class Criterion(str, enum.Enum):
    MABK_SINGLE = "mabk-single"
    MABK_ORBIT = "mabk-orbit"
    WWZB = "wwzb"
    LP = "lp"


CHAIN_ORDER = (Criterion.MABK_SINGLE, Criterion.MABK_ORBIT, Criterion.WWZB, Criterion.LP)


class ConfigError(ValueError):
    pass


class InvalidTrialsError(RuntimeError):
    """Too many trials hit solver failures (or none were valid)."""

    def __init__(self, message: str, invalid: int, total: int):
        super().__init__(message)
        self.invalid = invalid
        self.total = total


class ChainViolation(AssertionError):
    """A stronger criterion fired while a weaker one did not."""


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer")
    return value


def chunk_size_for(n: int) -> int:
    # bounded memory: a chunk holds about 2**20 correlator entries at large n
    return int(min(4096, max(16, 2 ** 20 // 2 ** n)))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    mode: SamplingMode = SamplingMode.RIM
    state: Union[StateSpec, str, None] = None  # None means GHZ(n)
    criteria: tuple[Criterion, ...] = (Criterion.MABK_ORBIT,)
    trials: int = 100_000
    master_seed: int = 0
    lp_enabled_max_n: int = DEFAULT_LP_MAX_N
    threads: int = 1
    lp_screen: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", SamplingMode(self.mode))
            crit = tuple(Criterion(c) for c in self.criteria)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not crit:
            raise ConfigError("at least one criterion is required")
        object.__setattr__(self, "criteria", tuple(dict.fromkeys(crit)))
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        state = GHZ(int(self.n)) if self.state is None else self.state
        if isinstance(state, str):
            if state != RANDOM_PURE:
                raise ConfigError(f"unknown state {state!r}")
            if self.n != 2:
                raise ConfigError("the random pure state is a two-qubit state (n = 2)")
        else:
            if state.n != self.n:
                raise ConfigError(f"state has {state.n} parties but n = {self.n}")
            try:
                state.validate(max(self.n, 2))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        object.__setattr__(self, "state", state)
        if Criterion.LP in self.criteria and self.n > self.lp_enabled_max_n:
            raise ConfigError(f"LP criterion requires n <= {self.lp_enabled_max_n}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.trials - 1 >= 2 ** 64:
            raise ConfigError("too many trials for 64-bit stream indices")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def random_state(self) -> bool:
        return isinstance(self.state, str)

    @property
    def with_lp(self) -> bool:
        return Criterion.LP in self.criteria

    @property
    def state_label(self) -> str:
        if self.random_state:
            return "random-pure"
        if isinstance(self.state, SchmidtPair):
            return f"schmidt:{self.state.theta!r}"
        if isinstance(self.state, Singlet):
            return "singlet"
        return "ghz"


@dataclass(frozen=True)
class TrialVerdict:
    index: int
    mabk_single: bool
    mabk_orbit: bool
    wwzb: bool
    lp: Optional[bool]
    mabk_single_value: float
    mabk_best_value: float
    wwzb_lhs: float
    theta: Optional[float] = None
    invalid: bool = False

    def verdict(self, criterion: Criterion) -> Optional[bool]:
        return {
            Criterion.MABK_SINGLE: self.mabk_single,
            Criterion.MABK_ORBIT: self.mabk_orbit,
            Criterion.WWZB: self.wwzb,
            Criterion.LP: self.lp,
        }[Criterion(criterion)]


@dataclass
class _Chunk:
    start: int
    single: np.ndarray
    orbit: np.ndarray
    wwzb: np.ndarray
    lp: Optional[np.ndarray]
    single_value: np.ndarray
    best_value: np.ndarray
    wwzb_lhs: np.ndarray
    theta: Optional[np.ndarray]
    invalid: np.ndarray


def _check_chain(c: _Chunk) -> None:
    bad = (c.single & ~c.orbit) | (c.orbit & ~c.wwzb)
    if c.lp is not None:
        bad |= c.wwzb & ~c.lp & ~c.invalid
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise ChainViolation(f"implication chain broken at trial {c.start + t}")


def _evaluate_chunk(config: ExperimentConfig, start: int, count: int) -> _Chunk:
    n = config.n
    width = draws_per_trial(n, config.mode, config.random_state)
    u = uniform_rows(config.master_seed, start, count, width)
    theta = None
    if config.random_state:
        theta = schmidt_angle_from_uniform(u[:, 0])
        u = u[:, 1:]
    dirs = frames_from_uniforms(u, n, config.mode)
    if config.random_state:
        marg = schmidt_marginal_tensors(dirs, theta) if config.with_lp else None
        full = schmidt_full_tensors(dirs, theta)
    else:
        full, marg = tensors_for_state(config.state, dirs, config.with_lp)

    bound = ineq.classical_bound(n) + ineq.VIOLATION_TOL
    orbit_vals = ineq.mabk_orbit_values(full)
    single_value = orbit_vals[:, 0].copy()
    best_value = orbit_vals.max(axis=1)
    wwzb_lhs = ineq.wwzb_lhs_rows(full)
    single = single_value > bound
    orbit = best_value > bound
    wwzb = wwzb_lhs > ineq.wwzb_bound(n) + ineq.VIOLATION_TOL
    invalid = np.zeros(count, dtype=bool)
    lp = None
    if config.with_lp:
        lp = np.zeros(count, dtype=bool)
        for t in range(count):
            if config.lp_screen and (wwzb[t] or orbit[t]):
                # a violated Bell inequality already certifies infeasibility
                lp[t] = True
                continue
            try:
                lp[t] = decide(marg[t], n, screen=config.lp_screen).nonclassical
            except SolverError:
                invalid[t] = True
    chunk = _Chunk(start, single, orbit, wwzb, lp, single_value, best_value, wwzb_lhs, theta, invalid)
    _check_chain(chunk)
    return chunk


def run_trial(config: ExperimentConfig, trial_index: int) -> TrialVerdict:
    """Verdict of one trial; a pure function of ``(config, trial_index)``."""
    if not 0 <= trial_index < 2 ** 64:
        raise ValueError("trial_index must be a 64-bit unsigned integer")
    c = _evaluate_chunk(config, int(trial_index), 1)
    return TrialVerdict(
        index=int(trial_index),
        mabk_single=bool(c.single[0]),
        mabk_orbit=bool(c.orbit[0]),
        wwzb=bool(c.wwzb[0]),
        lp=None if c.lp is None or c.invalid[0] else bool(c.lp[0]),
        mabk_single_value=float(c.single_value[0]),
        mabk_best_value=float(c.best_value[0]),
        wwzb_lhs=float(c.wwzb_lhs[0]),
        theta=None if c.theta is None else float(c.theta[0]),
        invalid=bool(c.invalid[0]),
    )


def iter_verdicts(config: ExperimentConfig, start: int = 0, count: Optional[int] = None) -> Iterable[TrialVerdict]:
    """Per-trial verdicts for a contiguous index range (diagnostic helper)."""
    count = config.trials if count is None else count
    step = chunk_size_for(config.n)
    for s in range(start, start + count, step):
        c = _evaluate_chunk(config, s, min(step, start + count - s))
        for t in range(c.single.shape[0]):
            yield TrialVerdict(
                s + t,
                bool(c.single[t]),
                bool(c.orbit[t]),
                bool(c.wwzb[t]),
                None if c.lp is None or c.invalid[t] else bool(c.lp[t]),
                float(c.single_value[t]),
                float(c.best_value[t]),
                float(c.wwzb_lhs[t]),
                None if c.theta is None else float(c.theta[t]),
                bool(c.invalid[t]),
            )


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    # the endpoints are exact at 0 and at trials; do not leave rounding residue
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class EstimateRecord:
    criterion: Criterion
    successes: int
    trials: int
    invalid_trials: int
    master_seed: int
    n: int
    mode: SamplingMode
    state: str = "ghz"
    theta: Optional[float] = None
    # mean single-MABK value over its violators, normalized by the classical
    # bound and by the quantum maximum (only for MABK_SINGLE)
    mean_violation_classical: Optional[float] = None
    mean_violation_quantum: Optional[float] = None

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.trials)

    @property
    def wilson(self) -> tuple[float, float]:
        return wilson_interval(self.successes, self.trials)


def aggregate(
    criterion: Criterion,
    verdicts: Sequence[bool],
    invalid: Optional[Sequence[bool]] = None,
    **meta,
) -> EstimateRecord:
    """Build a record from raw per-trial booleans (same path :func:`estimate` uses)."""
    v = np.asarray(verdicts, dtype=bool)
    bad = np.zeros_like(v) if invalid is None else np.asarray(invalid, dtype=bool)
    valid = int((~bad).sum())
    if valid == 0:
        raise InvalidTrialsError("no valid trials", int(bad.sum()), v.size)
    meta.setdefault("master_seed", 0)
    meta.setdefault("n", 2)
    meta.setdefault("mode", SamplingMode.RIM)
    return EstimateRecord(Criterion(criterion), int((v & ~bad).sum()), valid, int(bad.sum()), **meta)


def _run_chunks(config: ExperimentConfig) -> list[_Chunk]:
    step = chunk_size_for(config.n)
    starts = list(range(0, config.trials, step))
    sizes = [min(step, config.trials - s) for s in starts]
    if config.threads == 1 or len(starts) == 1:
        return [_evaluate_chunk(config, s, c) for s, c in zip(starts, sizes)]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(lambda sc: _evaluate_chunk(config, *sc), zip(starts, sizes)))


def estimate(config: ExperimentConfig) -> list[EstimateRecord]:
    """One record per requested criterion, in the order requested."""
    chunks = _run_chunks(config)
    invalid = sum(int(c.invalid.sum()) for c in chunks)
    valid = config.trials - invalid
    if valid == 0:
        raise InvalidTrialsError("no valid trials", invalid, config.trials)
    if invalid > MAX_INVALID_FRACTION * config.trials:
        raise InvalidTrialsError(
            f"{invalid} of {config.trials} trials failed in the LP solver", invalid, config.trials
        )
    n = config.n
    theta = config.state.theta if isinstance(config.state, SchmidtPair) else None
    records = []
    for crit in config.criteria:
        attr = {
            Criterion.MABK_SINGLE: "single",
            Criterion.MABK_ORBIT: "orbit",
            Criterion.WWZB: "wwzb",
            Criterion.LP: "lp",
        }[crit]
        hits = sum(int((getattr(c, attr) & ~c.invalid).sum()) for c in chunks)
        extra = {}
        if crit is Criterion.MABK_SINGLE:
            total = 0.0
            for c in chunks:  # chunk order keeps the float sum thread-independent
                total += float(c.single_value[c.single & ~c.invalid].sum())
            if hits:
                mean = total / hits
                extra = dict(
                    mean_violation_classical=mean / ineq.classical_bound(n),
                    mean_violation_quantum=mean / ineq.quantum_max(n),
                )
        records.append(
            EstimateRecord(
                crit, hits, valid, invalid, config.master_seed, n, config.mode,
                state=config.state_label, theta=theta, **extra,
            )
        )
    return records


def entanglement_sweep(
    thetas: Sequence[float],
    config: ExperimentConfig,
    modes: Sequence[SamplingMode] = (SamplingMode.RIM, SamplingMode.ROM),
) -> list[tuple[float, dict[SamplingMode, EstimateRecord]]]:
    """CHSH-class violation probability for Schmidt-form states at each angle."""
    if config.n != 2:
        raise ConfigError("the entanglement sweep is a two-qubit experiment")
    out = []
    for th in thetas:
        per_mode = {}
        for mode in modes:
            cfg = replace(config, state=SchmidtPair(float(th)), mode=SamplingMode(mode),
                          criteria=(Criterion.MABK_ORBIT,))
            per_mode[SamplingMode(mode)] = estimate(cfg)[0]
        out.append((float(th), per_mode))
    return out


def random_state_probability(
    config: ExperimentConfig,
    modes: Sequence[SamplingMode] = (SamplingMode.RIM, SamplingMode.ROM),
) -> dict[SamplingMode, EstimateRecord]:
    """Violation probability when the two-qubit state is drawn uniformly as well."""
    if config.n != 2:
        raise ConfigError("the random pure state is a two-qubit state (n = 2)")
    return {
        SamplingMode(m): estimate(
            replace(config, state=RANDOM_PURE, mode=SamplingMode(m), criteria=(Criterion.MABK_ORBIT,))
        )[0]
        for m in modes
    }


__all__ = [
    "CHAIN_ORDER",
    "ChainViolation",
    "ConfigError",
    "Criterion",
    "EstimateRecord",
    "ExperimentConfig",
    "InvalidTrialsError",
    "RANDOM_PURE",
    "TrialVerdict",
    "aggregate",
    "chunk_size_for",
    "default_threads",
    "entanglement_sweep",
    "estimate",
    "iter_verdicts",
    "random_state_probability",
    "run_trial",
    "wilson_interval",
]
