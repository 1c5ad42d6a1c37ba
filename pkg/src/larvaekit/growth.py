"""Length-at-age growth models: fitting, ranking and stage lookup.

Five families are supported (von Bertalanffy, Gompertz, linear, power,
exponential). The nonlinear ones are fitted by a damped Gauss-Newton
iteration with a numerically differenced Jacobian; the linear model is
solved in closed form. Goodness of fit is the coefficient of
determination R² = 1 - SSE/SST.

The damping schedule is the classic one: multiply the factor by 10 when a
trial step increases the SSE (and reject the step), divide by 10 when it
decreases. Iteration stops when the relative SSE improvement of an
accepted step falls below 1e-10 or after 200 attempts.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientData,
    MalformedLine,
    MissingColumn,
    NonFiniteResult,
    OutOfRange,
    SingularNormalEquations,
    ZeroVariance,
)


class GrowthModelKind(enum.Enum):
    VBGM = "vbgm"
    GOMPERTZ = "gompertz"
    LINEAR = "linear"
    POWER = "power"
    EXPONENTIAL = "exponential"


DISPLAY_NAMES = {
    GrowthModelKind.VBGM: "VBGM",
    GrowthModelKind.GOMPERTZ: "Gompertz",
    GrowthModelKind.LINEAR: "Linear",
    GrowthModelKind.POWER: "Power",
    GrowthModelKind.EXPONENTIAL: "Exponential",
}

PARAM_NAMES = {
    GrowthModelKind.VBGM: ("l_inf", "k1", "t0"),
    GrowthModelKind.GOMPERTZ: ("l_inf", "k2", "a", "tr"),
    GrowthModelKind.LINEAR: ("a", "b"),
    GrowthModelKind.POWER: ("a", "b"),
    GrowthModelKind.EXPONENTIAL: ("a", "b"),
}

# Gompertz tr trades off against k2 almost perfectly on short series;
# keep it from wandering.
GOMPERTZ_TR_BOUNDS = (-5.0, 5.0)

MAX_ITERATIONS = 200
REL_SSE_TOL = 1e-10
JACOBIAN_STEP = 1e-6
MULTI_STARTS = 5


def parse_model_kind(name: str) -> GrowthModelKind:
    try:
        return GrowthModelKind(name.strip().lower())
    except ValueError:
        valid = ", ".join(k.value for k in GrowthModelKind)
        raise ValueError(f"unknown model {name!r}; expected one of {valid}") from None


@dataclass(frozen=True)
class GrowthObservation:
    """One (age, mean length) measurement."""

    age_days: float
    length_mm: float

    def __post_init__(self):
        if not (math.isfinite(self.age_days) and self.age_days >= 0):
            raise OutOfRange(f"age_days must be finite and non-negative, got {self.age_days}")
        # 50 mm is far beyond any larval stage; longer "lengths" are data errors.
        if not 0.0 < self.length_mm < 50.0:
            raise OutOfRange(f"length_mm must lie in (0, 50), got {self.length_mm}")


@dataclass(frozen=True)
class FitResult:
    kind: GrowthModelKind
    params: tuple[float, ...]
    sse: float
    r_squared: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class RankedModel:
    """A family's slot in the model ranking; failed fits carry the error."""

    kind: GrowthModelKind
    result: FitResult | None
    error: Exception | None = None


def _model_values(kind: GrowthModelKind, params: Sequence[float], t: np.ndarray) -> np.ndarray:
    # Raw evaluator: no domain checks, non-finite values pass through so the
    # damping loop can reject overflowing trial steps.
    p = params
    with np.errstate(over="ignore", invalid="ignore"):
        if kind is GrowthModelKind.VBGM:
            return p[0] * (1.0 - np.exp(-p[1] * (t - p[2])))
        if kind is GrowthModelKind.GOMPERTZ:
            return p[0] * np.exp(-p[1] * np.exp(-p[2] * (t - p[3])))
        if kind is GrowthModelKind.LINEAR:
            return p[0] * t + p[1]
        if kind is GrowthModelKind.POWER:
            out = np.zeros_like(t, dtype=float)
            pos = t > 0
            out[pos] = p[0] * np.power(t[pos], p[1])
            return out
        if kind is GrowthModelKind.EXPONENTIAL:
            return p[0] * np.exp(p[1] * t)
    raise ValueError(f"unknown model kind {kind!r}")


def predict(kind: GrowthModelKind, params: Sequence[float], t):
    """Evaluate a growth model at age(s) ``t`` (days), returning mm.

    ``t`` may be a scalar or an array; ages must be finite and
    non-negative. The power model is 0 at t=0 by definition.
    """
    expected = len(PARAM_NAMES[kind])
    if len(params) != expected:
        raise ValueError(f"{kind.value} takes {expected} parameters, got {len(params)}")
    t_arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t_arr)) or np.any(t_arr < 0):
        raise OutOfRange("ages must be finite and non-negative")
    values = _model_values(kind, tuple(float(v) for v in params), np.atleast_1d(t_arr))
    if not np.all(np.isfinite(values)):
        raise NonFiniteResult(f"{kind.value} overflowed at the requested ages")
    if t_arr.ndim == 0:
        return float(values[0])
    return values


def forward_jacobian(kind: GrowthModelKind, params: Sequence[float], t: np.ndarray) -> np.ndarray:
    """Forward-difference Jacobian d model / d params at the sample ages."""
    p = np.asarray(params, dtype=float)
    base = _model_values(kind, p, t)
    J = np.zeros((t.size, p.size))
    for j in range(p.size):
        h = JACOBIAN_STEP * max(1.0, abs(p[j]))
        q = p.copy()
        q[j] += h
        J[:, j] = (_model_values(kind, q, t) - base) / h
    return J


def _project(kind: GrowthModelKind, p: np.ndarray) -> np.ndarray:
    if kind is GrowthModelKind.GOMPERTZ:
        lo, hi = GOMPERTZ_TR_BOUNDS
        p = p.copy()
        p[3] = min(max(p[3], lo), hi)
    return p


def _sse(kind: GrowthModelKind, p: np.ndarray, t: np.ndarray, lengths: np.ndarray) -> float:
    r = lengths - _model_values(kind, p, t)
    return float(r @ r)


def _damped_least_squares(
    kind: GrowthModelKind,
    p0: Sequence[float],
    t: np.ndarray,
    lengths: np.ndarray,
    max_iterations: int = MAX_ITERATIONS,
    rel_tol: float = REL_SSE_TOL,
) -> tuple[np.ndarray, float, int, bool, list[float]]:
    """Damped Gauss-Newton refinement.

    Returns (params, sse, iterations, converged, accepted-SSE history).
    Every attempted step counts as an iteration; the Jacobian is only
    recomputed after an accepted step since rejected ones leave the
    parameters untouched.
    """
    p = _project(kind, np.asarray(p0, dtype=float))
    best = _sse(kind, p, t, lengths)
    history = [best]
    lam = 1e-3
    converged = best == 0.0
    iterations = 0
    normal_matrix = gradient = None
    while not converged and iterations < max_iterations:
        iterations += 1
        if normal_matrix is None:
            J = forward_jacobian(kind, p, t)
            r = lengths - _model_values(kind, p, t)
            normal_matrix = J.T @ J
            gradient = J.T @ r
        damped = normal_matrix + lam * np.eye(p.size)
        try:
            step = np.linalg.solve(damped, gradient)
        except np.linalg.LinAlgError:
            raise SingularNormalEquations(
                f"{kind.value}: damped normal equations are singular (lambda={lam:g})"
            ) from None
        if not np.all(np.isfinite(step)):
            raise SingularNormalEquations(
                f"{kind.value}: normal-equation solve produced non-finite step"
            )
        trial = _project(kind, p + step)
        trial_sse = _sse(kind, trial, t, lengths)
        if trial_sse < best:
            rel = (best - trial_sse) / best if best > 0 else 1.0
            p, best = trial, trial_sse
            history.append(best)
            lam = max(lam / 10.0, 1e-12)
            normal_matrix = gradient = None
            if best == 0.0 or rel < rel_tol:
                converged = True
        else:
            lam *= 10.0
            if lam > 1e12:
                # Not even a vanishing step improves; we are stalled.
                break
    return p, best, iterations, converged, history


def _prepared(observations: Sequence[GrowthObservation], n_params: int, kind: GrowthModelKind):
    if len(observations) < n_params + 1:
        raise InsufficientData(
            f"{kind.value}: needs at least {n_params + 1} observations, got {len(observations)}"
        )
    ordered = sorted(observations, key=lambda o: o.age_days)
    t = np.array([o.age_days for o in ordered], dtype=float)
    lengths = np.array([o.length_mm for o in ordered], dtype=float)
    if np.unique(t).size < 2:
        raise InsufficientData(f"{kind.value}: needs at least two distinct ages")
    return t, lengths


def _initial_params(kind: GrowthModelKind, t: np.ndarray, lengths: np.ndarray) -> list[float]:
    l_top = 1.1 * float(lengths.max())
    if kind is GrowthModelKind.VBGM:
        return [l_top, 0.1, 0.0]
    if kind is GrowthModelKind.GOMPERTZ:
        return [l_top, math.log(l_top / float(lengths[0])), 0.1, 0.0]
    if kind is GrowthModelKind.POWER:
        pos = t > 0
        if np.unique(t[pos]).size < 2:
            raise InsufficientData("power: needs two distinct positive ages to initialize")
        b0, log_a0 = np.polyfit(np.log(t[pos]), np.log(lengths[pos]), 1)
        return [math.exp(log_a0), float(b0)]
    if kind is GrowthModelKind.EXPONENTIAL:
        b0, log_a0 = np.polyfit(t, np.log(lengths), 1)
        return [math.exp(log_a0), float(b0)]
    raise ValueError(f"no initializer for {kind!r}")


def _fit_linear(t: np.ndarray, lengths: np.ndarray) -> tuple[tuple[float, float], float]:
    n = t.size
    sx, sy = float(t.sum()), float(lengths.sum())
    sxx, sxy = float((t * t).sum()), float((t * lengths).sum())
    denom = n * sxx - sx * sx
    if denom == 0.0:
        raise SingularNormalEquations("linear: all ages identical")
    slope = (n * sxy - sx * sy) / denom
    intercept = (sy - slope * sx) / n
    residuals = lengths - (slope * t + intercept)
    return (slope, intercept), float(residuals @ residuals)


def _total_sum_of_squares(lengths: np.ndarray) -> float:
    sst = float(((lengths - lengths.mean()) ** 2).sum())
    if sst == 0.0:
        raise ZeroVariance("all lengths are equal; R-squared is undefined")
    return sst


def fit(
    kind: GrowthModelKind,
    observations: Sequence[GrowthObservation],
    multi_start: bool = False,
    seed: int = 0,
) -> FitResult:
    """Least-squares fit of one model family.

    The linear family is solved exactly; power/exponential start from a
    log-space regression (power drops t=0 points for the initialization
    only) and the sigmoids start from l_inf = 1.1*max(L), rates 0.1/day,
    zero offsets, k2 = ln(l_inf / first length). ``multi_start`` adds
    five jittered restarts (seeded, deterministic) and keeps the lowest
    SSE, which guards the sigmoids against local minima.
    """
    names = PARAM_NAMES[kind]
    t, lengths = _prepared(observations, len(names), kind)
    sst = _total_sum_of_squares(lengths)
    if kind is GrowthModelKind.LINEAR:
        params, sse = _fit_linear(t, lengths)
        return FitResult(kind, params, sse, 1.0 - sse / sst, iterations=0, converged=True)
    p0 = _initial_params(kind, t, lengths)
    starts = [p0]
    if multi_start:
        rng = np.random.default_rng(seed)
        scale = np.maximum(1.0, np.abs(p0))
        for _ in range(MULTI_STARTS):
            starts.append(list(p0 + 0.25 * scale * rng.standard_normal(len(p0))))
    best = None
    for start in starts:
        p, sse, iterations, converged, _ = _damped_least_squares(kind, start, t, lengths)
        if best is None or sse < best[1]:
            best = (p, sse, iterations, converged)
    p, sse, iterations, converged = best
    return FitResult(
        kind,
        tuple(float(v) for v in p),
        sse,
        1.0 - sse / sst,
        iterations=iterations,
        converged=converged,
    )


def r_squared(
    observations: Sequence[GrowthObservation],
    predictions: Sequence[float],
) -> float:
    """Coefficient of determination of predictions against observations."""
    if len(predictions) != len(observations):
        raise ValueError(
            f"{len(predictions)} predictions for {len(observations)} observations"
        )
    if len(observations) < 2:
        raise InsufficientData("R-squared needs at least two observations")
    lengths = np.array([o.length_mm for o in observations], dtype=float)
    sst = _total_sum_of_squares(lengths)
    residuals = lengths - np.asarray(predictions, dtype=float)
    return 1.0 - float(residuals @ residuals) / sst


def rank_models(
    observations: Sequence[GrowthObservation],
    kinds: Sequence[GrowthModelKind] = tuple(GrowthModelKind),
    multi_start: bool = False,
    seed: int = 0,
) -> list[RankedModel]:
    """Fit the requested families and sort by descending R².

    Ties break toward the family with fewer parameters. A family whose
    fit raises is ranked after every successful one, with the error
    attached. Degenerate constant-length data raises ZeroVariance
    outright since no family can be scored on it.
    """
    lengths = np.array([o.length_mm for o in observations], dtype=float)
    if lengths.size and lengths.min() == lengths.max():
        raise ZeroVariance("all lengths are equal; models cannot be ranked")
    family_order = {kind: i for i, kind in enumerate(GrowthModelKind)}
    fitted: list[RankedModel] = []
    failed: list[RankedModel] = []
    for kind in kinds:
        try:
            fitted.append(RankedModel(kind, fit(kind, observations, multi_start, seed)))
        except Exception as err:  # attach per-family failures, keep ranking
            failed.append(RankedModel(kind, None, err))
    fitted.sort(
        key=lambda rm: (
            -rm.result.r_squared,
            len(PARAM_NAMES[rm.kind]),
            family_order[rm.kind],
        )
    )
    failed.sort(key=lambda rm: family_order[rm.kind])
    return fitted + failed


# --- growth-stage lookup ---


@dataclass(frozen=True)
class StageInterval:
    stage: int
    age_days: float
    min_mm: float
    max_mm: float


# Carapace-to-telson length ranges measured per stage in our rearing runs
# (11 zoea stages, hatching to metamorphosis).
MEASURED_STAGE_INTERVALS = (
    StageInterval(1, 0, 1.53, 1.85),
    StageInterval(2, 1, 1.60, 1.90),
    StageInterval(3, 3, 1.93, 1.935),
    StageInterval(4, 4, 2.64, 2.92),
    StageInterval(5, 5, 3.01, 3.76),
    StageInterval(6, 6, 3.15, 3.88),
    StageInterval(7, 8, 4.44, 4.65),
    StageInterval(8, 9, 4.75, 5.22),
    StageInterval(9, 12, 5.23, 6.39),
    StageInterval(10, 14, 6.59, 7.48),
    StageInterval(11, 18, 6.22, 8.14),
)

# Alternate reference set: mean length ± one s.d. per stage from the
# Uno & Kwon (1969) laboratory rearing study; ages as printed there.
UNO_STAGE_INTERVALS = (
    StageInterval(1, 0, 1.90, 1.94),
    StageInterval(2, 2, 1.93, 2.05),
    StageInterval(3, 4, 2.09, 2.19),
    StageInterval(4, 7, 2.42, 2.58),
    StageInterval(5, 10, 2.77, 2.91),
    StageInterval(6, 14, 3.38, 4.12),
    StageInterval(7, 17, 3.91, 4.21),
    StageInterval(8, 10, 4.48, 4.88),
    StageInterval(9, 24, 5.78, 6.36),
    StageInterval(10, 28, 6.53, 7.57),
    StageInterval(11, 31, 6.92, 8.54),
)


@dataclass(frozen=True)
class StageLookup:
    """Stages whose interval contains a length; nearest hint when none does."""

    stages: tuple[int, ...]
    nearest_stage: int | None = None


def stage_for_length(
    length_mm: float,
    intervals: Sequence[StageInterval] = MEASURED_STAGE_INTERVALS,
) -> StageLookup:
    """All stages whose measured length interval contains ``length_mm``.

    Intervals are treated as lower-exclusive, upper-inclusive
    (min < L <= max): the measured ranges of consecutive stages share
    boundary values, and a larva exactly at the shared value is still in
    the earlier stage. When no interval contains the length, the result
    is empty and ``nearest_stage`` points at the closest interval
    (ties toward the earlier stage).
    """
    if not (math.isfinite(length_mm) and length_mm > 0):
        raise OutOfRange(f"length_mm must be finite and positive, got {length_mm}")
    stages = tuple(iv.stage for iv in intervals if iv.min_mm < length_mm <= iv.max_mm)
    if stages:
        return StageLookup(stages)
    nearest = min(
        intervals,
        key=lambda iv: (max(iv.min_mm - length_mm, length_mm - iv.max_mm, 0.0), iv.stage),
    )
    return StageLookup((), nearest.stage)


# --- observation CSV I/O ---


def load_observations_csv(text: str) -> list[GrowthObservation]:
    """Parse `age_days,length_mm[,stage]` CSV text into observations."""
    reader = csv.DictReader(io.StringIO(text))
    have = set(reader.fieldnames or ())
    missing = [c for c in ("age_days", "length_mm") if c not in have]
    if missing:
        raise MissingColumn(f"observation CSV lacks column(s): {', '.join(missing)}")
    observations = []
    for row_no, row in enumerate(reader, start=2):
        try:
            age = float(row["age_days"])
            length = float(row["length_mm"])
        except (TypeError, ValueError):
            raise MalformedLine(row_no, "age_days and length_mm must be numeric") from None
        observations.append(GrowthObservation(age, length))
    return observations


def bundled_stage_means() -> list[GrowthObservation]:
    """The packaged per-stage mean lengths (11 stages, ages 0-18 days)."""
    text = resources.files("larvaekit.data").joinpath("stage_mean_lengths.csv").read_text()
    return load_observations_csv(text)
