"""IsoFLOP profiles, log-log trend fits, and the compute-optimal frontier.

A profile collects, for one fine-tuning method, the best observed loss per
(budget bucket, model size) together with the winning hyperparameter. Budgets
are bucketed with a relative tolerance because logged FLOP drift slightly
around the nominal grid values.
"""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .arch import ModelArch, find_arch
from .errors import InsufficientDataError, ValidationError
from .runs import RunRecord, RunSet

DEFAULT_GROUPING_TOL = 0.05
_PARALLEL_SLOPE_EPS = 1e-12


def bucket_values(values, tolerance: float = DEFAULT_GROUPING_TOL, nominals=None):
    """Assign each value to a bucket nominal within the relative tolerance.

    With explicit nominals, each value maps to the nearest nominal (in log
    space) and values farther than the tolerance map to None. Otherwise
    buckets are grown greedily over the sorted values and each bucket's
    nominal is the geometric mean of its members.

    Returns a list of bucket nominals aligned with `values` (None = no match).
    """
    values = [float(v) for v in values]
    if any(v <= 0 for v in values):
        raise ValidationError("bucketed values must be positive")
    if nominals is not None:
        nominals = sorted(float(x) for x in nominals)
        out = []
        for v in values:
            nearest = min(nominals, key=lambda c: abs(math.log(v) - math.log(c)))
            out.append(nearest if abs(v - nearest) / nearest <= tolerance else None)
        return out

    order = sorted(range(len(values)), key=lambda i: values[i])
    groups: list[list[int]] = []
    anchor = None
    for i in order:
        if anchor is None or values[i] > anchor * (1.0 + tolerance):
            groups.append([i])
            anchor = values[i]
        else:
            groups[-1].append(i)
    out = [None] * len(values)
    for group in groups:
        nominal = math.exp(sum(math.log(values[i]) for i in group) / len(group))
        for i in group:
            out[i] = nominal
    return out


@dataclass(frozen=True)
class ProfilePoint:
    budget: float
    size: int
    loss: float
    hyper: float | int | None = None


@dataclass(frozen=True)
class IsoflopProfile:
    """Per-method best-loss surface over (budget, model size)."""

    method_kind: str
    points: tuple[ProfilePoint, ...]
    grouping_tolerance: float = DEFAULT_GROUPING_TOL
    warnings: tuple[str, ...] = ()

    def budgets(self) -> tuple[float, ...]:
        return tuple(sorted({p.budget for p in self.points}))

    def points_at(self, budget: float) -> tuple[ProfilePoint, ...]:
        return tuple(p for p in self.points if p.budget == budget)


def _method_hyper(record: RunRecord, registry) -> float | int | None:
    method = record.method
    if method.kind == "lora":
        return method.rank
    if method.kind == "freeze":
        arch = find_arch(record.model_name, registry) if registry is not None else None
        if arch is not None:
            return method.frozen_blocks / arch.n_layers
        return method.frozen_blocks
    return None


def build_profiles(
    runs: RunSet,
    method_kind: str,
    grouping_tolerance: float = DEFAULT_GROUPING_TOL,
    nominal_budgets=None,
    registry: tuple[ModelArch, ...] | None = None,
) -> IsoflopProfile:
    """Build the IsoFLOP profile of one method from raw runs.

    For every (budget bucket, size) the lowest loss over hyperparameter
    variants wins; ties prefer the smaller hyperparameter. Runs that match no
    bucket (only possible with explicit nominal_budgets) are excluded with a
    warning. For block freezing the recorded hyper is the frozen fraction
    when the architecture is resolvable, otherwise the raw block count.
    """
    records = [r for r in runs.records if r.method.kind == method_kind]
    if not records:
        raise InsufficientDataError(f"no runs with method kind {method_kind!r}")
    assignments = bucket_values(
        [r.flop for r in records], grouping_tolerance, nominals=nominal_budgets
    )
    warnings = []
    best: dict[tuple[float, int], tuple[float, float, RunRecord]] = {}
    for record, bucket in zip(records, assignments):
        if bucket is None:
            warnings.append(
                f"run ({record.model_name}, flop={record.flop:.4g}) matches no budget bucket "
                f"within {grouping_tolerance:.0%}; excluded"
            )
            continue
        hyper = _method_hyper(record, registry)
        rank_key = (record.final_loss, hyper if hyper is not None else 0.0)
        key = (bucket, record.n_total)
        if key not in best or rank_key < best[key][:2]:
            best[key] = (record.final_loss, rank_key[1], record)
    points = tuple(
        ProfilePoint(budget=budget, size=size, loss=loss, hyper=_method_hyper(rec, registry))
        for (budget, size), (loss, _, rec) in sorted(best.items())
    )
    return IsoflopProfile(
        method_kind=method_kind,
        points=points,
        grouping_tolerance=grouping_tolerance,
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Log-log line fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    """y = exp(intercept) * x^slope, fitted by least squares on (ln x, ln y)."""

    slope: float
    intercept: float
    domain: tuple[float, float]  # fitted ln(x) range
    r_squared: float | None = None

    def predict_ln(self, ln_x: float) -> float:
        return self.slope * ln_x + self.intercept

    def predict(self, x: float) -> float:
        return math.exp(self.predict_ln(math.log(x)))

    def extrapolates(self, x: float) -> bool:
        ln_x = math.log(x)
        return not (self.domain[0] <= ln_x <= self.domain[1])


def fit_power_law(xs, ys) -> PowerLawFit:
    """Least-squares line on (ln x, ln y); constant data gets slope 0, r^2 1."""
    ln_x = np.log(np.asarray(xs, dtype=float))
    ln_y = np.log(np.asarray(ys, dtype=float))
    if ln_x.size < 2:
        raise InsufficientDataError(f"need at least 2 points for a power-law fit, got {ln_x.size}")
    if np.all(ln_y == ln_y[0]):
        # Constant data: the least-squares line is exactly flat; bypass lstsq
        # so the slope is 0.0 rather than rounding noise.
        return PowerLawFit(
            slope=0.0, intercept=float(ln_y[0]),
            domain=(float(ln_x.min()), float(ln_x.max())), r_squared=1.0,
        )
    design = np.column_stack([ln_x, np.ones_like(ln_x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ln_y, rcond=None)
    residuals = ln_y - (slope * ln_x + intercept)
    ss_res = float(residuals @ residuals)
    ss_tot = float(np.sum((ln_y - ln_y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res < 1e-20 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return PowerLawFit(
        slope=float(slope),
        intercept=float(intercept),
        domain=(float(ln_x.min()), float(ln_x.max())),
        r_squared=r2,
    )


def optimal_size_fit(profile: IsoflopProfile) -> PowerLawFit:
    """Power-law trend of the loss-minimising model size against budget.

    Per budget the optimal size is the loss argmin over sizes, ties going to
    the smaller size.
    """
    budgets = profile.budgets()
    if len(budgets) < 2:
        raise InsufficientDataError(f"need at least 2 budgets, got {len(budgets)}")
    optimal = []
    for budget in budgets:
        candidates = profile.points_at(budget)
        if len(candidates) < 2:
            raise InsufficientDataError(
                f"budget {budget:.4g} has {len(candidates)} size(s); need at least 2"
            )
        winner = min(candidates, key=lambda p: (p.loss, p.size))
        optimal.append((budget, winner.size))
    return fit_power_law([b for b, _ in optimal], [n for _, n in optimal])


# ---------------------------------------------------------------------------
# Frontier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Crossover:
    budget: float
    method_before: str
    method_after: str


@dataclass(frozen=True)
class Frontier:
    """Per-method loss-vs-budget lines and the transitions of their lower envelope."""

    fits: dict
    crossovers: tuple[Crossover, ...] = ()

    def method_at(self, budget: float) -> str:
        ln_c = math.log(budget)
        return min(sorted(self.fits), key=lambda kind: (self.fits[kind].predict_ln(ln_c), kind))

    def predicted_loss(self, budget: float, method: str | None = None) -> float:
        kind = method if method is not None else self.method_at(budget)
        if kind not in self.fits:
            raise ValidationError(f"frontier has no fit for method {kind!r}")
        return self.fits[kind].predict(budget)

    def to_dict(self) -> dict:
        return {
            "fits": {
                kind: {
                    "slope": f.slope, "intercept": f.intercept,
                    "domain": list(f.domain), "r_squared": f.r_squared,
                }
                for kind, f in sorted(self.fits.items())
            },
            "crossovers": [
                {"budget": c.budget, "method_before": c.method_before, "method_after": c.method_after}
                for c in self.crossovers
            ],
        }


def frontier_from_dict(payload: dict) -> Frontier:
    fits = {
        kind: PowerLawFit(
            slope=entry["slope"], intercept=entry["intercept"],
            domain=tuple(entry["domain"]), r_squared=entry.get("r_squared"),
        )
        for kind, entry in payload["fits"].items()
    }
    crossovers = tuple(
        Crossover(c["budget"], c["method_before"], c["method_after"])
        for c in payload.get("crossovers", [])
    )
    return Frontier(fits=fits, crossovers=crossovers)


def crossover_budget(fit_a: PowerLawFit, fit_b: PowerLawFit) -> float | None:
    """Budget where two log-log lines intersect; None for (near-)parallel lines."""
    if abs(fit_a.slope - fit_b.slope) < _PARALLEL_SLOPE_EPS:
        return None
    ln_c = (fit_b.intercept - fit_a.intercept) / (fit_a.slope - fit_b.slope)
    return math.exp(ln_c)


def _envelope_crossovers(fits: dict) -> tuple[Crossover, ...]:
    kinds = sorted(fits)
    if len(kinds) < 2:
        return ()
    cuts = set()
    for i, a in enumerate(kinds):
        for b in kinds[i + 1:]:
            budget = crossover_budget(fits[a], fits[b])
            if budget is not None and math.isfinite(budget) and budget > 0:
                cuts.add(math.log(budget))
    cuts = sorted(cuts)
    if not cuts:
        return ()
    probes = [cuts[0] - 1.0]
    probes += [0.5 * (lo + hi) for lo, hi in zip(cuts, cuts[1:])]
    probes += [cuts[-1] + 1.0]

    def argmin_at(ln_c: float) -> str:
        return min(kinds, key=lambda kind: (fits[kind].predict_ln(ln_c), kind))

    crossovers = []
    previous = argmin_at(probes[0])
    for cut, probe in zip(cuts, probes[1:]):
        current = argmin_at(probe)
        if current != previous:
            crossovers.append(Crossover(budget=math.exp(cut), method_before=previous, method_after=current))
            previous = current
    return tuple(crossovers)


def frontier(profiles) -> Frontier:
    """Fit ln(best-over-sizes loss) vs ln(budget) per method and locate crossovers."""
    fits = {}
    for profile in profiles:
        budgets = profile.budgets()
        if len(budgets) < 2:
            continue
        best_losses = [min(p.loss for p in profile.points_at(b)) for b in budgets]
        fits[profile.method_kind] = fit_power_law(budgets, best_losses)
    if not fits:
        raise InsufficientDataError("no profile has at least 2 budgets; cannot fit a frontier")
    return Frontier(fits=fits, crossovers=_envelope_crossovers(fits))


# ---------------------------------------------------------------------------
# Data-constrained view
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DataConstrainedGroup:
    tokens: float
    winner: RunRecord


@dataclass(frozen=True)
class DataConstrainedProfile:
    groups: tuple[DataConstrainedGroup, ...]
    largest_model_always_wins: bool


def data_constrained_profile(
    runs: RunSet, grouping_tolerance: float = DEFAULT_GROUPING_TOL
) -> DataConstrainedProfile:
    """Best configuration per token-count bucket, regardless of budget.

    The summary flag reports whether, in every bucket, the winner is the
    largest model present in that bucket.
    """
    records = runs.records
    if not records:
        raise InsufficientDataError("no records")
    assignments = bucket_values([r.tokens for r in records], grouping_tolerance)
    by_bucket: dict[float, list[RunRecord]] = {}
    for record, bucket in zip(records, assignments):
        by_bucket.setdefault(bucket, []).append(record)
    groups = []
    always_largest = True
    for bucket in sorted(by_bucket):
        members = by_bucket[bucket]
        winner = min(members, key=lambda r: (r.final_loss, r.n_total))
        if winner.n_total != max(r.n_total for r in members):
            always_largest = False
        groups.append(DataConstrainedGroup(tokens=bucket, winner=winner))
    return DataConstrainedProfile(groups=tuple(groups), largest_model_always_wins=always_largest)


# ---------------------------------------------------------------------------
# Plot-data export
# ---------------------------------------------------------------------------

def profile_to_csv(profile: IsoflopProfile) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["budget", "size", "loss", "hyper"])
    for p in profile.points:
        writer.writerow([repr(p.budget), p.size, repr(p.loss), "" if p.hyper is None else p.hyper])
    return buffer.getvalue()


def profile_to_json(profile: IsoflopProfile) -> str:
    points = [
        {"budget": p.budget, "size": p.size, "loss": p.loss, "hyper": p.hyper}
        for p in profile.points
    ]
    return json.dumps({"method": profile.method_kind, "points": points}, sort_keys=True)


def frontier_to_json(front: Frontier) -> str:
    return json.dumps(front.to_dict(), sort_keys=True)
