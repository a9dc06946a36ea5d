"""Parametric loss formulas and robust curve fitting.

Two families are supported:

* chinchilla:  L(N, D)    = C + A / N^alpha + B / D^beta
* modified:    L(S, N, D) = C + (a_d * ln(D) + b_d) / N^alpha
                              + (a_s * (1 - S)^b_s + c_s) / D^beta

where N is the model parameter count, D the data quantity, and S the
trainable fraction of non-embedding parameters. Fitting minimises a Huber
penalty on log-space residuals with L-BFGS-B started from a grid of initial
values; positivity of C, alpha, beta (and A, B, b_s where required) is kept
by optimising the log of those coefficients.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import FitFailureError, InsufficientDataError, ValidationError
from .runs import RunRecord, RunSet

_POSITIVE_FLOOR = 1e-300


@dataclass(frozen=True)
class ChinchillaParams:
    """Coefficients of the baseline formula; all strictly positive."""

    irreducible_loss: float
    A: float
    B: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("irreducible_loss", "A", "B", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")

    def coefficients(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModifiedParams:
    """Coefficients of the trainable-fraction formula.

    b_s, alpha and beta must be positive; the remaining coefficients are
    unconstrained reals. A fit is only sensible when a_d*ln(D) + b_d stays
    positive over the data's D range (loss decreasing in N); that is a
    property of fitted values, not enforced here.
    """

    irreducible_loss: float
    a_d: float
    b_d: float
    a_s: float
    b_s: float
    c_s: float
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("b_s", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")

    def coefficients(self) -> dict:
        return asdict(self)


ScalingLawParams = ChinchillaParams | ModifiedParams


def params_from_dict(formula: str, coefficients: dict) -> ScalingLawParams:
    cls = {"chinchilla": ChinchillaParams, "modified": ModifiedParams}.get(formula)
    if cls is None:
        raise ValidationError(f"unknown formula {formula!r}")
    return cls(**coefficients)


def _as_arrays(*values):
    arrays = [np.asarray(v, dtype=float) for v in values]
    scalar = all(a.ndim == 0 for a in arrays)
    return arrays, scalar


def predict_chinchilla(params: ChinchillaParams, n_params, tokens):
    """Evaluate the baseline formula; scalars in, scalar out."""
    (n, d), scalar = _as_arrays(n_params, tokens)
    if np.any(n <= 0):
        raise ValidationError("n_params must be > 0")
    if np.any(d <= 0):
        raise ValidationError("tokens must be > 0")
    out = params.irreducible_loss + params.A * n ** -params.alpha + params.B * d ** -params.beta
    return float(out) if scalar else out


def predict_modified(params: ModifiedParams, trainable_fraction, n_params, tokens):
    """Evaluate the trainable-fraction formula; scalars in, scalar out."""
    (s, n, d), scalar = _as_arrays(trainable_fraction, n_params, tokens)
    if np.any((s < 0) | (s > 1)):
        raise ValidationError("trainable_fraction must lie in [0, 1]")
    if np.any(n <= 0):
        raise ValidationError("n_params must be > 0")
    if np.any(d <= 1):
        raise ValidationError("tokens must be > 1 (ln(D) must be positive)")
    size_term = (params.a_d * np.log(d) + params.b_d) * n ** -params.alpha
    sparsity = params.a_s * (1.0 - s) ** params.b_s + params.c_s
    out = params.irreducible_loss + size_term + sparsity * d ** -params.beta
    return float(out) if scalar else out


def predict(params: ScalingLawParams, n_params, tokens, trainable_fraction=None):
    """Dispatch on the parameter type; S is required for the modified formula."""
    if isinstance(params, ChinchillaParams):
        return predict_chinchilla(params, n_params, tokens)
    if trainable_fraction is None:
        raise ValidationError("the modified formula requires trainable_fraction")
    return predict_modified(params, trainable_fraction, n_params, tokens)


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitConfig:
    """Controls for the robust fit.

    init_grid, when given, is an explicit tuple of coefficient dicts used as
    optimizer starts; otherwise a data-scaled default grid is built.
    """

    huber_delta: float = 1e-3
    init_grid: tuple | None = None
    max_iterations: int = 1000
    convergence_tol: float = 1e-12
    residual_space: str = "log"
    split: str = "largest-model-holdout"
    data_measure: str = "auto"

    def __post_init__(self):
        if self.huber_delta <= 0:
            raise ValidationError(f"huber_delta must be > 0, got {self.huber_delta}")
        if self.residual_space not in ("log", "linear"):
            raise ValidationError(f"residual_space must be 'log' or 'linear', got {self.residual_space!r}")
        if self.split not in ("largest-model-holdout", "none"):
            raise ValidationError(f"split must be 'largest-model-holdout' or 'none', got {self.split!r}")
        if self.data_measure not in ("auto", "tokens", "steps"):
            raise ValidationError(f"data_measure must be auto|tokens|steps, got {self.data_measure!r}")

    def digest(self) -> str:
        payload = asdict(self)
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


@dataclass(frozen=True)
class FitReport:
    """Outcome of one fit: winning coefficients plus bookkeeping."""

    formula: str
    params: ScalingLawParams
    train_objective: float
    test_rmse_log: float | None
    n_train: int
    n_test: int
    init_used: dict
    converged: bool

    def to_dict(self, cfg: FitConfig | None = None) -> dict:
        return {
            "formula": self.formula,
            "coefficients": self.params.coefficients(),
            "fit_config_digest": (cfg or FitConfig()).digest(),
            "train_objective": self.train_objective,
            "test_rmse_log": self.test_rmse_log,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "init_used": self.init_used,
            "converged": self.converged,
        }


def huber(residuals, delta: float):
    """Huber penalty: quadratic within delta of zero, linear beyond."""
    r = np.asarray(residuals, dtype=float)
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def _huber_grad(residuals, delta: float):
    return np.clip(residuals, -delta, delta)


class _ChinchillaForm:
    formula = "chinchilla"
    names = ("irreducible_loss", "A", "B", "alpha", "beta")
    log_names = frozenset(names)  # every coefficient positive

    @staticmethod
    def predict_with_grads(coef: dict, n, d, s):
        c, a, b = coef["irreducible_loss"], coef["A"], coef["B"]
        alpha, beta = coef["alpha"], coef["beta"]
        n_term = a * n ** -alpha
        d_term = b * d ** -beta
        pred = c + n_term + d_term
        grads = {
            "irreducible_loss": np.ones_like(pred),
            "A": n_term / a,
            "B": d_term / b,
            "alpha": -n_term * np.log(n),
            "beta": -d_term * np.log(d),
        }
        return pred, grads

    @staticmethod
    def make(coef: dict) -> ChinchillaParams:
        return ChinchillaParams(**coef)


class _ModifiedForm:
    formula = "modified"
    names = ("irreducible_loss", "a_d", "b_d", "a_s", "b_s", "c_s", "alpha", "beta")
    log_names = frozenset({"irreducible_loss", "b_s", "alpha", "beta"})

    @staticmethod
    def predict_with_grads(coef: dict, n, d, s):
        c = coef["irreducible_loss"]
        a_d, b_d = coef["a_d"], coef["b_d"]
        a_s, b_s, c_s = coef["a_s"], coef["b_s"], coef["c_s"]
        alpha, beta = coef["alpha"], coef["beta"]
        log_d = np.log(d)
        n_pow = n ** -alpha
        d_pow = d ** -beta
        one_minus_s = 1.0 - s
        s_pow = one_minus_s ** b_s
        n_term = (a_d * log_d + b_d) * n_pow
        d_term = (a_s * s_pow + c_s) * d_pow
        pred = c + n_term + d_term
        # d((1-S)^b_s)/d(b_s) = (1-S)^b_s * ln(1-S); identically 0 at S = 1.
        with np.errstate(divide="ignore"):
            log_one_minus_s = np.where(one_minus_s > 0, np.log(np.maximum(one_minus_s, _POSITIVE_FLOOR)), 0.0)
        grads = {
            "irreducible_loss": np.ones_like(pred),
            "a_d": log_d * n_pow,
            "b_d": n_pow,
            "a_s": s_pow * d_pow,
            "b_s": a_s * s_pow * log_one_minus_s * d_pow,
            "c_s": d_pow,
            "alpha": -n_term * np.log(n),
            "beta": -d_term * np.log(d),
        }
        return pred, grads

    @staticmethod
    def make(coef: dict) -> ModifiedParams:
        return ModifiedParams(**coef)


_FORMS = {"chinchilla": _ChinchillaForm, "modified": _ModifiedForm}


def _pack(form, coef: dict) -> np.ndarray:
    theta = []
    for name in form.names:
        value = coef[name]
        theta.append(math.log(max(value, 1e-12)) if name in form.log_names else value)
    return np.array(theta, dtype=float)


def _unpack(form, theta: np.ndarray) -> dict:
    coef = {}
    for name, value in zip(form.names, theta):
        coef[name] = math.exp(value) if name in form.log_names else float(value)
    return coef


def objective_value_and_grad(
    formula: str, theta: np.ndarray, n, d, s, delta: float, residual_space: str, losses,
):
    """Huber objective over the records and its gradient w.r.t. the free vector.

    Free coordinates for positive-constrained coefficients are their logs, so
    the chain rule multiplies those gradient entries by the coefficient value.
    """
    form = _FORMS[formula]
    coef = _unpack(form, theta)
    pred, grads = form.predict_with_grads(coef, n, d, s)
    if residual_space == "log":
        pred_safe = np.maximum(pred, _POSITIVE_FLOOR)
        residuals = np.log(losses) - np.log(pred_safe)
        # Consistent with the clamp: gradient vanishes where pred <= floor.
        dresid_dpred = np.where(pred > _POSITIVE_FLOOR, -1.0 / pred_safe, 0.0)
    else:
        residuals = losses - pred
        dresid_dpred = -np.ones_like(pred)
    weights = _huber_grad(residuals, delta) * dresid_dpred
    value = float(np.sum(huber(residuals, delta)))
    grad = np.empty(len(form.names))
    for i, name in enumerate(form.names):
        g = float(np.sum(weights * grads[name]))
        if name in form.log_names:
            g *= coef[name]
        grad[i] = g
    if not np.isfinite(value):
        value = 1e30
        grad = np.zeros_like(grad)
    return value, np.nan_to_num(grad, nan=0.0, posinf=0.0, neginf=0.0)


def default_init_grid(formula: str, n, d, s, losses) -> tuple[dict, ...]:
    """Data-scaled grid of optimizer starts.

    Exponents sweep {0.1, 0.3, 0.5, 1.0}; the irreducible loss sweeps near-0,
    0.25*min(L) and 0.5*min(L); the remaining coefficients take {0.1, 1, 10}
    times a magnitude estimated from the data, with one shared multiplier per
    start so the grid stays tractable.
    """
    losses = np.asarray(losses, dtype=float)
    l_min = float(losses.min())
    spread = max(float(losses.max() - losses.min()), 0.05 * l_min, 1e-6)
    med_n = float(np.median(n))
    med_d = float(np.median(d))
    med_log_d = max(float(np.median(np.log(d))), 1.0)
    exponents = (0.1, 0.3, 0.5, 1.0)
    floors = (max(1e-3 * l_min, 1e-9), 0.25 * l_min, 0.5 * l_min)
    multipliers = (0.1, 1.0, 10.0)
    grid = []
    for alpha in exponents:
        for beta in exponents:
            scale_n = spread * med_n ** alpha
            scale_d = spread * med_d ** beta
            for c0 in floors:
                for m in multipliers:
                    if formula == "chinchilla":
                        grid.append({
                            "irreducible_loss": c0, "A": m * scale_n, "B": m * scale_d,
                            "alpha": alpha, "beta": beta,
                        })
                    else:
                        for b_s in (0.1, 1.0, 10.0):
                            grid.append({
                                "irreducible_loss": c0,
                                "a_d": 0.5 * m * scale_n / med_log_d,
                                "b_d": 0.5 * m * scale_n,
                                "a_s": 0.5 * m * scale_d,
                                "b_s": b_s,
                                "c_s": 0.5 * m * scale_d,
                                "alpha": alpha, "beta": beta,
                            })
    return tuple(grid)


def _split_records(records: tuple[RunRecord, ...], split: str):
    # The largest backbone is identified by n_nonembed: unlike n_total it is
    # unaffected by adapter parameters, so every method's runs on the biggest
    # model land in the test set together.
    if split == "none":
        return records, ()
    largest = max(r.n_nonembed for r in records)
    train = tuple(r for r in records if r.n_nonembed != largest)
    test = tuple(r for r in records if r.n_nonembed == largest)
    if not train:
        raise InsufficientDataError("largest-model holdout leaves no training records")
    return train, test


def _data_arrays(records, data_measure: str):
    if data_measure == "auto":
        measures = {r.data_measure for r in records}
        if len(measures) > 1:
            raise ValidationError(f"records mix data measures {sorted(measures)}; set data_measure explicitly")
        data_measure = measures.pop()
    if data_measure == "steps":
        if any(r.steps is None for r in records):
            raise ValidationError("data_measure 'steps' requires every record to carry steps")
        d = np.array([float(r.steps) for r in records])
    else:
        d = np.array([r.tokens for r in records])
    n = np.array([float(r.n_total) for r in records])
    s = np.array([r.trainable_fraction for r in records])
    losses = np.array([r.final_loss for r in records])
    return n, d, s, losses


def fit(
    runs: RunSet,
    formula: str,
    cfg: FitConfig = FitConfig(),
    method: str | None = None,
) -> FitReport:
    """Fit a scaling-law formula to a run set.

    Args:
        runs: validated run records (losses positive by construction).
        formula: "chinchilla" or "modified".
        cfg: fit controls; see FitConfig.
        method: optional method kind ("full", "lora", ...) to fit on a single
            method's records; None pools everything.

    Returns:
        FitReport with the winning coefficients. The winner is the grid start
        whose optimised objective is lowest, ties broken by lexicographic
        coefficient order, and the reported objective is re-evaluated at the
        returned coefficients.

    Raises:
        InsufficientDataError: fewer than coefficient-count + 2 training rows.
        FitFailureError: every start produced a non-finite objective.
    """
    form = _FORMS.get(formula)
    if form is None:
        raise ValidationError(f"unknown formula {formula!r}")
    records = runs.records if method is None else tuple(r for r in runs.records if r.method.kind == method)
    train, test = _split_records(records, cfg.split)
    if len(train) < len(form.names) + 2:
        raise InsufficientDataError(
            f"need at least {len(form.names) + 2} training records for {formula}, got {len(train)}"
        )
    n, d, s, losses = _data_arrays(train, cfg.data_measure)
    if formula == "modified" and np.any(d <= 1):
        raise ValidationError("modified formula requires every data quantity > 1")

    grid = cfg.init_grid or default_init_grid(formula, n, d, s, losses)
    bounds = [(-45.0, 45.0) if name in form.log_names else (-1e15, 1e15) for name in form.names]

    def fun(theta):
        return objective_value_and_grad(formula, theta, n, d, s, cfg.huber_delta, cfg.residual_space, losses)

    best = None  # (objective, coef_tuple, coef, init, converged)
    for init in grid:
        theta0 = _pack(form, init)
        f0, _ = fun(theta0)
        result = minimize(
            fun, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": cfg.max_iterations, "ftol": 1e-15, "gtol": cfg.convergence_tol},
        )
        f_final, _ = fun(result.x)
        theta, value, converged = (result.x, f_final, bool(result.success))
        if f0 < value:  # never return worse than the start itself
            theta, value, converged = theta0, f0, False
        if not np.isfinite(value) or value >= 1e30:
            continue
        coef = _unpack(form, theta)
        key = (value, tuple(coef[name] for name in form.names))
        if best is None or key < best[0]:
            best = (key, coef, dict(init), converged)
    if best is None:
        tried = ", ".join(json.dumps(g, sort_keys=True) for g in grid[:5])
        raise FitFailureError(f"all {len(grid)} optimizer starts diverged; first inits tried: {tried}")

    _, coef, init_used, converged = best
    params = form.make(coef)
    train_objective, _ = fun(_pack(form, coef))

    test_rmse = None
    if test:
        tn, td, ts, tl = _data_arrays(test, cfg.data_measure)
        pred = predict(params, tn, td, trainable_fraction=ts if formula == "modified" else None)
        test_rmse = float(np.sqrt(np.mean((np.log(tl) - np.log(pred)) ** 2)))

    return FitReport(
        formula=formula,
        params=params,
        train_objective=float(train_objective),
        test_rmse_log=test_rmse,
        n_train=len(train),
        n_test=len(test),
        init_used=init_used,
        converged=converged,
    )


def fit_per_method(runs: RunSet, formula: str, cfg: FitConfig = FitConfig()) -> dict:
    """One fit per method kind present in the runs (the default analysis mode)."""
    kinds = sorted({r.method.kind for r in runs.records})
    return {kind: fit(runs, formula, cfg, method=kind) for kind in kinds}


def serialize_fit(report: FitReport, cfg: FitConfig | None = None) -> str:
    return json.dumps(report.to_dict(cfg), sort_keys=True)


def load_params(path) -> ScalingLawParams:
    """Read back coefficients from a serialized fit report."""
    payload = json.loads(open(path, "r", encoding="utf-8").read())
    return params_from_dict(payload["formula"], payload["coefficients"])
