"""Experiment run-log ingestion, validation, persistence, and rank correlation.

Canonical storage is JSON-lines with an explicit schema_version field; CSV is
accepted on input only. Rows that violate invariants are rejected with
line-numbered diagnostics rather than aborting the whole load.
"""

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import costmodel
from .arch import ModelArch, builtin_registry, find_arch
from .costmodel import FineTuneMethod, FullFineTune, method_label, parse_method
from .errors import FormatError, InsufficientDataError, ValidationError

SCHEMA_VERSION = 1

# Required CSV header columns; method_hyper may be folded into method as
# "lora:<rank>" / "freeze:<k>". data_measure and replicate are optional extras.
CSV_COLUMNS = (
    "model_name", "n_total", "n_nonembed", "method", "method_hyper",
    "trainable_fraction", "tokens", "steps", "batch_size", "context_len",
    "flop", "final_loss", "mteb_score",
)

_JSON_FIELDS = (
    "model_name", "n_total", "n_nonembed", "method", "trainable_fraction",
    "tokens", "steps", "batch_size", "context_len", "flop", "final_loss",
    "mteb_score", "data_measure", "replicate",
)


@dataclass(frozen=True)
class RunRecord:
    """One fine-tuning experiment outcome."""

    model_name: str
    n_total: int
    n_nonembed: int
    method: FineTuneMethod
    trainable_fraction: float
    tokens: float
    flop: float
    final_loss: float
    steps: int | None = None
    batch_size: int | None = None
    context_len: int | None = None
    mteb_score: float | None = None
    data_measure: str = "tokens"
    replicate: int | None = None

    def to_dict(self) -> dict:
        out = {name: getattr(self, name) for name in _JSON_FIELDS}
        out["method"] = method_label(self.method)
        out["schema_version"] = SCHEMA_VERSION
        return out


@dataclass(frozen=True)
class Provenance:
    source: str
    sha256: str
    schema_version: int = SCHEMA_VERSION


@dataclass(frozen=True)
class RunSet:
    """Validated, immutable collection of run records."""

    records: tuple[RunRecord, ...]
    provenance: Provenance
    diagnostics: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def filter_method(self, kind: str) -> "RunSet":
        kept = tuple(r for r in self.records if r.method.kind == kind)
        return replace(self, records=kept)


@dataclass(frozen=True)
class SchemaOptions:
    """Adapter options for externally produced logs."""

    column_map: dict = field(default_factory=dict)
    flop_rel_tol: float = 1e-6

    @classmethod
    def from_file(cls, path: str | Path) -> "SchemaOptions":
        payload = json.loads(Path(path).read_text())
        return cls(
            column_map=dict(payload.get("column_map", {})),
            flop_rel_tol=float(payload.get("flop_rel_tol", 1e-6)),
        )


class _RowError(Exception):
    pass


def _opt_float(fields: dict, key: str) -> float | None:
    value = fields.get(key)
    if value is None or value == "":
        return None
    try:
        return float(value)
    except (TypeError, ValueError):
        raise _RowError(f"{key} must be numeric, got {value!r}") from None


def _opt_int(fields: dict, key: str) -> int | None:
    value = _opt_float(fields, key)
    return None if value is None else int(round(value))


def _req_float(fields: dict, key: str) -> float:
    value = _opt_float(fields, key)
    if value is None:
        raise _RowError(f"missing required field {key}")
    return value


def _build_record(
    fields: dict,
    registry: tuple[ModelArch, ...],
    options: SchemaOptions,
) -> tuple[RunRecord, str | None]:
    """Validate one row of canonical-keyed fields; returns (record, warning)."""
    model_name = str(fields.get("model_name") or "").strip()
    if not model_name:
        raise _RowError("missing required field model_name")

    method_text = str(fields.get("method") or "").strip()
    if not method_text:
        raise _RowError("missing required field method")
    try:
        method = parse_method(method_text, fields.get("method_hyper"))
    except ValidationError as exc:
        raise _RowError(str(exc)) from None

    n_total = _opt_int(fields, "n_total")
    n_nonembed = _opt_int(fields, "n_nonembed")
    if n_total is None or n_total < 1:
        raise _RowError(f"n_total must be a positive count, got {fields.get('n_total')!r}")
    if n_nonembed is None or n_nonembed < 1:
        raise _RowError(f"n_nonembed must be a positive count, got {fields.get('n_nonembed')!r}")

    tokens = _req_float(fields, "tokens")
    if tokens <= 0:
        raise _RowError(f"tokens must be positive, got {tokens}")

    final_loss = _req_float(fields, "final_loss")
    if final_loss <= 0:
        raise _RowError(f"final_loss must be positive, got {final_loss}")

    mteb_score = _opt_float(fields, "mteb_score")
    if mteb_score is not None and not 0.0 <= mteb_score <= 1.0:
        raise _RowError(f"mteb_score must lie in [0, 1], got {mteb_score}")

    data_measure = str(fields.get("data_measure") or "tokens").strip()
    if data_measure not in ("tokens", "steps"):
        raise _RowError(f"data_measure must be 'tokens' or 'steps', got {data_measure!r}")

    arch = find_arch(model_name, registry)
    expected_flop = None
    if arch is not None:
        try:
            counts = costmodel.param_counts(arch, method)
            expected_flop = costmodel.flop_cost(counts, tokens)
        except ValidationError as exc:
            raise _RowError(f"method invalid for architecture {model_name}: {exc}") from None
    else:
        counts = None

    warning = None
    flop = _opt_float(fields, "flop")
    if flop is None:
        if expected_flop is not None:
            flop = expected_flop
        elif isinstance(method, FullFineTune):
            flop = 6.0 * n_nonembed * tokens
        else:
            raise _RowError(
                "flop missing and not recomputable (unknown architecture "
                f"{model_name!r} with method {method_label(method)})"
            )
    else:
        if flop <= 0:
            raise _RowError(f"flop must be positive, got {flop}")
        if expected_flop is not None:
            if abs(flop - expected_flop) / flop >= options.flop_rel_tol:
                raise _RowError(
                    f"flop inconsistent with cost model: logged {flop:.6e}, "
                    f"expected {expected_flop:.6e}"
                )
        else:
            warning = f"flop unverified (architecture {model_name!r} not in registry)"

    fraction = _opt_float(fields, "trainable_fraction")
    if fraction is None:
        if counts is not None:
            fraction = counts.trainable_fraction
        elif isinstance(method, FullFineTune):
            fraction = 1.0
        else:
            raise _RowError(
                f"trainable_fraction missing and not derivable for architecture {model_name!r}"
            )
    if not 0.0 <= fraction <= 1.0:
        raise _RowError(f"trainable_fraction must lie in [0, 1], got {fraction}")

    record = RunRecord(
        model_name=model_name,
        n_total=n_total,
        n_nonembed=n_nonembed,
        method=method,
        trainable_fraction=fraction,
        tokens=tokens,
        flop=flop,
        final_loss=final_loss,
        steps=_opt_int(fields, "steps"),
        batch_size=_opt_int(fields, "batch_size"),
        context_len=_opt_int(fields, "context_len"),
        mteb_score=mteb_score,
        data_measure=data_measure,
        replicate=_opt_int(fields, "replicate"),
    )
    return record, warning


def _iter_csv(raw: bytes):
    text = raw.decode("utf-8")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise FormatError("CSV file has no header row", byte_offset=0)
    for row_index, row in enumerate(reader, start=2):  # header is line 1
        yield row_index, {k: v for k, v in row.items() if k is not None}


def _iter_jsonl(raw: bytes):
    offset = 0
    for line_index, line in enumerate(raw.splitlines(keepends=True), start=1):
        text = line.decode("utf-8")
        stripped = text.strip()
        if stripped:
            try:
                payload = json.loads(stripped)
            except json.JSONDecodeError as exc:
                leading = len(text) - len(text.lstrip())
                inside = len(stripped[: exc.pos].encode("utf-8"))
                raise FormatError(
                    f"line {line_index}: {exc.msg}", byte_offset=offset + leading + inside
                ) from exc
            if not isinstance(payload, dict):
                raise FormatError(f"line {line_index}: expected a JSON object", byte_offset=offset)
            yield line_index, payload
        offset += len(line)


def load_runs(
    path: str | Path,
    options: SchemaOptions | None = None,
    registry: tuple[ModelArch, ...] | None = None,
) -> RunSet:
    """Load and validate a CSV or JSON-lines run log.

    Args:
        path: file to read; .csv is parsed as CSV, anything else as JSON lines.
        options: column remapping and tolerance overrides.
        registry: architecture descriptors used to verify or recompute flop;
            defaults to the bundled registry.

    Returns:
        RunSet of accepted records; rejected rows appear in `diagnostics`
        and soft issues (e.g. unverifiable flop) in `warnings`.

    Raises:
        FormatError: the file cannot be parsed at all.
        InsufficientDataError: every row was rejected.
    """
    options = options or SchemaOptions()
    registry = registry if registry is not None else builtin_registry()
    path = Path(path)
    raw = path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()

    is_csv = path.suffix.lower() == ".csv" or (
        path.suffix.lower() not in (".jsonl", ".ndjson", ".json") and not raw.lstrip()[:1] == b"{"
    )
    rows = _iter_csv(raw) if is_csv else _iter_jsonl(raw)

    records: list[RunRecord] = []
    diagnostics: list[str] = []
    warnings: list[str] = []
    seen: dict[tuple, int] = {}
    for line_no, fields in rows:
        if options.column_map:
            fields = {options.column_map.get(k, k): v for k, v in fields.items()}
        try:
            record, warning = _build_record(fields, registry, options)
        except _RowError as exc:
            diagnostics.append(f"line {line_no}: {exc}")
            continue
        key = (record.model_name, method_label(record.method), repr(record.flop), record.replicate)
        if key in seen:
            diagnostics.append(
                f"line {line_no}: duplicate of line {seen[key]} "
                f"(model_name, method, flop, replicate all equal); add a replicate index"
            )
            continue
        seen[key] = line_no
        if warning:
            warnings.append(f"line {line_no}: {warning}")
        records.append(record)

    if not records:
        detail = "; ".join(diagnostics[:5]) or "file contained no rows"
        raise InsufficientDataError(f"no valid records in {path.name}: {detail}")
    return RunSet(
        records=tuple(records),
        provenance=Provenance(source=str(path), sha256=digest),
        diagnostics=tuple(diagnostics),
        warnings=tuple(warnings),
    )


def save_runs(runs: RunSet | tuple[RunRecord, ...] | list, path: str | Path) -> None:
    """Persist records as canonical JSON lines (stable key order)."""
    records = runs.records if isinstance(runs, RunSet) else tuple(runs)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), sort_keys=True))
            handle.write("\n")


# ---------------------------------------------------------------------------
# Rank correlation
# ---------------------------------------------------------------------------

def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks on ties.

    Perfectly monotone inputs return exactly +-1.0 (detected through the
    Cauchy-Schwarz equality on the centred ranks).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValidationError(f"inputs must be equal-length 1-d arrays, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise InsufficientDataError(f"need at least 3 pairs for a rank correlation, got {x.size}")
    a = rankdata(x)
    b = rankdata(y)
    a -= a.mean()
    b -= b.mean()
    num = float(a @ b)
    denom_a = float(a @ a)
    denom_b = float(b @ b)
    if denom_a == 0.0 or denom_b == 0.0:
        raise ValidationError("rank correlation undefined for a constant input")
    if num * num == denom_a * denom_b:
        return 1.0 if num > 0 else -1.0
    return num / math.sqrt(denom_a * denom_b)


def spearman_loss_vs_score(runs: RunSet) -> float:
    """Rank correlation between final contrastive loss and the downstream score."""
    scored = [r for r in runs.records if r.mteb_score is not None]
    if len(scored) < 3:
        raise InsufficientDataError(
            f"need at least 3 records with mteb_score, got {len(scored)}"
        )
    losses = [r.final_loss for r in scored]
    scores = [r.mteb_score for r in scored]
    return spearman(losses, scores)
