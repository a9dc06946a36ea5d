"""Command-line surface tying the analysis modules together.

Results go to stdout, diagnostics to stderr. Exit codes: 0 success, 1
validation or data error, 2 usage error. Output is deterministic for fixed
inputs: JSON is emitted with sorted keys and no timestamps, provenance is
carried as content digests.
"""

import argparse
import difflib
import json
import sys
from pathlib import Path

from . import costmodel, isoflop, recipe, runs as runs_mod, scalinglaw, synth as synth_mod
from .arch import builtin_registry, find_arch, load_arch_file, pythia_registry
from .errors import (
    FitFailureError, FormatError, InsufficientDataError, UnsupportedModeError, ValidationError,
)

_HANDLED_ERRORS = (
    ValidationError, FormatError, InsufficientDataError, FitFailureError,
    UnsupportedModeError, FileNotFoundError, json.JSONDecodeError, KeyError,
)


class _Parser(argparse.ArgumentParser):
    """argparse with 'did you mean' suggestions on unknown flags."""

    def error(self, message):
        if "unrecognized arguments" in message:
            unknown = message.split(":", 1)[1].strip().split()
            options = sorted(self._collect_option_strings())
            for flag in unknown:
                hints = difflib.get_close_matches(flag, options, n=1)
                if hints:
                    message += f" (did you mean {hints[0]}?)"
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")

    def _collect_option_strings(self):
        found = set(self._option_string_actions)
        for action in self._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sub in action.choices.values():
                    found.update(sub._option_string_actions)
        return found


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    elif fmt == "csv":
        keys = sorted(payload)
        sys.stdout.write(",".join(keys) + "\n")
        sys.stdout.write(",".join(str(payload[k]) for k in keys) + "\n")
    else:
        for key in sorted(payload):
            sys.stdout.write(f"{key}: {payload[key]}\n")


def _write_or_print(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        print(f"wrote {out}", file=sys.stderr)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _resolve_arch(spec: str):
    if Path(spec).exists():
        archs = load_arch_file(spec)
        return archs[0]
    arch = find_arch(spec)
    if arch is None:
        raise ValidationError(f"unknown architecture {spec!r}; give a registry name or a JSON file")
    return arch


def _load_runs(args) -> runs_mod.RunSet:
    options = runs_mod.SchemaOptions.from_file(args.schema) if getattr(args, "schema", None) else None
    loaded = runs_mod.load_runs(args.runs, options=options)
    for line in loaded.diagnostics:
        print(f"rejected {line}", file=sys.stderr)
    for line in loaded.warnings:
        print(f"warning {line}", file=sys.stderr)
    return loaded


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_flops(args) -> int:
    arch = _resolve_arch(args.arch)
    method = costmodel.parse_method(args.method)
    counts = costmodel.param_counts(arch, method)
    flop = costmodel.flop_cost(counts, args.tokens)
    _emit({
        "arch": arch.name, "method": costmodel.method_label(method), "tokens": args.tokens,
        "n_forward": counts.n_forward, "n_backward": counts.n_backward,
        "n_updated": counts.n_updated, "flop": flop,
    }, args.format)
    return 0


def _cmd_tokens(args) -> int:
    arch = _resolve_arch(args.arch)
    method = costmodel.parse_method(args.method)
    counts = costmodel.param_counts(arch, method)
    tokens = costmodel.tokens_for_budget(counts, args.budget)
    _emit({
        "arch": arch.name, "method": costmodel.method_label(method),
        "budget": args.budget, "tokens": tokens,
    }, args.format)
    return 0


def _cmd_ingest(args) -> int:
    loaded = _load_runs(args)
    if args.out:
        runs_mod.save_runs(loaded, args.out)
        print(f"wrote {args.out}", file=sys.stderr)
    _emit({
        "accepted": len(loaded.records), "rejected": len(loaded.diagnostics),
        "warnings": len(loaded.warnings), "sha256": loaded.provenance.sha256,
    }, args.format)
    return 0


def _cmd_fit(args) -> int:
    loaded = _load_runs(args)
    cfg = scalinglaw.FitConfig(
        huber_delta=args.delta,
        split="largest-model-holdout" if args.holdout == "largest" else "none",
    )
    report = scalinglaw.fit(loaded, args.formula, cfg, method=args.method)
    text = scalinglaw.serialize_fit(report, cfg)
    _write_or_print(text, args.out)
    return 0


def _cmd_predict(args) -> int:
    params = scalinglaw.load_params(args.params)
    if isinstance(params, scalinglaw.ModifiedParams):
        if args.s is None:
            raise ValidationError("the modified formula requires --s (trainable fraction)")
        loss = scalinglaw.predict_modified(params, args.s, args.n, args.d)
    else:
        loss = scalinglaw.predict_chinchilla(params, args.n, args.d)
    _emit({"loss": loss, "n": args.n, "d": args.d, "s": args.s}, args.format)
    return 0


def _cmd_isoflop(args) -> int:
    loaded = _load_runs(args)
    profile = isoflop.build_profiles(loaded, args.method, registry=builtin_registry())
    for line in profile.warnings:
        print(f"warning {line}", file=sys.stderr)
    render = isoflop.profile_to_json if args.format == "json" else isoflop.profile_to_csv
    _write_or_print(render(profile), args.out)
    return 0


def _cmd_frontier(args) -> int:
    loaded = _load_runs(args)
    kinds = sorted({r.method.kind for r in loaded.records})
    profiles = [isoflop.build_profiles(loaded, kind, registry=builtin_registry()) for kind in kinds]
    front = isoflop.frontier(profiles)
    _write_or_print(isoflop.frontier_to_json(front), args.out)
    return 0


def _cmd_plan(args) -> int:
    artifacts = recipe.load_artifacts(args.artifacts) if args.artifacts else recipe.default_artifacts()
    planner = recipe.plan_freeze if args.mode == "freeze" else recipe.plan
    result = planner(args.budget, artifacts)
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    _write_or_print(result.to_json(), args.out)
    return 0


def _cmd_corr(args) -> int:
    loaded = _load_runs(args)
    rho = runs_mod.spearman_loss_vs_score(loaded)
    scored = sum(1 for r in loaded.records if r.mteb_score is not None)
    _emit({"spearman": rho, "n_scored": scored}, args.format)
    return 0


def _parse_synth_methods(text: str) -> tuple:
    methods = []
    for token in text.split(","):
        token = token.strip()
        if token.startswith("freeze@"):
            methods.append(synth_mod.FreezeFraction(float(token.split("@", 1)[1])))
        else:
            methods.append(costmodel.parse_method(token))
    return tuple(methods)


def _cmd_synth(args) -> int:
    truth = scalinglaw.load_params(args.truth)
    archs = load_arch_file(args.archs) if args.archs else pythia_registry()
    budgets = tuple(float(b) for b in args.budgets.split(",")) if args.budgets else recipe.PUBLISHED_BUDGETS
    methods = _parse_synth_methods(args.methods)
    spec = synth_mod.SynthSpec(
        truth=truth, budgets=budgets, archs=tuple(archs), methods=methods,
        noise_sigma=args.sigma, seed=args.seed,
    )
    generated = synth_mod.generate(spec)
    for line in generated.warnings:
        print(f"warning {line}", file=sys.stderr)
    runs_mod.save_runs(generated, args.out)
    print(f"wrote {args.out} ({len(generated.records)} records)", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="embscale", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text, formats=("json", "csv", "table"), default="table"):
        sub = subs.add_parser(name, help=help_text)
        sub.set_defaults(handler=handler)
        if formats:
            sub.add_argument("--format", choices=formats, default=default)
        return sub

    sub = add("flops", _cmd_flops, "training cost of a (model, method, tokens) triple")
    sub.add_argument("--arch", required=True, help="registry name or descriptor JSON file")
    sub.add_argument("--method", required=True, help="full | freeze:<k> | lora:<rank> | bias")
    sub.add_argument("--tokens", required=True, type=float)

    sub = add("tokens", _cmd_tokens, "data quantity a budget affords")
    sub.add_argument("--arch", required=True)
    sub.add_argument("--method", required=True)
    sub.add_argument("--budget", required=True, type=float)

    sub = add("ingest", _cmd_ingest, "validate a run log and optionally write canonical JSON lines")
    sub.add_argument("--runs", required=True)
    sub.add_argument("--schema", help="JSON file with a column_map for foreign layouts")
    sub.add_argument("--out", help="write the accepted records as JSON lines")

    sub = add("fit", _cmd_fit, "fit a scaling-law formula to a run log (JSON report)", formats=None)
    sub.add_argument("--runs", required=True)
    sub.add_argument("--formula", required=True, choices=("chinchilla", "modified"))
    sub.add_argument("--delta", type=float, default=1e-3, help="huber delta (default 0.001)")
    sub.add_argument("--holdout", choices=("largest", "none"), default="largest")
    sub.add_argument("--method", help="fit a single method kind (full|freeze|lora|bias)")
    sub.add_argument("--schema")
    sub.add_argument("--out", help="write the fit report JSON here")

    sub = add("predict", _cmd_predict, "evaluate a fitted formula at (N, D[, S])")
    sub.add_argument("--params", required=True, help="fit report JSON from `fit`")
    sub.add_argument("--n", required=True, type=float)
    sub.add_argument("--d", required=True, type=float)
    sub.add_argument("--s", type=float)

    sub = add("isoflop", _cmd_isoflop, "per-(budget, size) best-loss profile as plot data",
              formats=("csv", "json"), default="csv")
    sub.add_argument("--runs", required=True)
    sub.add_argument("--method", required=True, choices=("full", "freeze", "lora", "bias"))
    sub.add_argument("--schema")
    sub.add_argument("--out")

    sub = add("frontier", _cmd_frontier, "per-method loss trends and crossovers (JSON)", formats=None)
    sub.add_argument("--runs", required=True)
    sub.add_argument("--schema")
    sub.add_argument("--out")

    sub = add("plan", _cmd_plan, "compute-optimal configuration for a budget (JSON)", formats=None)
    sub.add_argument("--budget", required=True, type=float)
    sub.add_argument("--artifacts", help="planner artifacts JSON; defaults to built-in constants")
    sub.add_argument("--mode", choices=("optimal", "freeze"), default="optimal")
    sub.add_argument("--out")

    sub = add("corr", _cmd_corr, "rank correlation of loss vs downstream score")
    sub.add_argument("--runs", required=True)
    sub.add_argument("--schema")

    sub = add("synth", _cmd_synth, "generate a synthetic run log from a truth formula", formats=None)
    sub.add_argument("--truth", required=True, help="fit report JSON holding the truth coefficients")
    sub.add_argument("--sigma", type=float, default=0.0)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.add_argument("--budgets", help="comma-separated FLOP budgets (default: the published six)")
    sub.add_argument("--archs", help="registry JSON file (default: the Pythia suite)")
    sub.add_argument(
        "--methods",
        default="full,bias,lora:8,lora:32,lora:128,lora:512,freeze@0.25,freeze@0.5,freeze@0.75",
        help="comma-separated methods; freeze@<f> freezes that fraction of blocks per model",
    )

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _HANDLED_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
