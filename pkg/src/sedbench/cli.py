"""Command-line entry point: ``sedbench {generate,evaluate,analyze,validate-bank}``.

Exit codes: 0 success, 2 configuration error, 3 bank/profile validation
error, 4 annotation parse error, 5 score-table/report schema mismatch.

Every flag can also be given in a JSON file passed with ``--config``
(keys are the long flag names with dashes or underscores); flags on the
command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import (
    EVENT_FACTORS,
    SUITE_FACTORS,
    BreakdownError,
    BreakdownSpec,
    SchemaError,
    breakdown,
    breakdown_csv,
    breakdown_svg,
    diff_csv,
    diff_table,
    group_csv,
    group_mean,
    precision_recall_export,
    read_score_table,
    suite_breakdown,
    suite_breakdown_csv,
    suite_breakdown_svg,
)
from .bank import BankError, load_bank
from .metrics import AnnotationError, AnnotationSet, MetricConfig, ScoreReport, evaluate
from .suites import (
    GRID_NAMES,
    LONG_CLIPS,
    METADATA,
    ONSET_CLIPS,
    ONSET_WINDOWS,
    REF_CLIPS,
    SINGLE_CLIPS,
    SUITE_NAMES,
    SuiteError,
    build_60s,
    build_condition_grid,
    build_onset_variants,
    build_ref,
    build_single,
    read_manifest,
    write_suite,
)
from .synth import ProfileError, SilentSourceError, load_profile
from .wavio import FLOAT32, PCM16

log = logging.getLogger("sedbench")

EXIT_OK, EXIT_CONFIG, EXIT_BANK, EXIT_PARSE, EXIT_SCHEMA = 0, 2, 3, 4, 5
SUITE_GROUPS = {
    "onset": tuple(ONSET_WINDOWS),
    "grid": GRID_NAMES,
    "all": SUITE_NAMES,
}
DEFAULT_COUNTS = {"ref": REF_CLIPS, "60s": LONG_CLIPS, "onset": ONSET_CLIPS, "single": SINGLE_CLIPS}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sedbench", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file with default values for any flag")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = argparse.SUPPRESS

    gen = sub.add_parser("generate", help="build evaluation suites", argument_default=s)
    gen.add_argument("--bank", help="source bank manifest (JSON)")
    gen.add_argument("--profile", help="generation profile (JSON); default: bundled profile")
    gen.add_argument("--seed", type=int, help="master seed (required)")
    gen.add_argument("--out", help="output directory")
    gen.add_argument("--suite", action="append",
                     help=f"suite to build; repeatable. One of {', '.join(SUITE_NAMES)}, onset, grid, all")
    gen.add_argument("--n", type=int, help="clip count for every selected protocol")
    gen.add_argument("--scale", type=int, help="divide the protocol clip counts by this factor")
    gen.add_argument("--workers", type=int, help="worker threads (default 1)")
    gen.add_argument("--encoding", choices=(FLOAT32, PCM16))
    gen.add_argument("--max-non-targets", type=int, help="upper bound of non-target events per clip (default 3)")
    gen.add_argument("--force", action="store_true", help="replace existing suites")
    gen.add_argument("--no-reverb-renormalize", action="store_true",
                     help="let reverberation change event levels instead of restoring the dry energy")

    ev = sub.add_parser("evaluate", help="score predictions against a suite", argument_default=s)
    ev.add_argument("--reference", help="suite directory or reference TSV")
    ev.add_argument("--predictions", help="predictions TSV")
    ev.add_argument("--out", help="directory for <name>.json / <name>.txt")
    ev.add_argument("--name", help="report file stem (default: report)")
    ev.add_argument("--vocabulary", help="comma-separated class list (default: suite vocabulary)")
    ev.add_argument("--onset-collar", type=float)
    ev.add_argument("--offset-collar-min", type=float)
    ev.add_argument("--offset-collar-pct", type=float)
    ev.add_argument("--ignore-unknown-labels", action="store_true")

    an = sub.add_parser("analyze", help="difference tables, grouped means, breakdowns, P/R export",
                        argument_default=s)
    an.add_argument("--out", help="output directory")
    an.add_argument("--table", help="score table CSV (system,tags...,suites...)")
    an.add_argument("--diff", nargs=2, metavar=("A", "B"), help="add column B - A")
    an.add_argument("--group", help="comma-separated tag(s) to average over")
    an.add_argument("--reports", nargs="+", metavar="SYSTEM=REPORT.json", help="reports for the P/R export")
    an.add_argument("--breakdown", choices=EVENT_FACTORS + SUITE_FACTORS)
    an.add_argument("--edges", help="comma-separated bin edges for duration/onset breakdowns")
    an.add_argument("--reference", help="suite directory or reference TSV (duration/onset breakdowns)")
    an.add_argument("--predictions", nargs="+", metavar="SYSTEM=PRED.tsv")
    an.add_argument("--report-dirs", nargs="+", metavar="SYSTEM=DIR",
                    help="per-system directories of <suite>.json reports (suite-level breakdowns)")

    vb = sub.add_parser("validate-bank", help="load and check a source bank", argument_default=s)
    vb.add_argument("--bank", help="source bank manifest (JSON)")
    return parser


GENERATE_DEFAULTS = {"workers": 1, "encoding": FLOAT32, "force": False, "max_non_targets": 3, "profile": None,
                     "no_reverb_renormalize": False}
EVALUATE_DEFAULTS = {"name": "report", "ignore_unknown_labels": False}


def _merge(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    merged = dict(defaults)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"--config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError(f"--config {args.config}: top level must be an object")
        merged.update({k.replace("-", "_"): v for k, v in cfg.items()})
    merged.update(vars(args))
    return argparse.Namespace(**merged)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")


# ---------------------------------------------------------------------------
# generate


def _selected_suites(requested) -> list[str]:
    names = []
    for item in requested:
        for part in str(item).split(","):
            part = part.strip()
            expanded = SUITE_GROUPS.get(part, (part,))
            for name in expanded:
                if name not in SUITE_NAMES:
                    raise ConfigError(f"--suite: unknown suite {part!r}")
                if name not in names:
                    names.append(name)
    return names


def _count(args, protocol: str, vocab_size: int) -> int:
    if getattr(args, "n", None) is not None:
        return args.n
    n = DEFAULT_COUNTS[protocol]
    scale = getattr(args, "scale", None)
    if scale:
        if scale < 1:
            raise ConfigError("--scale must be >= 1")
        n = max(1, round(n / scale))
        if protocol == "single":
            n = max(vocab_size, n - n % vocab_size)
    return n


def cmd_generate(args) -> int:
    _require(args, "bank", "seed", "out", "suite")
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    names = _selected_suites(args.suite)
    bank = load_bank(args.bank)
    profile = load_profile(args.profile)
    out = Path(args.out)
    if not args.force:
        existing = [n for n in names if (out / n / "manifest.json").exists()]
        if existing:
            raise ConfigError(f"suite(s) already exist in {out}: {', '.join(existing)}; use --force")

    suites = {}
    need_ref = "ref" in names or any(n in GRID_NAMES for n in names)
    if need_ref:
        suites["ref"] = build_ref(profile, bank, args.seed, _count(args, "ref", len(bank.vocabulary)), args.workers)
    if "60s" in names:
        suites["60s"] = build_60s(profile, bank, args.seed, _count(args, "60s", len(bank.vocabulary)), args.workers)
    if any(n in ONSET_WINDOWS for n in names):
        suites.update(build_onset_variants(bank, args.seed, _count(args, "onset", len(bank.vocabulary)),
                                           workers=args.workers))
    if "single" in names:
        suites["single"] = build_single(bank, args.seed, _count(args, "single", len(bank.vocabulary)),
                                        workers=args.workers)
    if any(n in GRID_NAMES for n in names):
        suites.update(build_condition_grid(suites["ref"], bank, bank.non_targets, bank.rooms, args.seed,
                                           args.max_non_targets, not args.no_reverb_renormalize))

    for name in names:
        suite = suites[name]
        write_suite(suite, bank, out, args.encoding, args.workers, args.force)
        print(f"{name}: {len(suite)} clips, {suite.total_seconds:.1f} s of audio -> {out / name}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _load_reference(path: str):
    """Annotations and vocabulary (None if unknown) from a suite dir or TSV."""
    p = Path(path)
    if p.is_dir():
        manifest = read_manifest(p)
        return AnnotationSet.read(p / METADATA), manifest.get("vocabulary")
    if not p.is_file():
        raise ConfigError(f"{path}: no such file or directory")
    return AnnotationSet.read(p), None


def _read_predictions(path: str) -> AnnotationSet:
    if not Path(path).is_file():
        raise ConfigError(f"{path}: no such file")
    return AnnotationSet.read(path)


def _metric_config(args) -> MetricConfig:
    kwargs = {}
    for name in ("onset_collar", "offset_collar_min", "offset_collar_pct"):
        value = getattr(args, name, None)
        if value is not None:
            kwargs[name] = value
    try:
        return MetricConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_evaluate(args) -> int:
    _require(args, "reference", "predictions", "out")
    reference, vocabulary = _load_reference(args.reference)
    if getattr(args, "vocabulary", None):
        vocabulary = [v.strip() for v in args.vocabulary.split(",") if v.strip()]
    estimate = _read_predictions(args.predictions)
    report = evaluate(reference, estimate, _metric_config(args), vocabulary, args.ignore_unknown_labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{args.name}.json").write_text(report.to_json())
    (out / f"{args.name}.txt").write_text(report.to_text())
    print(f"macro_f1: {report.macro_f1:.1f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze


def _pairs(items, flag: str) -> dict[str, str]:
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"{flag}: expected SYSTEM=PATH, got {item!r}")
        out[name] = path
    return out


def _read_report(path: str) -> ScoreReport:
    try:
        with open(path) as fh:
            return ScoreReport.from_dict(json.load(fh))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: not a score report ({exc})") from exc


def cmd_analyze(args) -> int:
    _require(args, "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wrote = []
    did_something = False

    table = None
    if getattr(args, "table", None):
        if not Path(args.table).is_file():
            raise ConfigError(f"{args.table}: no such file")
        table = read_score_table(args.table)

    if getattr(args, "diff", None):
        if table is None:
            raise ConfigError("--diff needs --table")
        a, b = args.diff
        path = out / f"diff_{b}_minus_{a}.csv"
        path.write_text(diff_csv(diff_table(table, a, b), a, b))
        wrote.append(path)
        did_something = True

    if getattr(args, "group", None):
        if table is None:
            raise ConfigError("--group needs --table")
        keys = [k.strip() for k in args.group.split(",") if k.strip()]
        # The baseline is never pooled with submissions.
        if "baseline" in table.tag_columns and "baseline" not in keys:
            keys.insert(0, "baseline")
        groups = group_mean(table, keys)
        path = out / f"group_{'_'.join(keys)}.csv"
        path.write_text(group_csv(groups, keys, table.score_columns))
        wrote.append(path)
        did_something = True

    if getattr(args, "reports", None):
        reports = {name: _read_report(p) for name, p in _pairs(args.reports, "--reports").items()}
        wrote.extend(Path(p) for p in precision_recall_export(reports, out))
        did_something = True

    factor = getattr(args, "breakdown", None)
    if factor in EVENT_FACTORS:
        _require(args, "reference", "predictions")
        reference, vocabulary = _load_reference(args.reference)
        edges = ()
        if getattr(args, "edges", None):
            try:
                edges = tuple(float(e) for e in args.edges.split(","))
            except ValueError:
                raise ConfigError(f"--edges: not numbers: {args.edges!r}") from None
        spec = BreakdownSpec(factor, edges)
        per_system = {
            name: breakdown(reference, _read_predictions(p), MetricConfig(), spec, vocabulary)
            for name, p in _pairs(args.predictions, "--predictions").items()
        }
        for ext, text in (("csv", breakdown_csv(per_system, factor)), ("svg", breakdown_svg(per_system, factor))):
            path = out / f"breakdown_{factor}.{ext}"
            path.write_text(text)
            wrote.append(path)
        did_something = True
    elif factor in SUITE_FACTORS:
        _require(args, "report_dirs")
        reports = {}
        for name, d in _pairs(args.report_dirs, "--report-dirs").items():
            reports[name] = {p.stem: _read_report(str(p)) for p in sorted(Path(d).glob("*.json"))}
        rows = suite_breakdown(reports, factor)
        for ext, text in (("csv", suite_breakdown_csv(rows, factor)), ("svg", suite_breakdown_svg(rows, factor))):
            path = out / f"breakdown_{factor}.{ext}"
            path.write_text(text)
            wrote.append(path)
        did_something = True

    if not did_something:
        raise ConfigError("nothing to do: give --diff, --group, --reports or --breakdown")
    for path in wrote:
        print(path)
    return EXIT_OK


def cmd_validate_bank(args) -> int:
    _require(args, "bank")
    bank = load_bank(args.bank)
    print(f"bank OK: {len(bank.vocabulary)} classes, {bank.n_targets} targets, {len(bank.non_targets)} non-targets, "
          f"{len(bank.backgrounds)} backgrounds, {len(bank.rooms)} rooms, {bank.sample_rate} Hz")
    for label in bank.vocabulary:
        print(f"  {label}: {len(bank.targets[label])} clips")
    return EXIT_OK


COMMANDS = {
    "generate": (cmd_generate, GENERATE_DEFAULTS),
    "evaluate": (cmd_evaluate, EVALUATE_DEFAULTS),
    "analyze": (cmd_analyze, {}),
    "validate-bank": (cmd_validate_bank, {}),
}


def main(argv=None) -> int:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", level=logging.WARNING)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        fn, defaults = COMMANDS[args.command]
        args = _merge(args, defaults)
        return fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BankError, ProfileError, SilentSourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BANK
    except SuiteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AnnotationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SchemaError, BreakdownError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
