"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data error, 3 transport error.
Flags mirror config-file keys; precedence is flag > config file > default.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .agents import Agents, load_templates
from .corpus import (
    REFERENCE_STATS,
    CorpusError,
    TokenizerConfig,
    check_against_reference,
    compute_stats,
    ingest,
    load_dataset,
)
from .evalkit import (
    AlignmentError,
    BinMismatchError,
    binned_scores,
    check_threshold,
    evaluate_datasets,
    gain_analysis,
    score_report,
    write_gain_csv,
    write_score_csv,
)
from .gateway import Cassette, Gateway, GatewayConfig, GatewayError
from .knowledge import DEFAULT_BASE_URL as WIKI_BASE_URL
from .knowledge import WikiClient
from .pipeline import (
    ABLATION_ROWS,
    VARIANTS,
    Pipeline,
    PipelineConfig,
    read_results,
    run_and_write,
)

logger = logging.getLogger("mapex")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRANSPORT = 0, 1, 2, 3

DEFAULTS = {
    "length_threshold_tokens": 512,
    "variant": "full",
    "k_values": [5, 10, 15],
    "worker_limit": 1,
    "cassette": None,
    "cassette_mode": "passthrough",
    "template_set": "v1",
    "tokenizer": "whitespace",
    "model": None,
    "base_url": None,
    "context_window": 32768,
    "rerank_limit": 30,
    "knowledge_budget": 2048,
    "wiki_cache": None,
    "wiki_offline": False,
    "wiki_base_url": WIKI_BASE_URL,
    "wiki_rate_limit": 10.0,
}

# display names for published reference tables
REFERENCE_COLUMNS = {
    "inspec": "Inspec", "semeval2017": "SemEval2017", "semeval2010": "SemEval2010",
    "duc2001": "DUC2001", "nus": "NUS", "krapivin": "Krapivin", "AVG": "AVG",
}


_PATH_KEYS = ("cassette", "wiki_cache", "tokenizer", "template_set")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _k_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    if p.suffix == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python 3.10
            import tomli as tomllib
        with p.open("rb") as fh:
            data = tomllib.load(fh)
    else:
        data = json.loads(p.read_text(encoding="utf-8"))
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    # file paths in a config file are relative to the file itself
    for key in _PATH_KEYS:
        value = data.get(key)
        if isinstance(value, str) and value != "whitespace" and not os.path.isabs(value):
            candidate = p.parent / value
            if key != "template_set" or candidate.is_dir():
                data[key] = str(candidate)
    return data


def resolve_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    settings.update(_load_config_file(getattr(args, "config", None)))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            settings[key] = value
    if getattr(args, "replay", None):
        settings["cassette"], settings["cassette_mode"] = args.replay, "replay"
    if getattr(args, "record", None):
        settings["cassette"], settings["cassette_mode"] = args.record, "record"
    if isinstance(settings["k_values"], str):
        settings["k_values"] = _k_list(settings["k_values"])
    return settings


def build_pipeline(settings: dict, transport=None, wiki_transport=None) -> Pipeline:
    gw_config = GatewayConfig()
    if settings["model"]:
        gw_config.model = settings["model"]
    if settings["base_url"]:
        gw_config.base_url = settings["base_url"]
    mode = settings["cassette_mode"]
    if mode != "passthrough" and not settings["cassette"]:
        raise UsageError(f"cassette mode {mode!r} needs --cassette")
    cassette = Cassette(settings["cassette"], mode)
    tokenizer = TokenizerConfig.from_value(settings["tokenizer"])
    agents = Agents(
        Gateway(gw_config, cassette, transport=transport),
        load_templates(settings["template_set"]),
        tokenizer,
        context_window=int(settings["context_window"]),
        rerank_limit=int(settings["rerank_limit"]),
        knowledge_budget=int(settings["knowledge_budget"]),
    )
    wiki = WikiClient(
        settings["wiki_base_url"],
        settings["wiki_cache"],
        rate_limit=float(settings["wiki_rate_limit"]),
        offline=bool(settings["wiki_offline"]) or mode == "replay",
        transport=wiki_transport,
    )
    return Pipeline(agents, wiki)


def pipeline_config(settings: dict) -> PipelineConfig:
    try:
        return PipelineConfig(
            length_threshold_tokens=int(settings["length_threshold_tokens"]),
            variant=settings["variant"],
            k_values=list(settings["k_values"]),
            worker_limit=int(settings["worker_limit"]),
            cassette_mode=settings["cassette_mode"],
            template_set=settings["template_set"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _dataset_name(path: str) -> str:
    return Path(path).stem.split(".")[0]


def _load_corpus(path: str, tokenizer: str) -> list:
    fmt = "raw-dir" if Path(path).is_dir() else "jsonl"
    return load_dataset(path, fmt, TokenizerConfig.from_value(tokenizer), dataset=_dataset_name(path))


def _pct(x: float) -> str:
    return f"{100 * x:6.2f}"


# ---------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    docs, stats = ingest(args.source, args.dataset, args.out, TokenizerConfig.from_value(args.tokenizer))
    print(f"docs={stats.doc_count} gold={stats.gold_count} avg_tokens={stats.avg_tokens:.1f}")
    ref = REFERENCE_STATS[args.dataset.lower().replace("-", "").replace("_", "")]
    checks = check_against_reference(stats, ref)
    print(
        f"reference {ref.name}: docs={ref.doc_count} gold={ref.gold_count} avg_tokens={ref.avg_tokens:g} "
        + " ".join(f"{k}={'ok' if v else 'MISMATCH'}" for k, v in checks.items())
    )
    return EXIT_OK


def cmd_stats(args) -> int:
    for path in args.corpus:
        docs = _load_corpus(path, args.tokenizer or "whitespace")
        stats = compute_stats(docs)
        line = f"{_dataset_name(path)}: docs={stats.doc_count} gold={stats.gold_count} avg_tokens={stats.avg_tokens:.1f}"
        if args.reference:
            ref = REFERENCE_STATS[args.reference]
            checks = check_against_reference(stats, ref, args.tolerance)
            line += " " + " ".join(f"{k}={'ok' if v else 'MISMATCH'}" for k, v in checks.items())
        print(line)
    return EXIT_OK


def _run_extract(settings: dict, corpus_path: str, out: str, variant: str | None = None,
                 transport=None, wiki_transport=None):
    if variant:
        settings = {**settings, "variant": variant}
    config = pipeline_config(settings)
    pipeline = build_pipeline(settings, transport, wiki_transport)
    docs = _load_corpus(corpus_path, settings["tokenizer"])
    extra = {"tokenizer": settings["tokenizer"], "corpus_path": str(corpus_path)}
    results, manifest = run_and_write(pipeline, docs, config, out, settings["cassette"], extra)
    return docs, results, manifest


def _failures(results) -> list[str]:
    return [d for r in results for d in r.diagnostics if d.startswith("error:")]


def cmd_extract(args, transport=None, wiki_transport=None) -> int:
    settings = resolve_settings(args)
    docs, results, manifest = _run_extract(settings, args.corpus, args.out, None, transport, wiki_transport)
    routes = " ".join(f"{k}={v}" for k, v in sorted(manifest["routes"].items()))
    print(f"{len(results)} documents, variant={manifest['config']['variant']}, "
          f"threshold={manifest['config']['length_threshold_tokens']}, routes: {routes}")
    failed = _failures(results)
    if failed:
        print(f"{len(failed)} document(s) failed; first: {failed[0]}", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK


def _print_table(report: dict, compare: dict | None = None) -> None:
    for k, cols in report["k"].items():
        names = list(cols)
        print(f"F1@{k}".ljust(24) + "".join(n[:11].rjust(12) for n in names))
        print(report["method"][:24].ljust(24) + "".join(_pct(cols[n]["f1"]).rjust(12) for n in names))
        if compare and k in compare.get("k", {}):
            for method, row in compare["k"][k].items():
                vals = [row.get(REFERENCE_COLUMNS.get(n, n)) for n in names]
                print(method[:24].ljust(24) + "".join(
                    ("-" if v is None else f"{v:6.2f}").rjust(12) for v in vals))


def cmd_evaluate(args) -> int:
    if len(args.results) != len(args.corpus):
        raise UsageError("--results and --corpus must be given the same number of times")
    runs = {}
    for rpath, cpath in zip(args.results, args.corpus):
        runs[_dataset_name(cpath)] = (read_results(rpath), _load_corpus(cpath, args.tokenizer or "whitespace"))
    if all(not r.final for results, _ in runs.values() for r in results):
        print("warning: every prediction list is empty", file=sys.stderr)
    table = evaluate_datasets(runs, args.k_values)
    report = score_report(table, args.method)
    out = Path(args.out)
    out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if args.csv:
        write_score_csv(report, args.csv)
    if args.figure:
        from .plots import plot_scores

        plot_scores(report, args.figure)
    compare = None
    if args.compare:
        src = args.compare
        if src == "builtin":
            src = resources.files("mapex") / "data" / "reference_scores.json"
        compare = json.loads(Path(src).read_text(encoding="utf-8"))
    _print_table(report, compare)
    return EXIT_OK


def cmd_ablate(args, transport=None, wiki_transport=None) -> int:
    settings = resolve_settings(args)
    order = [v for v, _ in ABLATION_ROWS]
    variants = args.variants or order
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"unknown variant(s): {', '.join(unknown)}")
    labels = dict(ABLATION_ROWS) | {"full": "MAPEX"}
    variants = sorted(variants, key=lambda v: order.index(v) if v in order else len(order))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, failed = [], []
    for variant in variants:
        runs = {}
        for cpath in args.corpus:
            res_path = out_dir / f"{_dataset_name(cpath)}.{variant}.jsonl"
            docs, results, _ = _run_extract(settings, cpath, str(res_path), variant, transport, wiki_transport)
            failed += _failures(results)
            runs[_dataset_name(cpath)] = (results, docs)
        table = evaluate_datasets(runs, settings["k_values"])
        col = "AVG" if "AVG" in table[settings["k_values"][0]] else next(iter(runs))
        rows.append({
            "variant": variant,
            "label": labels[variant],
            "scores": {str(k): table[k][col].as_dict() for k in settings["k_values"]},
            "per_dataset": {str(k): {d: t.as_dict() for d, t in table[k].items()} for k in settings["k_values"]},
        })
    result = {"k_values": settings["k_values"], "rows": rows}
    (out_dir / "ablation.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    with (out_dir / "ablation.csv").open("w", encoding="utf-8") as fh:
        fh.write("variant,label," + ",".join(f"f1@{k}" for k in settings["k_values"]) + "\n")
        for row in rows:
            fh.write(f"{row['variant']},{row['label']}," + ",".join(
                f"{row['scores'][str(k)]['f1']:.6f}" for k in settings["k_values"]) + "\n")
    if not args.no_figure:
        from .plots import plot_ablation

        plot_ablation(rows, settings["k_values"], out_dir / "ablation.png")
    print("row".ljust(28) + "".join(f"F1@{k}".rjust(9) for k in settings["k_values"]))
    for row in rows:
        print(f"{row['label']} ({row['variant']})".ljust(28)
              + "".join(_pct(row["scores"][str(k)]["f1"]).rjust(9) for k in settings["k_values"]))
    if failed:
        print(f"{len(failed)} document run(s) failed; first: {failed[0]}", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK


def cmd_bins(args) -> int:
    n = len(args.corpus)
    if not (len(args.base) == len(args.topic) == len(args.knowledge) == n):
        raise UsageError("--corpus, --base, --topic and --knowledge must be repeated the same number of times")
    scores = {}
    for i, cpath in enumerate(args.corpus):
        docs = _load_corpus(cpath, args.tokenizer or "whitespace")
        scores[_dataset_name(cpath)] = {
            name: binned_scores(read_results(paths[i]), docs, args.width, k=args.k)
            for name, paths in (("base", args.base), ("topic", args.topic), ("knowledge", args.knowledge))
        }
    report = gain_analysis(scores, args.width, base="base", pair=("topic", "knowledge"))
    inside, distance = check_threshold(report, args.threshold)
    payload = report.to_json()
    payload["threshold"] = {
        "tokens": args.threshold,
        "ln": math.log(args.threshold),
        "inside_transition": inside,
        "midpoint_distance": distance,
    }
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "gain.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    write_gain_csv(report, out_dir / "gain.csv")
    if not args.no_figure:
        from .plots import plot_gain

        plot_gain(report, out_dir / "gain.png", args.threshold)
    if report.transition_interval is None:
        print(f"no transition region found; ln({args.threshold}) = {math.log(args.threshold):.4f}")
    else:
        lo, hi = report.transition_interval
        print(f"transition region [{lo:.2f}, {hi:.2f}]; ln({args.threshold}) = {math.log(args.threshold):.4f} "
              f"{'inside' if inside else 'outside'}, midpoint distance {distance:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or TOML file with config keys")
    p.add_argument("--length-threshold-tokens", "--threshold", dest="length_threshold_tokens", type=int)
    p.add_argument("--k-values", "--k", dest="k_values", type=_k_list)
    p.add_argument("--worker-limit", "--workers", dest="worker_limit", type=int)
    p.add_argument("--cassette", help="cassette JSON file")
    p.add_argument("--cassette-mode", choices=["record", "replay", "passthrough"])
    p.add_argument("--replay", metavar="CASSETTE", help="shorthand for --cassette X --cassette-mode replay")
    p.add_argument("--record", metavar="CASSETTE", help="shorthand for --cassette X --cassette-mode record")
    p.add_argument("--template-set", "--templates", dest="template_set")
    p.add_argument("--tokenizer", help="'whitespace' or path to a tokenizer.json")
    p.add_argument("--model")
    p.add_argument("--base-url", help="OpenAI-compatible base URL (default $MAPEX_BASE_URL)")
    p.add_argument("--context-window", type=int)
    p.add_argument("--rerank-limit", type=int)
    p.add_argument("--knowledge-budget", type=int)
    p.add_argument("--wiki-cache")
    p.add_argument("--wiki-offline", action="store_true", default=None)
    p.add_argument("--wiki-base-url")
    p.add_argument("--wiki-rate-limit", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mapex", description="Multi-agent keyphrase extraction and evaluation.")
    parser.add_argument("--version", action="version", version=f"mapex {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="convert a benchmark's native layout to jsonl")
    p.add_argument("source")
    p.add_argument("--dataset", required=True, choices=sorted(REFERENCE_STATS))
    p.add_argument("--out", required=True)
    p.add_argument("--tokenizer", default="whitespace")

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("corpus", nargs="+")
    p.add_argument("--tokenizer")
    p.add_argument("--reference", choices=sorted(REFERENCE_STATS))
    p.add_argument("--tolerance", type=float, default=0.05)

    p = sub.add_parser("extract", help="run the pipeline over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=VARIANTS)
    _add_run_flags(p)

    p = sub.add_parser("evaluate", help="score results files")
    p.add_argument("--results", action="append", required=True)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--k-values", "--k", dest="k_values", type=_k_list, default=[5, 10, 15])
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--figure")
    p.add_argument("--method", default="run")
    p.add_argument("--compare", help="reference score JSON, or 'builtin' for the bundled table")
    p.add_argument("--tokenizer")

    p = sub.add_parser("ablate", help="run ablation variants and tabulate")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--variants", type=lambda s: [v.strip() for v in s.split(",") if v.strip()])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figure", action="store_true")
    _add_run_flags(p)

    p = sub.add_parser("bins", help="length-binned gain analysis")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--base", action="append", required=True)
    p.add_argument("--topic", action="append", required=True)
    p.add_argument("--knowledge", action="append", required=True)
    p.add_argument("--width", type=float, default=0.4)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--threshold", type=int, default=512)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figure", action="store_true")
    p.add_argument("--tokenizer")
    return parser


COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "extract": cmd_extract,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "bins": cmd_bins,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mapex: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GatewayError as exc:
        print(f"mapex: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (CorpusError, AlignmentError, BinMismatchError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"mapex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
