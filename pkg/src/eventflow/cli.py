"""``eventflow`` command line.

Exit codes: 0 success, 1 domain error, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .attribution import ImportanceReport, export_summary, tree_shap
from .config import RunConfig, build_config, load_config
from .errors import ConfigInvalid, EventflowError
from .events import build_event, events_to_json, filter_events, read_events, read_raw_events
from .features import FEATURE_SETS, FeatureMatrix
from .fileio import atomic_write_json, atomic_write_text
from .gateway import Gateway, relevance_check
from .models import sample_weights, serialize
from .pipeline import load_corpus
from .popularity import (compute_metrics, popularity_rows, read_posts, read_relevance, related_posts_by_event,
                         select_top_posts)
from .rolling import (ABLATION_COLUMNS, GRID_COLUMNS, ablation, grid_search, run_rolling, table_to_csv)
from .synth import generate, write_corpus

log = logging.getLogger("eventflow")

COMMANDS = ("synth", "structure", "relevance", "popularity", "features", "train", "rolling", "gridsearch",
            "ablation", "explain")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(args, report: dict, lines: list[str]):
    if args.format == "json":
        print(json.dumps(report, indent=1, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _confirm_remote(cfg: RunConfig, args, n_requests: int, what: str):
    if cfg.gateway.mode != "remote":
        return
    print(f"{what}: about {n_requests} chat-completion request(s) to {cfg.gateway.endpoint_url} "
          f"(model {cfg.gateway.model_name})", file=sys.stderr)
    if not args.yes:
        raise ConfigInvalid("remote gateway mode needs --yes to proceed")


def _pct(r2) -> str:
    return "undefined" if r2 is None else f"{100 * r2:.2f}"


def _feature_path(cfg: RunConfig) -> Path:
    return cfg.paths.out(f"features_{cfg.features.feature_set}.csv")


def _load_matrix(cfg: RunConfig) -> FeatureMatrix:
    path = _feature_path(cfg)
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `eventflow features --set {cfg.features.feature_set}`")
    return FeatureMatrix.from_csv(path, cfg.features.feature_set)


def _build_matrix(cfg: RunConfig, feature_set: str | None = None) -> FeatureMatrix:
    fo = cfg.features
    log.info("building %s from %s", feature_set or fo.feature_set, cfg.paths.data_dir)
    corpus = load_corpus(cfg.paths.data_dir, fo.segment, cfg.selection,
                         with_events=(feature_set or fo.feature_set) != "FS1")
    return corpus.matrix(feature_set or fo.feature_set, fo.popularity_lag, exhibition_split=fo.exhibition_split,
                         selection=cfg.selection)


# commands

def cmd_synth(cfg: RunConfig, args):
    scfg = replace(cfg.synth, seed=cfg.seed)
    digests = write_corpus(generate(scfg), cfg.paths.data_dir)
    _emit(args, {"data_dir": str(cfg.paths.data_dir), "sha256": digests},
          [f"{name}  {digest}" for name, digest in digests.items()])


def cmd_structure(cfg: RunConfig, args):
    raws = read_raw_events(cfg.paths.data("events_raw.jsonl"))
    _confirm_remote(cfg, args, 3 * len(raws), "structure")
    with Gateway(cfg.gateway) as gw, ThreadPoolExecutor(max_workers=cfg.gateway.max_in_flight) as pool:
        built = list(pool.map(lambda r: build_event(r, gw), raws))
    kept = filter_events(built, cfg.filter)
    atomic_write_text(cfg.paths.data("events.json"), events_to_json(kept))
    _emit(args, {"raw": len(raws), "kept": len(kept)}, [f"structured {len(raws)} events, kept {len(kept)}"])


def _candidate_pairs(cfg: RunConfig, events, posts):
    """Crawled (event, post) pairs, cut to each event's top-g posts by engagement."""
    by_id = {p.post_id: p for p in posts}
    src = cfg.paths.data("candidates.csv")
    if not src.exists():
        src = cfg.paths.data("relevance.csv")
    per_event: dict[str, list] = {}
    for eid, pid, _ in read_relevance(src):
        if pid in by_id:
            per_event.setdefault(eid, []).append(by_id[pid])
    pairs = []
    for ev in events:
        for p in select_top_posts(per_event.get(ev.event_id, []), cfg.selection):
            pairs.append((ev, p))
    return pairs


def cmd_relevance(cfg: RunConfig, args):
    events = read_events(cfg.paths.data("events.json"))
    posts = read_posts(cfg.paths.data("posts.jsonl"))
    pairs = _candidate_pairs(cfg, events, posts)
    _confirm_remote(cfg, args, len(pairs), "relevance")
    with Gateway(cfg.gateway) as gw, ThreadPoolExecutor(max_workers=cfg.gateway.max_in_flight) as pool:
        labels = list(pool.map(lambda ep: relevance_check(ep[0], ep[1], gw), pairs))
    rows = [(ev.event_id, p.post_id, int(lab)) for (ev, p), lab in zip(pairs, labels)]
    atomic_write_text(cfg.paths.data("relevance.csv"), _csv_text(("event_id", "post_id", "related"), rows))
    n_rel = sum(r[2] for r in rows)
    _emit(args, {"pairs": len(rows), "related": n_rel}, [f"judged {len(rows)} pairs, {n_rel} related"])


def cmd_popularity(cfg: RunConfig, args):
    events = read_events(cfg.paths.data("events.json"))
    related = related_posts_by_event(events, read_posts(cfg.paths.data("posts.jsonl")),
                                     read_relevance(cfg.paths.data("relevance.csv")), cfg.selection)
    metrics = {ev.event_id: compute_metrics(ev, related[ev.event_id], cfg.selection) for ev in events}
    rows = popularity_rows(events, metrics)
    cols = ("event_id", "sub_id", "overall", "promotional", "womp")
    atomic_write_text(cfg.paths.data("popularity.csv"),
                      _csv_text(cols, ([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in cols]
                                       for r in rows)))
    _emit(args, {"events": len(events), "rows": len(rows)}, [f"popularity for {len(events)} events"])


def cmd_features(cfg: RunConfig, args):
    fm = _build_matrix(cfg)
    path = atomic_write_text(_feature_path(cfg), fm.to_csv_text())
    _emit(args, {"path": str(path), "rows": len(fm), "columns": list(fm.columns)},
          [f"wrote {path} ({len(fm)} rows x {len(fm.columns)} features)"])


def _fit_full(cfg: RunConfig, fm: FeatureMatrix):
    model = cfg.model.build()
    model.fit(fm.values, fm.target, sample_weights(len(fm), cfg.model.weight_decay), fm.columns)
    return model


def cmd_train(cfg: RunConfig, args):
    if cfg.model.kind == "arima":
        raise ConfigInvalid("train writes tree or linear models; use `rolling` for ARIMA")
    fm = _load_matrix(cfg)
    model = _fit_full(cfg, fm)
    path = atomic_write_text(cfg.paths.out("model.json"), serialize.dumps(model.model_, cfg.model.to_dict()))
    _emit(args, {"path": str(path), "kind": cfg.model.kind, "rows": len(fm)},
          [f"wrote {path} ({cfg.model.kind}, {len(fm)} rows)"])


def cmd_rolling(cfg: RunConfig, args):
    fm = _load_matrix(cfg)
    rep = run_rolling(fm, cfg.rolling)
    report = rep.to_dict()
    atomic_write_json(cfg.paths.out("rolling_report.json"), report)
    _emit(args, report, [f"{fm.feature_set} horizon {cfg.rolling.horizon}: R2 {_pct(rep.r2)}  MAE {rep.mae:.2f}"
                         f"  ({len(rep.dates)} days scored)"])


def cmd_gridsearch(cfg: RunConfig, args):
    fm = _load_matrix(cfg)
    best, table = grid_search(fm, cfg.rolling, cfg.grid, args.jobs)
    atomic_write_text(cfg.paths.out("grid_results.csv"), table_to_csv(table, GRID_COLUMNS))
    atomic_write_json(cfg.paths.out("grid_best.json"), best)
    _emit(args, {"best": best, "n_rows": len(table)},
          [f"{len(table)} combinations; best: " + ", ".join(f"{k}={best[k]}" for k in GRID_COLUMNS)])


def cmd_ablation(cfg: RunConfig, args):
    sets = args.sets or FEATURE_SETS
    matrices = {fs: _build_matrix(cfg, fs) for fs in sets}
    rows, _ = ablation(matrices, cfg.rolling, args.jobs)
    atomic_write_text(cfg.paths.out("ablation.csv"), table_to_csv(rows, ABLATION_COLUMNS))
    _emit(args, {"rows": rows}, [f"{r['feature_set']}: R2 {_pct(r['r2'])}  MAE {r['mae']:.2f}" for r in rows])


def cmd_explain(cfg: RunConfig, args):
    fm = _load_matrix(cfg)
    model_path = cfg.paths.out("model.json")
    if args.use_saved_model and model_path.exists():
        model = serialize.loads(model_path.read_text(encoding="utf-8"))
    else:
        model = _fit_full(cfg, fm).model_
    shap = tree_shap(model, fm.values, fm.columns)
    summary = export_summary(shap, fm.values, cfg.top_k, fm.dates)
    shap_rows = ([d.isoformat()] + [repr(float(v)) for v in row] for d, row in zip(fm.dates, shap.values))
    atomic_write_text(cfg.paths.out("shap_values.csv"), _csv_text(("date",) + fm.columns, shap_rows))
    full = ImportanceReport(summary.features, summary.importance)
    importance = {"base_value": shap.base_value, **summary.to_dict(),
                  "all_features": full.to_dict()["ranking"]}
    atomic_write_json(cfg.paths.out("importance.json"), importance)
    points = ((p["date"], p["feature"], repr(p["value"]), repr(p["shap"])) for p in summary.points)
    atomic_write_text(cfg.paths.out("summary_points.csv"), _csv_text(("date", "feature", "value", "shap"), points))
    _emit(args, importance, [f"{r['rank']:>2}. {r['feature']:<28} {r['importance']:.2f}"
                             for r in importance["ranking"]])


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# argument handling

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--data-dir", type=Path, help="corpus / input directory")
    common.add_argument("--out-dir", type=Path, help="directory for features, models and reports")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("text", "json"), default="text")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--verbose", "-v", action="count", default=0)
    common.add_argument("--yes", action="store_true", help="allow requests to a remote gateway")
    common.add_argument("--mode", choices=("mock", "remote"), help="gateway mode")
    common.add_argument("--set", dest="feature_set", choices=FEATURE_SETS)
    common.add_argument("--lag", help="popularity observation lag in days, or 'none'")
    common.add_argument("--segment", help="entry-point segment to model")
    common.add_argument("--model", dest="model_kind", choices=("gbdt", "rf", "linear", "arima"))
    common.add_argument("--horizon", type=int)
    common.add_argument("--first-origin", type=int)
    common.add_argument("--top-k", type=int)

    parser = argparse.ArgumentParser(prog="eventflow", description="Event-aware visitor-flow forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "generate a synthetic corpus", "structure": "structure raw event listings",
        "relevance": "judge post relevance", "popularity": "compute event popularity",
        "features": "assemble a feature matrix", "train": "fit a model on all rows",
        "rolling": "rolling-origin evaluation", "gridsearch": "hyper-parameter grid search",
        "ablation": "compare feature sets", "explain": "SHAP attribution",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "ablation":
            p.add_argument("--sets", nargs="+", choices=FEATURE_SETS)
        if name == "explain":
            p.add_argument("--use-saved-model", action="store_true",
                           help="explain out/model.json instead of refitting")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over: dict = {}
    if args.seed is not None:
        over["seed"] = args.seed
    paths = {}
    if args.data_dir:
        paths["data_dir"] = str(args.data_dir)
    if args.out_dir:
        paths["out_dir"] = str(args.out_dir)
    if paths:
        over["paths"] = paths
    if args.mode:
        over["gateway"] = {"mode": args.mode}
    feats = {}
    if args.feature_set:
        feats["set"] = args.feature_set
    if args.lag is not None:
        feats["popularity_lag"] = "none" if args.lag.lower() == "none" else int(args.lag)
    if args.segment:
        feats["segment"] = args.segment
    if feats:
        over["features"] = feats
    if args.model_kind:
        over["model"] = {"kind": args.model_kind}
    roll = {}
    if args.horizon is not None:
        roll["horizon"] = args.horizon
    if args.first_origin is not None:
        roll["first_origin"] = args.first_origin
    if roll:
        over["rolling"] = roll
    if args.top_k is not None:
        over["explain"] = {"top_k": args.top_k}
    if args.jobs < 1:
        raise ConfigInvalid("--jobs must be >= 1")
    return build_config(over, cfg)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[args.command](cfg, args)
    except ConfigInvalid as exc:
        print(f"eventflow: configuration error: {exc}", file=sys.stderr)
        return 2
    except EventflowError as exc:
        origin = getattr(exc, "origin", None)
        where = f" at origin {origin}" if origin is not None else ""
        print(f"eventflow: {exc.module} error{where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"eventflow: input error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
