"""Operator command line: ingest | extract | judge | evaluate | stats | cluster | annotate | report.

Configuration precedence is flags > environment > config file. Credentials
are never read from flags or files, only from the environment variables the
provider config names. Every command writes a machine-readable run manifest
next to its outputs so results can be tied back to exact inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import secrets
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, annotation, corpus, reports
from .errors import RevtraitsError
from .gateway import (
    ChatGateway,
    ProviderConfig,
    load_provider_configs,
    make_provider,
    scripted_config,
)
from .store import Store


def _env(name: str) -> Optional[str]:
    return os.environ.get(f"REVTRAITS_{name}")


def _resolve(flag, env_name: str, default=None):
    if flag is not None:
        return flag
    env_value = _env(env_name)
    if env_value is not None:
        return env_value
    return default


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, options: dict,
                    input_files: Sequence[Path] = ()) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "code_version": __version__,
        "config_digest": hashlib.sha256(
            json.dumps(options, sort_keys=True, default=str).encode()
        ).hexdigest(),
        "options": options,
        "input_digests": {
            str(p): _sha256_file(p) for p in input_files if Path(p).exists()
        },
    }
    with open(out_dir / "run_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _open_store(args) -> Store:
    path = _resolve(args.store, "STORE")
    if not path:
        raise RevtraitsError("no store path; pass --store or set REVTRAITS_STORE",
                             code="E_CONFIG")
    return Store(path)


def _provider_configs(args) -> dict[str, ProviderConfig]:
    config_path = _resolve(getattr(args, "config", None), "CONFIG")
    if config_path:
        return load_provider_configs(config_path)
    return {}


def _gateway_for_model(args, store: Store, model_id: str) -> ChatGateway:
    offline = bool(getattr(args, "offline", False)) or model_id.startswith("scripted:")
    configs = _provider_configs(args)
    if offline:
        fixtures = _resolve(getattr(args, "fixtures", None), "FIXTURES")
        if not fixtures and "scripted" in configs:
            fixtures = configs["scripted"].fixture_dir
        if not fixtures:
            raise RevtraitsError(
                "offline mode needs a fixtures directory; pass --fixtures",
                code="E_CONFIG",
            )
        config = scripted_config(fixtures)
        return ChatGateway(make_provider(config), config, cache=store)
    for config in configs.values():
        if model_id in config.models:
            return ChatGateway(make_provider(config), config, cache=store)
    raise RevtraitsError(
        f"no provider configured for model {model_id!r}; add it to a provider's "
        "models list in the config file",
        code="E_CONFIG",
    )


def _eligible(args, store: Store) -> list[str]:
    ids = sorted(corpus.filter_eligible(
        store, min_reviews=args.min_reviews, max_reviews=args.max_reviews
    ))
    limit = getattr(args, "limit", None)
    return ids[:limit] if limit else ids


def _framework_kinds(selection: str) -> list[str]:
    return ["bigfive", "subfive"] if selection == "both" else [selection]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    store = _open_store(args)
    input_path = Path(args.input)
    with open(input_path, "r", encoding="utf-8") as fh:
        result = corpus.ingest(store, fh)
    for err in result.errors:
        print(f"warning: {err}", file=sys.stderr)
    if args.export_metadata:
        corpus.export_metadata(store, args.export_metadata)
    out_dir = Path(args.out) if args.out else input_path.parent
    _write_manifest(out_dir, "ingest",
                    {"input": str(input_path), "store": store.path},
                    [input_path])
    n_phys, n_rev = store.counts()
    print(f"ingested {result.physicians} new physicians, {result.reviews} new reviews "
          f"({len(result.errors)} line errors); store now has {n_phys} physicians, "
          f"{n_rev} reviews")
    return 0


def cmd_extract(args) -> int:
    store = _open_store(args)
    gateway = _gateway_for_model(args, store, args.model)
    pids = _eligible(args, store)
    kinds = _framework_kinds(args.framework)
    stored = reports.run_extraction(
        store, gateway, args.model, kinds, pids, attempt_limit=args.attempt_limit
    )
    out_dir = Path(args.out) if args.out else Path(store.path).parent
    _write_manifest(out_dir, "extract", {
        "model": args.model, "framework": args.framework, "store": store.path,
        "min_reviews": args.min_reviews, "max_reviews": args.max_reviews,
        "physicians": len(pids),
    })
    print(f"extracted {stored} assessments for {len(pids)} physicians "
          f"({', '.join(kinds)}) with {args.model}")
    return 0


def cmd_judge(args) -> int:
    store = _open_store(args)
    judge_model = _resolve(args.judge_model, "JUDGE_MODEL")
    if not judge_model:
        raise RevtraitsError(
            "no judge model; pass --judge-model or set REVTRAITS_JUDGE_MODEL",
            code="E_CONFIG",
        )
    args.judge_model = judge_model
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    if not models:
        models = [m for m in store.extraction_models()
                  if m != args.judge_model]
    gateway = _gateway_for_model(args, store, args.judge_model)
    pids = _eligible(args, store)
    count = reports.run_judging(
        store, gateway, args.judge_model, models, pids, seed=args.seed
    )
    out_dir = Path(args.out) if args.out else Path(store.path).parent
    _write_manifest(out_dir, "judge", {
        "judge_model": args.judge_model, "models": models, "store": store.path,
        "seed": args.seed, "physicians": len(pids),
    })
    print(f"judged {count} (physician, trait) pairs across {len(models)} models "
          f"with {args.judge_model}")
    return 0


def cmd_evaluate(args) -> int:
    store = _open_store(args)
    models = [m.strip() for m in args.models.split(",")] if args.models else \
        store.extraction_models()
    if args.reference == "judge":
        judge_model = args.judge_model or (
            store.judge_models()[0] if len(store.judge_models()) == 1 else None
        )
        if judge_model is None:
            raise RevtraitsError("pass --judge-model (store has multiple judges)",
                                 code="E_CONFIG")
        reference = reports.judge_reference_scores(store, judge_model)
        models = [m for m in models if m != judge_model]
    else:
        reference = reports.human_reference_scores(store)
    rows = reports.model_leaderboard(store, reference, models)
    out_dir = Path(args.out) if args.out else Path(store.path).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    leaderboard = out_dir / "leaderboard.csv"
    reports.write_leaderboard(rows, leaderboard)
    _write_manifest(out_dir, "evaluate", {
        "reference": args.reference, "models": models, "store": store.path,
    })
    print(f"wrote {leaderboard} ({len(rows)} models, reference={args.reference})")
    return 0


def cmd_stats(args) -> int:
    store = _open_store(args)
    matrix = reports.build_trait_matrix(store, args.model)
    out_dir = Path(args.out) if args.out else Path(store.path).parent / "stats"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    want = args.analysis

    def _run(name, fn):
        # under --analysis all, a sub-analysis the data cannot support is a
        # warning; an explicitly requested one still fails loudly
        try:
            result = fn()
        except RevtraitsError as exc:
            if want != "all":
                raise
            print(f"warning: skipping {name}: {exc}", file=sys.stderr)
            return
        written.extend(result if isinstance(result, list) else [result])

    if want in ("all", "descriptives"):
        _run("descriptives", lambda: reports.write_descriptives(matrix, out_dir, seed=args.seed))
    if want in ("all", "correlation"):
        _run("correlation", lambda: reports.write_correlations(matrix, out_dir))
    if want in ("all", "gender"):
        _run("gender", lambda: reports.write_gender_comparison(matrix, out_dir, seed=args.seed))
    if want in ("all", "specialty"):
        _run("specialty", lambda: reports.write_specialty_comparison(matrix, out_dir))
        _run("specialty means", lambda: reports.write_specialty_means(matrix, out_dir))
    if want in ("all", "regression"):
        _run("regression", lambda: reports.write_regression(
            matrix, out_dir, cv_seeds=_parse_seeds(args.cv_seeds)))
    if want in ("all", "satisfaction"):
        _run("satisfaction", lambda: reports.write_trait_satisfaction(matrix, out_dir))
    _write_manifest(out_dir, "stats", {
        "model": args.model, "analysis": want, "store": store.path, "seed": args.seed,
    })
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_cluster(args) -> int:
    store = _open_store(args)
    matrix = reports.build_trait_matrix(store, args.model)
    out_dir = Path(args.out) if args.out else Path(store.path).parent / "cluster"
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = reports.run_clustering(
        matrix, out_dir,
        k=args.k, seeds=_parse_seeds(args.seeds),
        k_max=args.k_max,
    )
    _write_manifest(out_dir, "cluster", {
        "model": args.model, "k": args.k, "seeds": args.seeds, "store": store.path,
    })
    flag = "" if summary["confident"] else " (low-confidence elbow)"
    print(f"clustered {summary['n']} physicians into k={summary['selected_k']}"
          f"{flag}; elbow suggested k={summary['elbow_k']}; wcss={summary['wcss']:.4f}")
    return 0


def cmd_report(args) -> int:
    store = _open_store(args)
    matrix = reports.build_trait_matrix(store, args.model)
    out_dir = Path(args.out) if args.out else Path(store.path).parent / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    reports.write_profiles(store, args.model, out_dir / "profiles.csv")
    written = [
        out_dir / "profiles.csv",
        reports.write_distributions(matrix, out_dir),
        reports.write_correlations(matrix, out_dir),
        reports.write_violin_summaries(matrix, out_dir),
        reports.write_trait_satisfaction(matrix, out_dir),
        reports.write_gender_comparison(matrix, out_dir, seed=args.seed),
    ]
    _write_manifest(out_dir, "report", {"model": args.model, "store": store.path})
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_annotate_serve(args) -> int:
    import uvicorn

    store = _open_store(args)
    admin_token = _resolve(args.admin_token, "ADMIN_TOKEN")
    if not admin_token:
        admin_token = secrets.token_urlsafe(18)
        print(f"admin token (generated): {admin_token}")
    app = annotation.create_app(store, admin_token, ui_dist=args.ui_dist)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_annotate_add(args) -> int:
    store = _open_store(args)
    token = annotation.issue_token(store, args.id, args.name or args.id)
    print(f"annotator {args.id} token: {token}")
    return 0


def cmd_annotate_batch(args) -> int:
    store = _open_store(args)
    result = annotation.create_batch(
        store,
        physician_ids=[p.strip() for p in args.physicians.split(",") if p.strip()],
        traits=[t.strip() for t in args.traits.split(",") if t.strip()],
        models=[m.strip() for m in args.models.split(",") if m.strip()],
        overlap_fraction=args.overlap,
        seed=args.seed,
        calibration=args.calibration,
    )
    print(f"created {len(result.task_ids)} tasks "
          f"({result.duplicate_groups} duplicate groups)")
    return 0


def _parse_seeds(raw: str) -> tuple[int, ...]:
    return tuple(int(s) for s in str(raw).split(",") if s != "")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser, *, corpus_bounds: bool = False,
                network: bool = False) -> None:
    parser.add_argument("--store", help="path to the embedded store")
    parser.add_argument("--config", help="INI config file with provider sections")
    parser.add_argument("--out", help="output directory")
    if corpus_bounds:
        parser.add_argument("--min-reviews", type=int, default=5)
        parser.add_argument("--max-reviews", type=int, default=100)
        parser.add_argument("--limit", type=int, help="cap number of physicians")
    if network:
        parser.add_argument("--offline", action="store_true",
                            help="use the scripted provider (no network, no credentials)")
        parser.add_argument("--fixtures", help="scripted provider fixture directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revtraits",
        description="Physician trait extraction and analysis pipeline",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a JSONL review corpus into the store")
    _add_common(p)
    p.add_argument("--input", required=True, help="JSONL input file")
    p.add_argument("--export-metadata", help="also write a physician metadata CSV")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="run trait extraction over eligible physicians")
    _add_common(p, corpus_bounds=True, network=True)
    p.add_argument("--framework", choices=["bigfive", "subfive", "both"], required=True)
    p.add_argument("--model", required=True, help="model id (scripted:* runs offline)")
    p.add_argument("--attempt-limit", type=int, default=3)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("judge", help="run the LLM judge over stored extractions")
    _add_common(p, corpus_bounds=True, network=True)
    p.add_argument("--judge-model", help="defaults to REVTRAITS_JUDGE_MODEL")
    p.add_argument("--models", default="", help="comma-separated models to judge")
    p.add_argument("--seed", type=int, default=0, help="blinding shuffle seed")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("evaluate", help="write the model leaderboard")
    _add_common(p)
    p.add_argument("--reference", choices=["judge", "human"], default="judge")
    p.add_argument("--judge-model")
    p.add_argument("--models", default="")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="statistical analysis tables")
    _add_common(p)
    p.add_argument("--model", required=True, help="extraction model backing the profiles")
    p.add_argument("--analysis", default="all",
                   choices=["all", "descriptives", "correlation", "gender",
                            "specialty", "regression", "satisfaction"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cv-seeds", default="0,1,2,3,4")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cluster", help="archetype clustering over Big Five scores")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, help="fixed k (default: elbow selection)")
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--seeds", default="0,1,2")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("report", help="emit per-figure plot data files")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report)

    annotate = sub.add_parser("annotate", help="human annotation service")
    asub = annotate.add_subparsers(dest="annotate_command", required=True)

    p = asub.add_parser("serve", help="run the annotation HTTP service")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--admin-token")
    p.add_argument("--ui-dist", help="static front-end bundle to serve at /")
    p.set_defaults(func=cmd_annotate_serve)

    p = asub.add_parser("add-annotator", help="register an annotator and print a token")
    _add_common(p)
    p.add_argument("--id", required=True)
    p.add_argument("--name")
    p.set_defaults(func=cmd_annotate_add)

    p = asub.add_parser("create-batch", help="create annotation tasks")
    _add_common(p)
    p.add_argument("--physicians", required=True)
    p.add_argument("--traits", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration", action="store_true")
    p.set_defaults(func=cmd_annotate_batch)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RevtraitsError as exc:
        print(json.dumps({"error": {"code": exc.code, "message": str(exc)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
