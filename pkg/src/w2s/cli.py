"""Command-line entry points for every pipeline stage."""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from PIL import Image

from .annotator.client import BackendConfig, make_client
from .annotator.engine import RetryPolicy
from . import audit as audit_mod
from .builder import GroundingSample
from .evalmetrics import Prediction, evaluate_detection, evaluate_rsvg
from .ingest.dialects import SourceDatasetDescriptor
from .ingest.tiling import DEFAULT_MIN_VISIBLE, DEFAULT_OVERLAP, DEFAULT_TILE
from .pipeline import (
    annotate_run,
    build_run,
    ingest_sources,
    postprocess_run,
    preprocess_run,
    render_highlight,
    stats_run,
)
from .postprocess import DEFAULT_MATCH_THRESHOLD, EmbeddingSimilarity, ExactSimilarity
from .records import read_jsonl
from .review.store import ReviewStore
from .splits import SplitSpec

PASS_THROUGH = ("records.jsonl", "attributes.jsonl", "captions.jsonl",
                "failures.jsonl", "captions_catalog.jsonl", "pairs.jsonl")


def _stage_dir(in_dir: str, out_dir: str | None) -> Path:
    """Stages operate on a run directory; with a distinct --out the input
    artifacts are copied forward first."""
    src = Path(in_dir)
    if out_dir is None or Path(out_dir) == src:
        return src
    dst = Path(out_dir)
    dst.mkdir(parents=True, exist_ok=True)
    for name in PASS_THROUGH:
        if (src / name).exists():
            shutil.copy2(src / name, dst / name)
    for sub in ("images", "crops"):
        if (src / sub).exists() and not (dst / sub).exists():
            shutil.copytree(src / sub, dst / sub)
    return dst


def _load_json(path: str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def cmd_ingest(args) -> int:
    descriptors = []
    for cfg_path in args.dataset:
        cfg = _load_json(cfg_path)
        annotation_root = Path(cfg.pop("annotation_root", cfg.get("image_root", "")))
        if not annotation_root.is_absolute():
            annotation_root = Path(cfg_path).parent / annotation_root
        descriptor = SourceDatasetDescriptor.from_json(cfg)
        if descriptor.image_root and not Path(descriptor.image_root).is_absolute():
            descriptor.image_root = str(Path(cfg_path).parent / descriptor.image_root)
        descriptors.append((descriptor, annotation_root))
    records = ingest_sources(descriptors, args.out, tile=args.tile,
                             overlap=args.overlap, min_visible=args.min_visible)
    n_inst = sum(len(r.instances) for r in records)
    print(f"ingested {len(records)} tiles, {n_inst} instances -> {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    run_dir = _stage_dir(getattr(args, "in"), args.out)
    rows = preprocess_run(run_dir)
    print(f"preprocessed {len(rows)} instances -> {run_dir}")
    return 0


def _backend_from_args(cfg_path: str | None) -> BackendConfig:
    if cfg_path:
        return BackendConfig.from_json(_load_json(cfg_path))
    return BackendConfig.from_env()


def cmd_annotate(args) -> int:
    run_dir = _stage_dir(getattr(args, "in"), args.out)
    config = _backend_from_args(args.backend)
    client = make_client(config)
    captions, failures = annotate_run(run_dir, client, concurrency=args.concurrency,
                                      retry=RetryPolicy(base_delay=args.retry_delay))
    print(f"annotated {len(captions)} instances ({len(failures)} failures) -> {run_dir}")
    return 0


def cmd_postprocess(args) -> int:
    run_dir = _stage_dir(getattr(args, "in"), args.out)
    if args.similarity == "embedding":
        backend = EmbeddingSimilarity(endpoint=args.embedding_url)
    else:
        backend = ExactSimilarity()
    captions, pairs = postprocess_run(run_dir, backend, threshold=args.threshold)
    print(f"generated {len(captions)} captions, {len(pairs)} pairs -> {run_dir}")
    return 0


def cmd_build(args) -> int:
    run_dir = _stage_dir(getattr(args, "in"), args.out)
    spec = SplitSpec.from_json(_load_json(args.splits)) if args.splits else SplitSpec()
    manifest = build_run(run_dir, spec, seed=args.seed, quota=args.quota,
                         val_fraction_zsd=args.val_fraction)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return 0


def cmd_stats(args) -> int:
    report = stats_run(getattr(args, "in"))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


PROTOCOL_KINDS = {
    "detection": lambda s: s.task == "detection" or s.caption_kind == "vocab",
    "phrase": lambda s: s.caption_kind.startswith("phrase"),
    "sentence": lambda s: s.caption_kind.startswith("sent"),
    "rsvg": lambda s: s.task == "grounding",
}


def _load_gt_samples(gt_path: Path) -> list[GroundingSample]:
    if gt_path.is_dir():
        for candidate in (gt_path / "dataset" / "dataset.jsonl", gt_path / "dataset.jsonl"):
            if candidate.exists():
                gt_path = candidate
                break
    return [GroundingSample.from_dict(d) for d in read_jsonl(gt_path)]


def cmd_eval(args) -> int:
    samples = _load_gt_samples(Path(args.gt))
    keep = PROTOCOL_KINDS[args.protocol]
    samples = [s for s in samples if keep(s)]
    if args.split:
        samples = [s for s in samples if args.split in s.splits]
    if not samples:
        print("no ground-truth samples match the protocol", file=sys.stderr)
        return 1
    sample_ids = {s.id for s in samples}
    preds = [Prediction.from_dict(d) for d in read_jsonl(args.pred)]
    preds = [p for p in preds if p.sample_id in sample_ids]
    if args.protocol == "rsvg":
        bad = [s.id for s in samples if len(s.boxes) != 1]
        if bad:
            print(f"rsvg protocol requires exactly one GT box per sample; "
                  f"violated by {bad[:5]}", file=sys.stderr)
            return 1
        report = evaluate_rsvg(preds, {s.id: s.boxes[0] for s in samples})
    else:
        report = evaluate_detection(preds, {s.id: list(s.boxes) for s in samples})
    payload = {"protocol": args.protocol, "samples": len(samples), **report.to_dict()}
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_audit(args) -> int:
    run_dir = Path(args.dataset)
    from .annotator.engine import SentenceCaptions
    captions = [SentenceCaptions.from_dict(d) for d in read_jsonl(run_dir / "captions.jsonl")]
    crop_rows = {r["instance_id"]: r for r in read_jsonl(run_dir / "attributes.jsonl")}
    sampled = audit_mod.sample_audit_set(captions, args.n, args.seed)

    judge_cfg = _load_json(args.judge) if args.judge else {"kind": "mock"}
    if judge_cfg.get("kind") == "mock":
        client = audit_mod.MockJudgeClient()
        judge_id = "mock-judge"
    else:
        client = make_client(BackendConfig.from_json(judge_cfg))
        judge_id = judge_cfg.get("model", "judge")

    import io
    verdicts = []
    for sc in sampled:
        row = crop_rows.get(sc.instance_id)
        if row is None:
            continue
        with Image.open(run_dir / row["self_crop"]) as im:
            self_img = render_highlight(im.convert("RGB"), tuple(row["self_box"]))
        with Image.open(run_dir / row["fg_crop"]) as im:
            fg_img = render_highlight(im.convert("RGB"), tuple(row["fg_box"]))
        crops = {}
        for attribute in audit_mod.AUDITED_ATTRIBUTES:
            img = fg_img if attribute == "relative_position" else self_img
            buf = io.BytesIO()
            img.save(buf, format="PNG")
            crops[attribute] = buf.getvalue()
        attrs = sc.attributes.to_dict()
        for attribute in audit_mod.AUDITED_ATTRIBUTES:
            value = attrs.get(attribute)
            if not value:
                continue
            verdicts.append(audit_mod.judge_attribute(
                client, judge_id, crops[attribute], sc.instance_id, attribute, value))
    report = audit_mod.audit_report(verdicts)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_serve_review(args) -> int:
    import uvicorn
    from .review.service import create_app

    data_dir = Path(args.data)
    candidates = None
    for candidate in (data_dir, data_dir / "review_candidates.jsonl",
                      data_dir / "dataset" / "review_candidates.jsonl"):
        if candidate.is_file():
            candidates = candidate
            break
    if candidates is None:
        print(f"no review_candidates.jsonl under {data_dir}", file=sys.stderr)
        return 1
    store = ReviewStore.from_candidates_file(candidates, args.log)
    base = data_dir if data_dir.is_dir() else candidates.parent
    image_root = Path(args.image_root) if args.image_root else \
        resolve_image_root(base, store)
    app = create_app(store, image_root=image_root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def resolve_image_root(base: Path, store: ReviewStore) -> Path:
    """Candidate image paths are relative to the run directory, which may be
    the data dir itself or its parent (when --data points at <run>/dataset);
    probe with the first item."""
    probe = next((i.image_path for i in store.items.values() if i.image_path), None)
    if probe is not None and not (base / probe).exists() \
            and (base.parent / probe).exists():
        return base.parent
    return base


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="w2s",
                                     description="word-to-sentence grounding dataset engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse + tile source datasets")
    p.add_argument("--dataset", action="append", required=True,
                   help="descriptor JSON (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--tile", type=int, default=DEFAULT_TILE)
    p.add_argument("--overlap", type=int, default=DEFAULT_OVERLAP)
    p.add_argument("--min-visible", type=float, default=DEFAULT_MIN_VISIBLE)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("preprocess", help="attribute priors + crops")
    p.add_argument("--in", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("annotate", help="caption instances via the chat backend")
    p.add_argument("--in", required=True)
    p.add_argument("--backend", default=None, help="backend config JSON")
    p.add_argument("--concurrency", type=int, default=8)
    p.add_argument("--retry-delay", type=float, default=0.5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("postprocess", help="phrase captions + matching")
    p.add_argument("--in", required=True)
    p.add_argument("--similarity", choices=("exact", "embedding"), default="exact")
    p.add_argument("--embedding-url", default="")
    p.add_argument("--threshold", type=float, default=DEFAULT_MATCH_THRESHOLD)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("build", help="splits + sampling + dataset emission")
    p.add_argument("--in", required=True)
    p.add_argument("--splits", default=None, help="split spec JSON {base:[],novel:[]}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quota", type=int, default=12)
    p.add_argument("--val-fraction", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--in", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--protocol", choices=sorted(PROTOCOL_KINDS), required=True)
    p.add_argument("--split", default="")
    p.add_argument("--report", default="")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("audit", help="judge-model attribute verification")
    p.add_argument("--dataset", required=True, help="run directory")
    p.add_argument("--judge", default=None, help="judge backend config JSON")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default="")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("serve-review", help="curation HTTP service")
    p.add_argument("--data", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--image-root", default="",
                   help="base for relative item image paths (default: probed)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8700)
    p.set_defaults(func=cmd_serve_review)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
