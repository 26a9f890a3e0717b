"""Command-line interface: training, inference, reporting, and serving.

Parsing maps are picked up automatically when a sidecar `<stem>.seg.png`
sits next to an input image, or looked up by stem inside a directory given
with `--segs`; without either, style encoding falls back to the unmasked
image.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from PIL import Image

from . import inference
from .config import TrainConfig, desk_config
from .data import (
    IMAGE_SUFFIXES,
    MAKEUP,
    default_dilation_px,
    derive_region_masks,
    load_parsing_map,
    preprocess_image,
)
from .errors import SlganError


def _find_seg(image_path: Path, segs_dir: Path | None) -> Path | None:
    sidecar = image_path.with_name(image_path.stem + ".seg.png")
    if sidecar.exists():
        return sidecar
    if segs_dir is not None:
        for suffix in IMAGE_SUFFIXES:
            candidate = segs_dir / (image_path.stem + suffix)
            if candidate.exists():
                return candidate
    return None


def _load_image(path: Path, resolution: int):
    return preprocess_image(path, resolution)


def _load_masks(image_path: Path, segs_dir: Path | None, resolution: int):
    seg_path = _find_seg(image_path, segs_dir)
    if seg_path is None:
        return None
    seg = load_parsing_map(seg_path, resolution)
    return derive_region_masks(seg, default_dilation_px(resolution))


def _save_image(tensor, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(inference.to_uint8(tensor)).save(path)
    return path


def _bundle(args) -> inference.InferenceBundle:
    return inference.load_inference_bundle(args.bundle)


def cmd_train(args) -> int:
    from .training import fit

    config = TrainConfig.from_file(args.config) if args.config else desk_config()
    final = fit(config, args.data, args.out, resume=args.resume)
    print(f"final checkpoint: {final}")
    print(f"loss log: {Path(args.out) / 'loss_log.tsv'}")
    return 0


def cmd_transfer(args) -> int:
    bundle = _bundle(args)
    res = bundle.config.resolution
    source = _load_image(args.source, res)
    reference = _load_image(args.reference, res)
    out = inference.transfer(
        source, reference, bundle,
        ref_masks=_load_masks(args.reference, args.segs, res),
        src_masks=_load_masks(args.source, args.segs, res),
        alpha=args.alpha,
    )
    print(_save_image(out, args.out))
    return 0


def cmd_remove(args) -> int:
    bundle = _bundle(args)
    res = bundle.config.resolution
    source = _load_image(args.source, res)
    kwargs = {}
    if args.reference is not None:
        kwargs["reference"] = _load_image(args.reference, res)
        kwargs["ref_masks"] = _load_masks(args.reference, args.segs, res)
    else:
        kwargs["seed"] = args.seed
    out = inference.remove(source, bundle, **kwargs)
    print(_save_image(out, args.out))
    return 0


def cmd_interpolate(args) -> int:
    if len(args.refs) != len(args.weights):
        print(f"error: {len(args.refs)} references but {len(args.weights)} weights",
              file=sys.stderr)
        return 2
    bundle = _bundle(args)
    res = bundle.config.resolution
    source = _load_image(args.source, res)
    codes = [
        inference.encode_reference_style(
            bundle, _load_image(ref, res), MAKEUP,
            _load_masks(ref, args.segs, res))
        for ref in args.refs
    ]
    style = inference.interpolate_styles(codes, args.weights)
    out = inference.generate(bundle, source, style)
    print(_save_image(out, args.out))
    return 0


def cmd_sweep(args) -> int:
    bundle = _bundle(args)
    res = bundle.config.resolution
    source = _load_image(args.source, res)
    reference = _load_image(args.reference, res)
    frames = inference.strength_sweep(
        source, reference, args.steps, bundle,
        src_masks=_load_masks(args.source, args.segs, res),
        ref_masks=_load_masks(args.reference, args.segs, res),
    )
    for i, frame in enumerate(frames):
        print(_save_image(frame, args.outdir / f"frame_{i:03d}.png"))
    return 0


def cmd_report(args) -> int:
    from .report import write_report

    written = write_report(args.log, args.outdir, trailing=args.trailing)
    for fig in written["figures"]:
        print(fig)
    print(written["summary"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    bundle = inference.load_inference_bundle(args.bundle) if args.bundle else None
    uvicorn.run(create_app(bundle), host=args.host, port=args.port)
    return 0


def cmd_synth_data(args) -> int:
    from .synthetic import write_synthetic_dataset

    root = write_synthetic_dataset(args.out, per_domain=args.per_domain,
                                   resolution=args.resolution, seed=args.seed)
    print(root)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slgan",
                                     description="makeup transfer and removal")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="optimize a model on a dataset")
    p.add_argument("--config", type=Path, help="key=value config file")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--resume", type=Path)
    p.set_defaults(func=cmd_train)

    def io_parser(name, help_text):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--bundle", type=Path, required=True,
                       help="trained checkpoint")
        q.add_argument("--segs", type=Path,
                       help="directory of parsing maps keyed by image stem")
        return q

    p = io_parser("transfer", "apply a reference's makeup to a source")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--alpha", type=float,
                   help="blend toward the reference style, 0..1")
    p.set_defaults(func=cmd_transfer)

    p = io_parser("remove", "translate toward the non-makeup domain")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--reference", type=Path,
                   help="style-guided removal reference")
    g.add_argument("--seed", type=int, default=0,
                   help="latent-guided removal seed")
    p.set_defaults(func=cmd_remove)

    p = io_parser("interpolate", "mix K reference styles")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--refs", type=Path, nargs="+", required=True)
    p.add_argument("--weights", type=float, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_interpolate)

    p = io_parser("sweep", "light-to-heavy strength filmstrip")
    p.add_argument("--source", type=Path, required=True)
    p.add_argument("--reference", type=Path, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--outdir", type=Path, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render loss figures and a summary table")
    p.add_argument("--log", type=Path, required=True, help="loss_log.tsv path")
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--trailing", type=int, default=50,
                   help="trailing-window size for the summary")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the studio HTTP service")
    p.add_argument("--bundle", type=Path)
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("synth-data", help="write a synthetic fixture dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--per-domain", type=int, default=3)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SlganError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
