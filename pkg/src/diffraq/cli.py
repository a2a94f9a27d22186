"""Command-line pipeline: height-field generation, dataset generation,
training, slice rendering, and slice evaluation.

Every subcommand is deterministic given its flags and seed, echoes its full
effective configuration (JSON, on stderr), and embeds that configuration in
the artifact it writes. Exit codes: 0 success, 2 usage, 3 data/format
error, 4 numeric failure. Physical quantities carry unit-suffixed flag
names (-um).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _echo_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    cfg = json.loads(json.dumps(cfg, sort_keys=True, default=str))
    print(json.dumps({"effective_config": cfg}, sort_keys=True), file=sys.stderr)
    return cfg


def _parse_split(text: str):
    from .sampling import DataSplit

    if text == "none":
        return DataSplit.held_out_slices(())
    if text.startswith("held-out:"):
        slices = tuple(int(s) for s in text[len("held-out:") :].split(",") if s)
        return DataSplit.held_out_slices(slices)
    if text.startswith("random:"):
        return DataSplit.random_fraction(float(text[len("random:") :]))
    raise argparse.ArgumentTypeError(
        f"bad split {text!r}; use 'held-out:4,7,10', 'random:0.73', or 'none'"
    )


def _parse_encoding(text: str):
    try:
        m_uv, m_w = (int(p) for p in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad encoding {text!r}; use 'M_UV,M_W'") from exc
    return m_uv, m_w


def cmd_gen_heightfield(args) -> int:
    from . import heightfield as hfm

    cfg = _echo_config(args)
    if args.kind == "blazed":
        hf = hfm.generate_blazed(args.period_um, args.height_um, args.extent_um, args.samples)
    elif args.kind == "cd":
        hf = hfm.generate_synthetic_cd(
            args.track_pitch_um, args.pit_depth_um, args.bit_length_um,
            args.extent_um, args.samples, args.seed,
        )
    else:
        hf = hfm.generate_random(args.max_height_um, args.extent_um, args.samples, args.seed)
    if args.window_sigma_um is not None:
        hf = hfm.apply_gaussian_window(hf, args.window_sigma_um)
    digest = hfm.save_file(hf, args.out)
    print(json.dumps({"out": args.out, "sha256": digest, "config": cfg}, sort_keys=True))
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    from . import heightfield as hfm, sampling as sm

    cfg = _echo_config(args)
    hf = hfm.load_file(args.heightfield)
    grid = sm.build_dataset(
        hf,
        sm.SamplingScheme(args.scheme),
        args.sigma_s_um,
        args.res_u,
        args.res_v,
        args.res_w,
        epsilon=args.epsilon,
        provenance={"cli": cfg},
    )
    sm.save_file(grid, args.out)
    print(
        json.dumps(
            {
                "out": args.out,
                "invalid_fraction": float(1.0 - grid.valid.mean()),
                "taylor_order": grid.params["taylor_order"],
                "heightfield_id": grid.heightfield_id,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_train(args) -> int:
    from . import neuralnet as nn, sampling as sm
    from .featencode import EncodingSpec
    from .rangetransform import RangeTransformKind, RangeTransformSpec

    cfg = _echo_config(args)
    grid = sm.load_file(args.dataset)
    m_uv, m_w = args.encoding
    if max(grid.res_u, grid.res_v) < 4 and m_uv > 0:
        raise ValueError("dataset resolution too small for a u/v frequency ladder")
    encoding = EncodingSpec.for_grid(
        m_uv, m_w, args.diagonal, max(grid.res_u, grid.res_v), grid.res_w
    )
    transform = RangeTransformSpec(RangeTransformKind.BIT_PLANE_POWER, args.bmax, args.power)
    sizes = nn.build_funnel(encoding.size, args.first_hidden, args.depth, args.ratio)
    model = nn.init_model(
        sizes, encoding, transform, seed=args.seed, activation=args.activation,
        provenance={
            "cli": cfg,
            "dataset_scheme": grid.scheme.value,
            "dataset_res": [grid.res_u, grid.res_v, grid.res_w],
            "dataset_sigma_s": grid.sigma_s,
        },
    )
    config = nn.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        seed=args.seed,
    )
    trained, report = nn.train(grid, args.split, model, config)
    nn.save_file(trained, args.out)
    report_path = args.out + ".report.json"
    with open(report_path, "w") as f:
        json.dump(report.to_json(), f, sort_keys=True, indent=2)
    print(
        json.dumps(
            {
                "out": args.out,
                "report": report_path,
                "parameters": trained.parameter_count,
                "final_train_loss": report.train_loss[-1] if report.train_loss else None,
                "final_test_loss": report.test_loss[-1] if report.test_loss else None,
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def _load_slice_source(args):
    """Dispatch --source on file magic: model files shade the network,
    dataset files shade the ground-truth forward model (which needs the
    original height-field to rebuild its spectra)."""
    from . import heightfield as hfm, neuralnet as nn, sampling as sm
    from .errors import FormatError
    from .slicer import ForwardModelSource
    from .waveoptics import CoherenceWindow, precompute_taylor_spectra

    with open(args.source, "rb") as f:
        magic = f.read(8)
    if magic == nn.MAGIC:
        return nn.load_file(args.source)
    if magic == sm.MAGIC:
        grid = sm.load_file(args.source)
        if not args.heightfield:
            raise FormatError("rendering dataset ground truth requires --heightfield")
        hf = hfm.load_file(args.heightfield)
        if hf.content_hash() != grid.heightfield_id:
            raise FormatError("height-field does not match the dataset's heightfield_id")
        spectra = precompute_taylor_spectra(hf, int(grid.params["taylor_order"]))
        window = CoherenceWindow(
            grid.sigma_s, float(grid.params.get("truncation_radius", 3.0))
        )
        return ForwardModelSource(spectra, window)
    raise FormatError(f"--source {args.source!r} is neither a model nor a dataset file")


def cmd_slice(args) -> int:
    from . import slicer
    from .colorimetry import ColorSpace
    from .waveoptics import AttenuationParams

    _echo_config(args)
    source = _load_slice_source(args)
    spec = slicer.SliceSpec(
        theta_i_deg=args.theta_i,
        phi_i_deg=args.phi_i,
        resolution=args.res,
        exposure_ru=args.exposure,
        attenuation=AttenuationParams(ior=args.ior, include_fresnel=args.fresnel),
        output_space=ColorSpace.SRGB,
    )
    image = slicer.render_slice(source, spec)
    base = args.out[:-4] if args.out.endswith(".ppm") else args.out
    ppm_path, raw_path = base + ".ppm", base + ".im"
    slicer.write_ppm(image.image, ppm_path)
    slicer.save_slice_file(image, raw_path)
    print(json.dumps({"ppm": ppm_path, "raw": raw_path}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import metrics, slicer

    _echo_config(args)
    gt = slicer.load_slice_file(args.gt_slice)
    pred = slicer.load_slice_file(args.pred_slice)
    record, _ = slicer.compare_slices(gt, pred)
    if args.report:
        with open(args.report, "w") as f:
            metrics.emit_report(record, f)
    metrics.emit_report(record, sys.stdout)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value defaults file; explicit flags win")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS thread cap (default: all cores; results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    from . import FORMAT_VERSIONS, __version__

    parser = argparse.ArgumentParser(
        prog="diffraq",
        description="Diffractive-reflectance ground truth, compression, and validation pipeline.",
    )
    version = f"diffraq {__version__} (formats: " + ", ".join(
        f"{k}={v}" for k, v in sorted(FORMAT_VERSIONS.items())
    ) + ")"
    parser.add_argument("--version", action="version", version=version)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-heightfield", help="generate a height-field file")
    p.add_argument("kind", choices=["blazed", "cd", "random"])
    p.add_argument("--period-um", type=float, default=2.5)
    p.add_argument("--height-um", type=float, default=0.25)
    p.add_argument("--track-pitch-um", type=float, default=1.6)
    p.add_argument("--pit-depth-um", type=float, default=0.12)
    p.add_argument("--bit-length-um", type=float, default=0.3)
    p.add_argument("--max-height-um", type=float, default=1.0)
    p.add_argument("--extent-um", type=float, default=65.0)
    p.add_argument("--samples", type=int, default=1024)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window-sigma-um", type=float, default=None,
                   help="optional Gaussian damping window (std, um)")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen_heightfield)

    p = sub.add_parser("gen-dataset", help="evaluate the forward model over a key grid")
    p.add_argument("--heightfield", required=True)
    p.add_argument("--scheme", choices=["regular", "simple", "simple-max"], default="simple-max")
    p.add_argument("--sigma-s-um", dest="sigma_s_um", type=float, default=16.25)
    p.add_argument("--res-u", type=int, default=256)
    p.add_argument("--res-v", type=int, default=256)
    p.add_argument("--res-w", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="compress a dataset into a funneled MLP")
    p.add_argument("--dataset", required=True)
    p.add_argument("--encoding", type=_parse_encoding, default=(19, 4),
                   help="M_UV,M_W frequency counts (default 19,4)")
    p.add_argument("--diagonal", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--first-hidden", type=int, default=464)
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--bmax", type=float, default=48.0)
    p.add_argument("--power", type=float, default=8.0)
    p.add_argument("--split", type=_parse_split, default=None,
                   help="'held-out:4,7,10', 'random:0.73', or 'none'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=4096)
    p.add_argument("--activation", choices=["relu", "tanh"], default="relu")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("slice", help="render a BRDF slice from a model or dataset ground truth")
    p.add_argument("--source", required=True, help="model (.nn) or dataset (.ds) file")
    p.add_argument("--heightfield", default=None,
                   help="height-field file (required for dataset ground-truth sources)")
    p.add_argument("--theta-i", type=float, default=0.0)
    p.add_argument("--phi-i", type=float, default=0.0)
    p.add_argument("--res", type=int, default=256)
    p.add_argument("--exposure", type=float, default=2000.0)
    p.add_argument("--ior", type=float, default=1.5)
    p.add_argument("--fresnel", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out", required=True, help="output base path (writes .ppm and .im)")
    _add_common(p)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("eval", help="compare a predicted slice against ground truth")
    p.add_argument("--gt-slice", required=True)
    p.add_argument("--pred-slice", required=True)
    p.add_argument("--report", default=None, help="also write the record to this path")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


def _apply_threads(argv) -> None:
    """Cap BLAS threads before numpy loads; thread count never changes results."""
    if "--threads" in argv:
        idx = argv.index("--threads")
        if idx + 1 < len(argv):
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = argv[idx + 1]


def _apply_config_file(parser, argv):
    """Load key=value defaults from --config; explicit flags override them."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        parser.error("--config needs a path")
    path = argv[idx + 1]
    try:
        with open(path) as f:
            pairs = dict(
                (part.strip() for part in line.split("=", 1))
                for line in f
                if line.strip() and not line.strip().startswith("#")
            )
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config file {path!r}: {exc}")
    subparsers = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    for sub in set(subparsers.values()):
        defaults = {}
        for act in sub._actions:  # noqa: SLF001
            key = act.dest.replace("_", "-")
            raw = pairs.get(key, pairs.get(act.dest))
            if raw is None:
                continue
            if isinstance(act, argparse.BooleanOptionalAction):
                defaults[act.dest] = raw.lower() in ("1", "true", "yes", "on")
            elif act.type is not None:
                defaults[act.dest] = act.type(raw)
            else:
                defaults[act.dest] = raw
        if defaults:
            sub.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_threads(argv)
    from .errors import FormatError, NumericError, OutOfBandError

    parser = build_parser()
    _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    if args.command == "train":
        from .sampling import DataSplit
        if args.split is None:
            args.split = DataSplit.held_out_slices((4, 7, 10))
        if args.ratio is None:
            from .neuralnet import GOLDEN_RATIO_RECIPROCAL
            args.ratio = GOLDEN_RATIO_RECIPROCAL
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError) as exc:
        print(f"diffraq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, OutOfBandError, FloatingPointError) as exc:
        print(f"diffraq: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"diffraq: invalid arguments: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
