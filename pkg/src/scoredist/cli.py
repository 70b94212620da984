"""Command-line surface for training, evaluation, scoring, and tuning.

Every subcommand echoes its fully resolved configuration as `# key =
value` header lines before any results, and all randomness derives from
the single --seed value, so a run is reproducible from its output header.

Option resolution: command-line flags override keys from an optional
`--config` file (flat `key = value` lines, `#` comments), which override
built-in defaults. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data_io import (
    DatasetRecord,
    SplitSpec,
    generate_synthetic,
    load_counts_file,
    load_dataset_dir,
    load_mos_file,
    load_record_image,
    save_dataset_dir,
    split,
)
from .distributions import BucketScale, ava_scale, tid_scale
from .errors import DataError, DegenerateInputError, NumericalError
from .images import read_image
from .maxent import MomentTarget, fit_maxent
from .metrics import evaluate, lcc, srcc
from .model import TrainConfig, load_checkpoint, predict, save_checkpoint, train
from .tuner import (
    OperatorGrid,
    TuneProtocol,
    crop_averaged_score,
    default_denoise_grid,
    default_tone_grid,
    tune,
)


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code scheme."""

    def error(self, message):
        raise CliUsageError(message)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok)


def _parse_float_pair(text: str) -> tuple[float, float]:
    parts = [float(tok) for tok in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return parts[0], parts[1]


class _Options:
    """One subcommand's option registry: flags, converters, defaults."""

    def __init__(self, parser: argparse.ArgumentParser):
        self.parser = parser
        self.specs: dict[str, tuple] = {}

    def add(self, name: str, *, type=str, default=None, choices=None, help=None, flag=None):
        flag = flag or "--" + name.replace("_", "-")
        if type is bool:
            self.parser.add_argument(
                flag, dest=name, action=argparse.BooleanOptionalAction, default=None, help=help
            )
        else:
            self.parser.add_argument(
                flag, dest=name, type=type, choices=choices, default=None, help=help
            )
        self.specs[name] = (type, default)

    def add_cli_only(self, *args, **kwargs):
        self.parser.add_argument(*args, **kwargs)

    def resolve(self, args: argparse.Namespace) -> dict:
        """Merge CLI values, config-file values, and built-in defaults."""
        file_cfg = {}
        config_path = getattr(args, "config", None)
        if config_path:
            file_cfg = _read_config_file(Path(config_path))
        resolved = dict(vars(args))
        for name, (conv, default) in self.specs.items():
            value = getattr(args, name)
            if value is None and name in file_cfg:
                raw = file_cfg.pop(name)
                try:
                    value = _parse_bool(raw) if conv is bool else conv(raw)
                except ValueError as exc:
                    raise CliUsageError(f"config key {name}: {exc}") from exc
            if value is None:
                value = default
            resolved[name] = value
        if file_cfg:
            unknown = ", ".join(sorted(file_cfg))
            raise CliUsageError(f"unknown config keys: {unknown}")
        return resolved


def _read_config_file(path: Path) -> dict[str, str]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliUsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _echo_header(subcommand: str, resolved: dict) -> None:
    print(f"# subcommand = {subcommand}")
    for key in sorted(resolved):
        if key in ("config", "func", "subcommand"):
            continue
        value = resolved[key]
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        print(f"# {key} = {value}")


def _scale_for(name: str) -> BucketScale:
    return ava_scale() if name == "ava" else tid_scale()


def _add_dataset_opts(opts: _Options):
    opts.add("data", help="dataset directory, or a counts/mos label file")
    opts.add("data_format", choices=["counts", "mos"], help="label file format")
    opts.add("images_dir", help="directory holding PGM/PPM images for label files")
    opts.add("scale", default="ava", choices=["ava", "tid"], help="bucket scale")
    opts.add(
        "rescale_from",
        type=_parse_float_pair,
        help="lo,hi source range to map affinely onto the scale (mos files)",
    )


def _load_dataset(resolved: dict) -> list[DatasetRecord]:
    if not resolved.get("data"):
        raise CliUsageError("--data is required")
    data = Path(resolved["data"])
    scale = _scale_for(resolved["scale"])
    if data.is_dir():
        return load_dataset_dir(data, scale)
    fmt = resolved.get("data_format")
    images_dir = resolved.get("images_dir")
    if fmt == "counts":
        return load_counts_file(data, images_dir=images_dir)
    if fmt == "mos":
        return load_mos_file(
            data, scale, images_dir=images_dir, rescale_from=resolved.get("rescale_from")
        )
    raise CliUsageError("--data-format {counts,mos} is required when --data is a file")


def _dataset_pixels(records):
    try:
        return [load_record_image(r) for r in records]
    except DataError as exc:
        raise DataError(f"{exc} (label files need --images-dir to locate pixels)") from exc


def _add_train_opts(opts: _Options):
    opts.add("epochs", type=int, default=20)
    opts.add("batch_size", type=int, default=32)
    opts.add("lr_backbone", type=float, default=3e-7)
    opts.add("lr_head", type=float, default=3e-6)
    opts.add("momentum", type=float, default=0.9)
    opts.add("dropout", type=float, default=0.75)
    opts.add("decay_factor", type=float, default=0.95)
    opts.add("decay_every", type=int, default=10)
    opts.add("resize_to", type=int, default=256)
    opts.add("crop_to", type=int, default=224)
    opts.add("hflip", type=bool, default=True)
    opts.add("loss", default="emd", choices=["emd", "cross_entropy"])
    opts.add("hidden", type=_parse_int_list, default=(64, 64), help="MLP widths, e.g. 64,64")


def _train_config(resolved: dict) -> TrainConfig:
    return TrainConfig(
        epochs=resolved["epochs"],
        lr_backbone=resolved["lr_backbone"],
        lr_head=resolved["lr_head"],
        momentum=resolved["momentum"],
        dropout_rate=resolved["dropout"],
        decay_factor=resolved["decay_factor"],
        decay_every_epochs=resolved["decay_every"],
        batch_size=resolved["batch_size"],
        resize_to=resolved["resize_to"],
        crop_to=resolved["crop_to"],
        hflip=resolved["hflip"],
        seed=resolved["seed"],
        loss=resolved["loss"],
        hidden=tuple(resolved["hidden"]),
    )


def _write_json(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def cmd_train(resolved: dict) -> int:
    if not resolved.get("model"):
        raise CliUsageError("--model output path is required")
    records = _load_dataset(resolved)
    images = _dataset_pixels(records)
    config = _train_config(resolved)
    params, trace = train(images, [r.gt for r in records], config)
    save_checkpoint(params, resolved["model"], config)
    trace_path = resolved.get("trace") or resolved["model"] + ".trace.csv"
    lines = ["epoch,loss"] + [f"{i},{loss!r}" for i, loss in enumerate(trace)]
    Path(trace_path).write_text("\n".join(lines) + "\n")
    print(f"trained on {len(records)} examples for {config.epochs} epochs")
    if trace:
        print(f"final epoch loss = {trace[-1]:.6f}")
    print(f"checkpoint written to {resolved['model']}")
    print(f"loss trace written to {trace_path}")
    return 0


def cmd_eval(resolved: dict) -> int:
    if not resolved.get("model"):
        raise CliUsageError("--model checkpoint path is required")
    params, _ = load_checkpoint(resolved["model"])
    records = _load_dataset(resolved)
    gt_scale = records[0].gt.scale
    if gt_scale != params.scale:
        raise DataError(
            "dataset scale does not match the model checkpoint scale; "
            "pass the --scale the model was trained with"
        )
    images = _dataset_pixels(records)
    preds = [predict(img, params) for img in images]
    report = evaluate(preds, [r.gt for r in records], cutoff=resolved["cutoff"])
    print(report.to_text())
    _write_json(resolved.get("out"), report.to_json_dict())
    return 0


def _predictions_for_images(resolved: dict):
    params, _ = load_checkpoint(resolved["model"])
    out = []
    for name in resolved["images"]:
        dist = predict(read_image(name), params)
        out.append((name, dist))
    return out


def cmd_score(resolved: dict) -> int:
    if not resolved.get("model"):
        raise CliUsageError("--model checkpoint path is required")
    for name, dist in _predictions_for_images(resolved):
        mass = " ".join(f"{v:.4f}" for v in dist.mass)
        print(f"{name}  {dist.mean():.4f} (+/-{dist.std_dev():.4f})  [{mass}]")
    return 0


def cmd_rank(resolved: dict) -> int:
    if not resolved.get("model"):
        raise CliUsageError("--model checkpoint path is required")
    scored = _predictions_for_images(resolved)
    ordered = sorted(scored, key=lambda pair: -pair[1].mean())
    for place, (name, dist) in enumerate(ordered, start=1):
        print(f"{place:3d}. {name}  {dist.mean():.4f} (+/-{dist.std_dev():.4f})")
    return 0


def cmd_fit_dist(resolved: dict) -> int:
    scale = _scale_for(resolved["scale"])
    targets: list[tuple[str, float, float]] = []
    if resolved.get("mu") is not None or resolved.get("sigma") is not None:
        if resolved.get("mu") is None or resolved.get("sigma") is None:
            raise CliUsageError("--mu and --sigma must be given together")
        targets.append(("target", resolved["mu"], resolved["sigma"]))
    elif resolved.get("data"):
        for rec in load_mos_file(
            resolved["data"], scale, rescale_from=resolved.get("rescale_from")
        ):
            targets.append((rec.meta["id"], rec.meta["mos_mean"], rec.meta["mos_std"]))
    else:
        raise CliUsageError("provide --mu/--sigma or a --data mos file")
    results = []
    for name, mu, sigma in targets:
        sol = fit_maxent(MomentTarget(mu, sigma, scale))
        mass = " ".join(f"{v:.6f}" for v in sol.dist.mass)
        print(
            f"{name}  mu={mu:g} sigma={sigma:g} -> mean={sol.dist.mean():.6f} "
            f"std={sol.dist.std_dev():.6f} lambda1={sol.lambda1:.6g} "
            f"lambda2={sol.lambda2:.6g} iters={sol.iterations} residual={sol.residual:.3g}"
        )
        print(f"  mass [{mass}]")
        results.append(
            {
                "id": name,
                "mu": mu,
                "sigma": sigma,
                "mean": round(sol.dist.mean(), 6),
                "std": round(sol.dist.std_dev(), 6),
                "lambda1": sol.lambda1,
                "lambda2": sol.lambda2,
                "iterations": sol.iterations,
                "residual": sol.residual,
                "mass": [round(v, 6) for v in sol.dist.mass],
            }
        )
    _write_json(resolved.get("out"), {"fits": results})
    return 0


def cmd_tune(resolved: dict) -> int:
    if not resolved.get("model"):
        raise CliUsageError("--model checkpoint path is required")
    if not resolved.get("image"):
        raise CliUsageError("--image is required")
    params, _ = load_checkpoint(resolved["model"])
    img = read_image(resolved["image"])
    grid = default_denoise_grid() if resolved["operator"] == "denoise" else default_tone_grid()
    if resolved.get("axis"):
        axes = dict(grid.axes)
        for text in resolved["axis"]:
            name, _, values = text.partition("=")
            if not values:
                raise CliUsageError(f"--axis expects NAME=V1,V2,..., got {text!r}")
            if name not in axes:
                raise CliUsageError(
                    f"operator {resolved['operator']!r} has no axis {name!r}"
                )
            axes[name] = tuple(float(v) for v in values.split(","))
        grid = OperatorGrid(grid.name, tuple(axes.items()))
    crop_size = resolved.get("crop_size") or min(img.height, img.width)
    protocol = TuneProtocol(
        scorer=lambda view: predict(view, params),
        crop_size=crop_size,
        n_crops=resolved["n_crops"],
        seed=resolved["seed"],
    )
    baseline = crop_averaged_score(img, protocol)
    result = tune(img, grid, protocol)
    print(f"input score: {baseline:.6f}")
    print(result.to_text())
    payload = result.to_json_dict()
    payload["input_score"] = round(baseline, 6)
    _write_json(resolved.get("out"), payload)
    return 0


def cmd_cross_eval(resolved: dict) -> int:
    if not resolved.get("dataset"):
        raise CliUsageError("at least one --dataset NAME=DIR is required")
    names, splits = [], []
    scale = _scale_for(resolved["scale"])
    for text in resolved["dataset"]:
        name, _, path = text.partition("=")
        if not path:
            raise CliUsageError(f"--dataset expects NAME=DIR, got {text!r}")
        records = load_dataset_dir(Path(path), scale)
        names.append(name)
        splits.append(
            split(records, SplitSpec(resolved["test_fraction"], resolved["seed"]))
        )
    config = _train_config(resolved)
    test_sets = []
    for _, test_recs in splits:
        gt_means = [r.gt.mean() for r in test_recs]
        test_sets.append(( _dataset_pixels(test_recs), gt_means))
    lcc_matrix, srcc_matrix = [], []
    for name, (train_recs, _) in zip(names, splits):
        images = _dataset_pixels(train_recs)
        params, _ = train(images, [r.gt for r in train_recs], config)
        lcc_row, srcc_row = [], []
        for test_images, gt_means in test_sets:
            pred_means = [predict(img, params).mean() for img in test_images]
            lcc_row.append(lcc(pred_means, gt_means))
            srcc_row.append(srcc(pred_means, gt_means))
        lcc_matrix.append(lcc_row)
        srcc_matrix.append(srcc_row)
    for label, matrix in (("lcc", lcc_matrix), ("srcc", srcc_matrix)):
        print(f"{label} (rows: train set, cols: test set)")
        header = "".join(f"{n:>12}" for n in names)
        print(f"{'train/test':>12}{header}")
        for name, row in zip(names, matrix):
            cells = "".join(f"{v:>12.6f}" for v in row)
            print(f"{name:>12}{cells}")
    _write_json(
        resolved.get("out"),
        {
            "datasets": names,
            "lcc": [[round(v, 6) for v in row] for row in lcc_matrix],
            "srcc": [[round(v, 6) for v in row] for row in srcc_matrix],
        },
    )
    return 0


def cmd_gen_synth(resolved: dict) -> int:
    if not resolved.get("out"):
        raise CliUsageError("--out directory is required")
    records = generate_synthetic(
        n_base=resolved["n_base"],
        levels=resolved["levels"],
        seed=resolved["seed"],
        size=resolved["size"],
    )
    out = save_dataset_dir(records, resolved["out"])
    print(f"wrote {len(records)} records ({resolved['n_base']} bases x {resolved['levels']} levels) to {out}")
    return 0


def build_parser() -> tuple[_Parser, dict[str, _Options]]:
    parser = _Parser(prog="scoredist", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    registries: dict[str, _Options] = {}

    def new_sub(name: str, help: str) -> _Options:
        p = sub.add_parser(name, help=help)
        opts = _Options(p)
        opts.add_cli_only("--config", default=None, help="flat key = value config file")
        opts.add("seed", type=int, default=0)
        registries[name] = opts
        return opts

    opts = new_sub("train", "train a scoring model on a dataset")
    _add_dataset_opts(opts)
    _add_train_opts(opts)
    opts.add("model", help="checkpoint output path")
    opts.add("trace", help="loss-trace CSV output path")

    opts = new_sub("eval", "evaluate a checkpoint on a test dataset")
    _add_dataset_opts(opts)
    opts.add("model", help="checkpoint path")
    opts.add("cutoff", type=float, default=5.0)
    opts.add("out", help="JSON report output path")

    opts = new_sub("score", "print mean, std, and full distribution per image")
    opts.add("model", help="checkpoint path")
    opts.add_cli_only("images", nargs="+", help="PGM/PPM image paths")

    opts = new_sub("rank", "order images by predicted mean score, descending")
    opts.add("model", help="checkpoint path")
    opts.add_cli_only("images", nargs="+", help="PGM/PPM image paths")

    opts = new_sub("fit-dist", "fit max-entropy distributions to mean/std targets")
    opts.add("mu", type=float, help="target mean")
    opts.add("sigma", type=float, help="target std")
    opts.add("data", help="mos file of id mean std rows")
    opts.add("scale", default="ava", choices=["ava", "tid"])
    opts.add("rescale_from", type=_parse_float_pair)
    opts.add("out", help="JSON output path")

    opts = new_sub("tune", "grid-search an enhancement operator's parameters")
    opts.add("image", help="input image (PGM/PPM)")
    opts.add("model", help="checkpoint path used as the scorer")
    opts.add("operator", default="denoise", choices=["denoise", "tone"])
    opts.add_cli_only("--axis", action="append", default=None, dest="axis",
                      help="override a grid axis: NAME=V1,V2,...")
    opts.add("n_crops", type=int, default=50)
    opts.add("crop_size", type=int)
    opts.add("out", help="JSON report output path")

    opts = new_sub("cross-eval", "train per dataset, evaluate across all test sets")
    opts.add_cli_only("--dataset", action="append", default=None, dest="dataset",
                      help="NAME=DIR dataset directory (repeatable)")
    opts.add("scale", default="ava", choices=["ava", "tid"])
    opts.add("test_fraction", type=float, default=0.2)
    _add_train_opts(opts)
    opts.add("out", help="JSON output path")

    opts = new_sub("gen-synth", "generate a synthetic distortion dataset")
    opts.add("out", help="output dataset directory")
    opts.add("n_base", type=int, default=50)
    opts.add("levels", type=int, default=5)
    opts.add("size", type=int, default=48)

    return parser, registries


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "score": cmd_score,
    "rank": cmd_rank,
    "fit-dist": cmd_fit_dist,
    "tune": cmd_tune,
    "cross-eval": cmd_cross_eval,
    "gen-synth": cmd_gen_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser, registries = build_parser()
    try:
        args = parser.parse_args(argv)
        resolved = registries[args.subcommand].resolve(args)
        _echo_header(args.subcommand, resolved)
        return COMMANDS[args.subcommand](resolved)
    except CliUsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 1
    except (DataError, DegenerateInputError, ValueError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
