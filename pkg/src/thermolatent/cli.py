"""Command-line front end: synth, pca, train, encode, metrics, pipeline.

Every subcommand is deterministic for fixed inputs, configs, and seeds, and
all reports are written as canonical JSON so reruns are byte-identical.
Errors leave through stderr as one JSON line with a machine-readable code.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import ae, metrics, pca, pgmio, sequence, synth
from .errors import ConfigError, ThermoLatentError

log = logging.getLogger("thermolatent")

PGM_EXPORT_CAP = 8


def _write_json(path: Path, obj) -> None:
    # allow_nan=False: reports must stay parseable by strict JSON readers
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n")


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _export_images(images, outdir: Path, stem: str) -> None:
    """First PGM_EXPORT_CAP images as 16-bit PGM previews, all of them as one f32 blob."""
    for k, img in enumerate(images[:PGM_EXPORT_CAP], start=1):
        pgmio.write_pgm(outdir / f"{stem}_{k:02d}.pgm", pgmio.quantize_unit(img), maxval=65535)
    stack = np.ascontiguousarray(np.stack(images), dtype="<f4")
    (outdir / f"{stem}s.f32").write_bytes(stack.tobytes())


def _export_flags(config: dict) -> dict:
    section = dict(config.get("export", {}))
    return {
        "component_images": bool(section.get("component_images", True)),
        "latent_images": bool(section.get("latent_images", True)),
        "model_files": bool(section.get("model_files", True)),
        "reports": bool(section.get("reports", True)),
    }


def run_synth(spec: synth.SpecimenSpec, out_tsf: Path) -> None:
    seq, truth = synth.generate(spec)
    out_tsf.parent.mkdir(parents=True, exist_ok=True)
    sequence.write_sequence(out_tsf, seq)
    stem = out_tsf.with_suffix("")
    pgmio.write_pgm(Path(f"{stem}_defects.pgm"), truth.defect_mask.bits)
    pgmio.write_pgm(Path(f"{stem}_sound.pgm"), truth.sound_mask.bits)
    mask_files = []
    for i, dm in enumerate(truth.defect_masks, start=1):
        name = f"{stem.name}_defect_{i:02d}.pgm"
        pgmio.write_pgm(stem.parent / name, dm.bits)
        mask_files.append(name)
    _write_json(
        Path(f"{stem}_truth.json"),
        {
            "specimen": synth.spec_to_dict(spec),
            "defect_union_mask": f"{stem.name}_defects.pgm",
            "sound_mask": f"{stem.name}_sound.pgm",
            "defect_masks": mask_files,
            "defect_depths_mm": [d.depth_mm for d in spec.defects],
        },
    )
    log.info("synth: wrote %s (%d frames of %dx%d)", out_tsf, seq.n_t, seq.n_y, seq.n_x)


def run_pca(in_tsf: Path, outdir: Path, d: int | None, export: dict | None = None) -> None:
    export = export or _export_flags({})
    seq = sequence.load_sequence(in_tsf)
    m, _ = sequence.standardize(sequence.reshape_raster(seq))
    model = pca.fit_pca(m, d)
    outdir.mkdir(parents=True, exist_ok=True)
    if export["model_files"]:
        pca.save_model(outdir / "model.pca1", model)
    if export["component_images"]:
        for k in range(1, min(model.d, PGM_EXPORT_CAP) + 1):
            img = metrics.normalize_unit(pca.component_image(m, model, k).values)
            pgmio.write_pgm(outdir / f"component_{k:02d}.pgm", pgmio.quantize_unit(img), maxval=65535)
    log.info("pca: d=%d, exported %d component images", model.d, min(model.d, PGM_EXPORT_CAP) if export["component_images"] else 0)


def _train_configs(config: dict, n_t: int, seed: int | None, alpha: float | None):
    net_section = dict(config.get("network", {}))
    net_section.pop("input_len", None)
    net_cfg = ae.NetworkConfig(
        input_len=n_t,
        encoder_widths=tuple(net_section.get("encoder_widths", (256, 128, 64))),
        decoder_widths=tuple(net_section["decoder_widths"]) if net_section.get("decoder_widths") else None,
        seed=int(net_section.get("seed", 0)),
    )
    train_cfg = ae.TrainConfig.from_dict(config.get("train", {}))
    if seed is not None:
        net_cfg = replace(net_cfg, seed=seed)
        train_cfg = replace(train_cfg, seed=seed)
    if alpha is not None:
        train_cfg = replace(train_cfg, alpha=alpha)
    return net_cfg, train_cfg


def run_train(in_tsf: Path, outdir: Path, config: dict, seed: int | None, alpha: float | None) -> None:
    seq = sequence.load_sequence(in_tsf)
    m, _ = sequence.standardize(sequence.reshape_raster(seq))
    net_cfg, train_cfg = _train_configs(config, seq.n_t, seed, alpha)
    d = net_cfg.latent_dim
    if d > seq.n_t:
        raise ConfigError(f"latent width {d} exceeds frame count {seq.n_t}")
    model = pca.fit_pca(m, d)
    targets = pca.project_latents(m, model)
    net, report = ae.train(m, targets, net_cfg, train_cfg)
    export = _export_flags(config)
    outdir.mkdir(parents=True, exist_ok=True)
    if export["model_files"]:
        ae.save_network(outdir / "model.pgae", net)
    if export["latent_images"]:
        images = ae.latent_images(net, m, seq.image_shape)
        _export_images(images, outdir, "latent")
    if export["reports"]:
        _write_json(
            outdir / "report.json",
            {
                "mode": "plain-ae-ablation" if train_cfg.alpha == 0.0 else "pca-guided",
                "network": net_cfg.to_dict(),
                "train": train_cfg.to_dict(),
                "epochs_run": report.n_epochs,
                "converged_early": report.converged_early,
                "total_losses": report.total_losses,
                "rec_losses": report.rec_losses,
                "kd_losses": report.kd_losses,
                "final_mean_cosine": report.final_mean_cosine,
                "latent_shape": [d, seq.n_y, seq.n_x],
            },
        )
    log.info("train: %d epochs, final mean cosine %.4f", report.n_epochs, report.final_mean_cosine)


def run_encode(in_tsf: Path, model_path: Path, outdir: Path) -> None:
    seq = sequence.load_sequence(in_tsf)
    m, _ = sequence.standardize(sequence.reshape_raster(seq))
    net = ae.load_network(model_path)
    outdir.mkdir(parents=True, exist_ok=True)
    images = ae.latent_images(net, m, seq.image_shape)
    _export_images(images, outdir, "latent")
    log.info("encode: wrote %d latent images", len(images))


def run_metrics(
    image_path: Path,
    defect_paths: list[Path],
    sound_path: Path | None,
    out_json: Path,
    pred_path: Path | None,
    truth_path: Path | None,
    normalize: bool,
) -> None:
    pred = metrics.read_mask(pred_path, role="prediction") if pred_path else None
    truth = metrics.read_mask(truth_path, role="ground-truth") if truth_path else None
    if defect_paths:
        if sound_path is None:
            raise ConfigError("--sound is required with --defect")
        img = pgmio.read_pgm(image_path).astype(np.float64)
        defects = [metrics.read_mask(p, role="defect") for p in defect_paths]
        sound = metrics.read_mask(sound_path, role="sound")
        labels = [p.stem for p in defect_paths]
        report = metrics.score_image(
            img, defects, sound, pred=pred, truth=truth, labels=labels, normalize=normalize
        )
    elif pred is not None and truth is not None:
        report = metrics.MetricReport(contrast=None, snr_db=None, iou=metrics.iou(pred, truth))
    else:
        raise ConfigError("need --defect/--sound masks, or --pred/--truth masks, or both")
    out_json.parent.mkdir(parents=True, exist_ok=True)
    _write_json(out_json, report.to_dict())
    log.info("metrics: wrote %s", out_json)


def run_pipeline(config: dict, outdir: Path, seed: int | None, alpha: float | None) -> None:
    spec = synth.spec_from_dict(config.get("specimen", {}))
    if seed is not None:
        spec = replace(spec, seed=seed)
    export = _export_flags(config)
    tsf = outdir / "synth" / "specimen.tsf"
    run_synth(spec, tsf)
    net_cfg, _ = _train_configs(config, spec.n_frames, seed, alpha)
    run_pca(tsf, outdir / "pca", net_cfg.latent_dim, export=export)
    run_train(tsf, outdir / "train", config, seed, alpha)
    if not (export["latent_images"] and export["reports"] and spec.defects):
        return  # nothing to score, or scoring output disabled
    defect_paths = [
        tsf.parent / f"specimen_defect_{i:02d}.pgm" for i in range(1, len(spec.defects) + 1)
    ]
    run_metrics(
        outdir / "train" / "latent_01.pgm",
        defect_paths,
        tsf.parent / "specimen_sound.pgm",
        outdir / "metrics" / "report.json",
        pred_path=None,
        truth_path=None,
        normalize=True,
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermolatent",
        description="Structured latent imaging for active-thermography sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, seed=True, alpha=False, config=False):
        p.add_argument("--threads", type=int, default=0, help="BLAS threads (0 = auto, 1 = reference mode)")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override every seed in the config")
        if alpha:
            p.add_argument("--alpha", type=float, default=None, help="override the distillation weight")
        if config:
            p.add_argument("--config", type=Path, default=None, help="JSON configuration file")

    p = sub.add_parser("synth", help="render a synthetic specimen to TSF + masks + ground truth")
    p.add_argument("--config", type=Path, required=True, help="specimen JSON")
    p.add_argument("--output", type=Path, required=True, help="output TSF path")
    common(p)

    p = sub.add_parser("pca", help="standardize a TSF, fit PCA, export component images")
    p.add_argument("--input", type=Path, required=True, help="input TSF")
    p.add_argument("--output", type=Path, required=True, help="output directory")
    p.add_argument("--latent", type=int, default=None, help="component count (default 64, capped at N_t)")
    common(p, seed=False, config=True)

    p = sub.add_parser("train", help="train the PCA-aligned autoencoder and export latent images")
    p.add_argument("--input", type=Path, required=True, help="input TSF")
    p.add_argument("--output", type=Path, required=True, help="output directory")
    common(p, alpha=True, config=True)

    p = sub.add_parser("encode", help="apply a trained network to a TSF and export latent images")
    p.add_argument("--input", type=Path, required=True, help="input TSF")
    p.add_argument("--model", type=Path, required=True, help="trained .pgae model")
    p.add_argument("--output", type=Path, required=True, help="output directory")
    common(p, seed=False)

    p = sub.add_parser("metrics", help="score an image against region masks")
    p.add_argument("--input", type=Path, required=True, help="image to score (PGM)")
    p.add_argument("--defect", type=Path, action="append", default=[], help="defect mask PGM (repeatable)")
    p.add_argument("--sound", type=Path, default=None, help="sound-region mask PGM")
    p.add_argument("--pred", type=Path, default=None, help="predicted segmentation mask (for IoU)")
    p.add_argument("--truth", type=Path, default=None, help="ground-truth segmentation mask (for IoU)")
    p.add_argument("--raw", action="store_true", help="skip min-max normalization (audit mode)")
    p.add_argument("--output", type=Path, required=True, help="output report JSON")
    common(p, seed=False)

    p = sub.add_parser("pipeline", help="synth -> pca -> train -> metrics in one run")
    p.add_argument("--config", type=Path, required=True, help="pipeline JSON")
    p.add_argument("--output", type=Path, required=True, help="output directory")
    common(p, alpha=True)

    return parser


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "synth":
        spec = synth.spec_from_dict(_load_json(args.config))
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        run_synth(spec, args.output)
    elif args.command == "pca":
        config = _load_json(args.config) if args.config else {}
        run_pca(args.input, args.output, args.latent, export=_export_flags(config))
    elif args.command == "train":
        config = _load_json(args.config) if args.config else {}
        run_train(args.input, args.output, config, args.seed, args.alpha)
    elif args.command == "encode":
        run_encode(args.input, args.model, args.output)
    elif args.command == "metrics":
        run_metrics(
            args.input, args.defect, args.sound, args.output, args.pred, args.truth, not args.raw
        )
    elif args.command == "pipeline":
        run_pipeline(_load_json(args.config), args.output, args.seed, args.alpha)
    else:  # pragma: no cover - argparse enforces the choices
        raise ConfigError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=os.environ.get("THERMOLATENT_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = _build_parser().parse_args(argv)
    try:
        threads = getattr(args, "threads", 0)
        if threads > 0:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                _dispatch(args)
        else:
            _dispatch(args)
    except ThermoLatentError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(json.dumps({"error": "file-not-found", "message": str(exc)}), file=sys.stderr)
        return 1
    except ValueError as exc:
        print(json.dumps({"error": "invalid-argument", "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
