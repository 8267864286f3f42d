"""
Command-line entry point.

    facefit [--config F] [--log-level L] [--log-dir D] [--seed S] <command> ...

Commands: synth-model, synth-corpus, render, fit, train, gradcheck, report,
study, config. FaceFitError exits 1 with a one-line message on stderr; usage errors
exit 2.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

from facefit import __version__
from facefit.energy.weights import ABLATIONS, STAGES, Weights
from facefit.exceptions import ConfigError, FaceFitError
from facefit.landmarks import read_landmarks
from facefit.model.corrective import CorrectiveVariant
from facefit.model.multilevel import MultiLevelModel
from facefit.model.synth import reinitialize_correctives, synth_model
from facefit.optim.corpus import BumpSpec, PatchSpec, load_corpus, synth_corpus
from facefit.optim.fitter import fit_image, initial_pose
from facefit.optim.gradcheck import gradcheck
from facefit.optim.params import ParamVector
from facefit.optim.trainer import run_study, summarize, train_correctives
from facefit.render.camera import CameraIntrinsics
from facefit.render.lighting import SH_C0
from facefit.render.pipeline import Level
from facefit.render.rasterizer import rasterize_preview
from facefit.services import report
from facefit.services.config_service import ConfigService, RunConfig
from facefit.services.image_io import read_image, write_image
from facefit.services.model_store import load_model, save_model
from facefit.services.result_store import load_json, load_params, load_result, save_json, save_params, save_result
from facefit.utils.logging_setup import get_logger, log_error_with_context, setup_application_logging

logger = get_logger("cli")

VARIANTS = [v.value for v in CorrectiveVariant]
ABLATABLE = ["sparse"] + list(ABLATIONS)


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def _dims(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from e
    if any(v < 0 for v in values):
        raise argparse.ArgumentTypeError("dimensions must be >= 0")
    return values


def _model_dims(text: str) -> List[int]:
    values = _dims(text)
    if len(values) != 4:
        raise argparse.ArgumentTypeError("expected m_s,m_e,m_r,C")
    return values


def _add_schedule_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--stage", choices=STAGES, help="stop after pretraining or run both stages")
    parser.add_argument("--pretrain-iterations", type=int)
    parser.add_argument("--finetune-iterations", type=int)
    parser.add_argument("--weights", type=Path, help="key=value weight file applied to the finetune stage")
    parser.add_argument("--ablate", action="append", default=[], choices=ABLATABLE, metavar="TERM",
                        help=f"switch off one energy term (repeatable): {', '.join(ABLATABLE)}")


def _add_corrective_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--hidden-dim", type=int, help="hidden width of the non-linear variants (default C)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facefit", description="Multi-level face model fitting and training")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, default=Path("config.json"), help="run configuration (JSON)")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--log-dir", type=Path)
    parser.add_argument("--seed", type=int, help="seed for every random choice of the command")
    commands = parser.add_subparsers(dest="command", metavar="command")

    p = commands.add_parser("synth-model", help="write a synthetic model archive")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n-vertices", type=int)
    p.add_argument("--dims", type=_model_dims, help="m_s,m_e,m_r,C")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--hidden-dim", type=int)
    p.set_defaults(handler=cmd_synth_model)

    p = commands.add_parser("synth-corpus", help="render a synthetic training corpus")
    p.add_argument("--model", type=Path)
    p.add_argument("--count", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--image-size", type=int)
    p.add_argument("--no-bleed", action="store_true", help="keep a flat gray background")
    p.add_argument("--no-bump", action="store_true", help="skip the out-of-basis geometry bump")
    p.add_argument("--no-patch", action="store_true", help="skip the out-of-basis reflectance patch")
    p.set_defaults(handler=cmd_synth_corpus)

    p = commands.add_parser("render", help="rasterize a model, or a preview strip of a fit")
    p.add_argument("--model", type=Path)
    p.add_argument("--out", type=Path, required=True, help=".png or .ppm")
    p.add_argument("--result", type=Path, help="result.json or a parameter record")
    p.add_argument("--image", type=Path, help="input image; with --result writes the preview strip")
    p.add_argument("--level", choices=[level.value for level in Level], default=Level.FINAL.value)
    p.add_argument("--image-size", type=int)
    p.set_defaults(handler=cmd_render)

    p = commands.add_parser("fit", help="fit one image")
    p.add_argument("--model", type=Path)
    p.add_argument("--image", type=Path, required=True)
    p.add_argument("--landmarks", type=Path)
    p.add_argument("--out", type=Path, required=True, help="result.json")
    _add_schedule_flags(p)
    p.set_defaults(handler=cmd_fit)

    p = commands.add_parser("train", help="train the corrective layers on a corpus")
    p.add_argument("--model", type=Path)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--variant", choices=VARIANTS, help="start from fresh correctives of this variant")
    p.add_argument("--C", type=int, dest="C", help="start from fresh correctives of this dimension")
    p.add_argument("--progress", action="store_true")
    _add_schedule_flags(p)
    _add_corrective_flags(p)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--n-vertices", type=int, default=500)
    p.add_argument("--dims", type=_model_dims, default=[8, 4, 8, 6], help="m_s,m_e,m_r,C")
    p.add_argument("--variant", choices=VARIANTS, default=CorrectiveVariant.LINEAR.value)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--out", type=Path, help="JSON report")
    p.set_defaults(handler=cmd_gradcheck)

    p = commands.add_parser("report", help="CSV and plots for a fit result or a training run")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--result", type=Path, help="result.json written by fit")
    source.add_argument("--training", type=Path, help="output directory written by train")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--model", type=Path, help="with --image, adds the preview strip")
    p.add_argument("--image", type=Path)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(handler=cmd_report)

    p = commands.add_parser("study", help="train for several corrective dimensions and variants")
    p.add_argument("--model", type=Path)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--dims", type=_dims, default=[0, 5, 10], help="comma-separated corrective dimensions")
    p.add_argument("--variant", action="append", choices=VARIANTS, help="repeatable (default linear)")
    p.add_argument("--progress", action="store_true")
    _add_schedule_flags(p)
    _add_corrective_flags(p)
    p.set_defaults(handler=cmd_study)

    p = commands.add_parser("config", help="show or change the run configuration file")
    actions = p.add_subparsers(dest="action", metavar="action", required=True)
    a = actions.add_parser("show", help="print the effective configuration")
    a.add_argument("section", nargs="?")
    a = actions.add_parser("get", help="print one setting")
    a.add_argument("setting", metavar="SECTION.KEY")
    a = actions.add_parser("set", help="change one setting and save the file")
    a.add_argument("setting", metavar="SECTION.KEY")
    a.add_argument("value", help="JSON value (bare words are strings)")
    p.set_defaults(handler=cmd_config)
    return parser


# ----------------------------------------------------------------------
# helpers
# ----------------------------------------------------------------------

def _run_config(args) -> RunConfig:
    run = RunConfig.from_service(ConfigService(str(args.config)))
    run = run.with_overrides(seed=args.seed, log_level=args.log_level, log_dir=args.log_dir)
    if args.seed is not None:
        run = run.with_schedule(seed=args.seed)
    return run


def _schedule_overrides(run: RunConfig, args) -> RunConfig:
    run = run.with_schedule(stage=getattr(args, "stage", None),
                            pretrain_iterations=getattr(args, "pretrain_iterations", None),
                            finetune_iterations=getattr(args, "finetune_iterations", None),
                            batch_size=getattr(args, "batch_size", None))
    weights_file = getattr(args, "weights", None)
    if weights_file is not None:
        run = run.with_schedule(finetune_weights=Weights.from_file(weights_file, run.schedule.finetune_weights))
    ablate = getattr(args, "ablate", None) or []
    if ablate:
        run = run.with_schedule(pretrain_weights=run.schedule.pretrain_weights.ablate(ablate),
                                finetune_weights=run.schedule.finetune_weights.ablate(ablate))
    return run


def _model(path: Optional[Path], run: RunConfig) -> MultiLevelModel:
    return load_model(RunConfig.require(path or run.model_path, "model directory"))


def _preview_params(model: MultiLevelModel, K: CameraIntrinsics) -> ParamVector:
    """Mean face, frontal pose, white ambient light"""
    params = ParamVector.zeros(model)
    pose = initial_pose(model, K)
    params.omega, params.t = pose.omega, pose.t
    params.gamma_b[0] = 1.0 / SH_C0
    params.gamma_f = params.gamma_b.copy()
    return params


def _load_params_any(path: Path) -> ParamVector:
    data = load_json(path)
    if "trajectory" in data:
        return load_result(path).params
    return load_params(path)


def _print_summary(title: str, summary: dict) -> None:
    base, final = summary["base"], summary["final"]
    print(f"{title}: photometric error base mean {base['mean']:.4f} SD {base['sd']:.4f} | "
          f"final mean {final['mean']:.4f} SD {final['sd']:.4f} ({final['count']} image(s))")


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_synth_model(args, run: RunConfig) -> int:
    m_s, m_e, m_r, c = args.dims or (run.m_s, run.m_e, run.m_r, run.C)
    variant = CorrectiveVariant(args.variant) if args.variant else run.variant
    seed = args.seed if args.seed is not None else run.model_seed
    model = synth_model(seed, args.n_vertices or run.n_vertices, m_s, m_e, m_r, c, variant,
                        args.hidden_dim if args.hidden_dim is not None else run.hidden_dim)
    save_model(model, args.out)
    print(f"model with {model.vertex_count} vertices written to {args.out}")
    return 0


def cmd_synth_corpus(args, run: RunConfig) -> int:
    model = _model(args.model, run)
    size = args.image_size or run.image_size
    out = args.out or run.corpus_path
    seed = args.seed if args.seed is not None else run.corpus_seed
    corpus = synth_corpus(model, out, seed=seed, count=args.count or run.corpus_count,
                          K=run.intrinsics(size, size),
                          bump=None if args.no_bump else BumpSpec(),
                          patch=None if args.no_patch else PatchSpec(),
                          bleed=run.bleed and not args.no_bleed, image_size=size)
    print(f"{len(corpus)} image(s) written to {out}")
    return 0


def cmd_render(args, run: RunConfig) -> int:
    model = _model(args.model, run)
    image = read_image(args.image) if args.image is not None else None
    if image is not None:
        height, width = image.shape[:2]
    else:
        width = height = args.image_size or run.image_size
    K = run.intrinsics(width, height)
    params = _load_params_any(args.result) if args.result is not None else _preview_params(model, K)
    params.validate(model)
    if args.result is not None and image is not None:
        report.preview_strip(model, params, image, K, args.out)
    else:
        write_image(args.out, rasterize_preview(model, params, K, Level(args.level), background=image))
    print(f"wrote {args.out}")
    return 0


def cmd_fit(args, run: RunConfig) -> int:
    run = _schedule_overrides(run, args)
    model = _model(args.model, run)
    image = read_image(args.image)
    K = run.intrinsics(image.shape[1], image.shape[0])
    landmarks = None
    if args.landmarks is not None:
        landmarks = read_landmarks(RunConfig.require(args.landmarks, "landmark file"), model.topology)
    result = fit_image(model, image, landmarks, K, run.schedule)
    save_result(result, args.out, intrinsics=K.to_dict(), schedule=run.schedule.to_dict())
    print(f"fit: {result.iterations} iteration(s), photometric error base {result.photo_base:.4f} "
          f"final {result.photo_final:.4f} -> {args.out}")
    return 0


def _training_model(args, run: RunConfig) -> MultiLevelModel:
    model = _model(args.model, run)
    if args.variant is not None or args.C is not None:
        variant = CorrectiveVariant(args.variant) if args.variant else model.variant
        c = args.C if args.C is not None else model.corrective_dim
        hidden = args.hidden_dim if args.hidden_dim is not None else run.hidden_dim
        model = reinitialize_correctives(model, variant, c, run.schedule.seed, hidden)
    return model


def cmd_train(args, run: RunConfig) -> int:
    run = _schedule_overrides(run, args)
    model = _training_model(args, run)
    corpus = load_corpus(RunConfig.require(args.corpus or run.corpus_path, "corpus directory"), model)
    result = train_correctives(model, corpus, corpus.K, run.schedule, progress=args.progress)

    out = Path(args.out)
    save_model(result.model, out / "model")
    for name, params in zip(result.names, result.params):
        save_params(params, out / "params" / f"{name}.json", image=name)
    record = report.training_record(result)
    save_json(record, out / "training.json")
    report.report_training(record, out)
    _print_summary(f"{result.model.variant.value} C={result.model.corrective_dim}", record["summary"])
    return 0


def cmd_gradcheck(args, run: RunConfig) -> int:
    seed = args.seed if args.seed is not None else run.seed
    result = gradcheck(seed=seed, n_vertices=args.n_vertices, dims=args.dims,
                       variant=CorrectiveVariant(args.variant), image_size=args.image_size,
                       tolerance=args.tol, h=args.h)
    print(result.table())
    if args.out is not None:
        result.save(args.out)
    if not result.passed:
        failed = ", ".join(b.block for b in result.blocks if not b.passed)
        print(f"gradcheck failed for: {failed}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args, run: RunConfig) -> int:
    if args.result is not None:
        result = load_result(args.result)
        model = image = K = None
        if args.model is not None and args.image is not None:
            model = load_model(args.model)
            image = read_image(args.image)
            K = run.intrinsics(image.shape[1], image.shape[0])
            stored = load_json(args.result).get("intrinsics")
            if stored:
                K = CameraIntrinsics.from_dict(stored)
        written = report.report_fit(result, args.out, model, image, K)
    else:
        record = load_json(RunConfig.require(args.training / "training.json", "training record"))
        written = report.report_training(record, args.out, args.bins)
        _print_summary("training", {"base": summarize(record["base_errors"]),
                                    "final": summarize(record["final_errors"])})
    for path in written.values():
        print(f"wrote {path}")
    return 0


def cmd_study(args, run: RunConfig) -> int:
    run = _schedule_overrides(run, args)
    model = _model(args.model, run)
    corpus = load_corpus(RunConfig.require(args.corpus or run.corpus_path, "corpus directory"), model)
    variants = [CorrectiveVariant(v) for v in (args.variant or [CorrectiveVariant.LINEAR.value])]
    hidden = args.hidden_dim if args.hidden_dim is not None else run.hidden_dim
    rows = run_study(model, corpus, corpus.K, run.schedule, args.dims, variants, hidden, progress=args.progress)
    save_json({"rows": [row.to_dict() for row in rows], "schedule": run.schedule.to_dict()},
              Path(args.out) / "study.json")
    report.report_study(rows, args.out)
    for row in rows:
        print(f"{row.variant:>6} C={row.C:<4d} base {row.base_mean:.4f} ({row.base_sd:.4f}) "
              f"final {row.final_mean:.4f} ({row.final_sd:.4f})")
    return 0


_UNSET = object()


def _setting_name(name: str) -> Tuple[str, str]:
    section, _, key = name.partition(".")
    if not section or not key:
        raise ConfigError(f"expected SECTION.KEY, got '{name}'")
    return section, key


def _config_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_config(args, run: RunConfig) -> int:
    """Inspect or edit the file given by --config; an edit that leaves the run unusable is undone"""
    service = ConfigService.get_instance()
    if args.action == "show":
        data = service.all()
        if args.section is not None:
            if args.section not in data:
                raise ConfigError(f"unknown section '{args.section}'")
            data = {args.section: data[args.section]}
        print(json.dumps(data, indent=2))
        return 0

    section, key = _setting_name(args.setting)
    if args.action == "get":
        value = service.get(section, key, _UNSET)
        if value is _UNSET:
            raise ConfigError(f"unknown setting {args.setting}")
        print(json.dumps(value))
        return 0

    old = service.get(section, key)
    service.set(section, key, _config_value(args.value))
    try:
        RunConfig.from_service(service)
    except ConfigError:
        service.set(section, key, old)
        raise
    print(f"{section}.{key} = {json.dumps(service.get(section, key))} (saved to {service.path})")
    return 0


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def _log_level(name: str) -> int:
    level = logging.getLevelName(str(name).upper())
    if not isinstance(level, int):
        raise ConfigError(f"unknown log level '{name}'")
    return level


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    try:
        ConfigService.reset()
        run = _run_config(args)
        setup_application_logging(_log_level(run.log_level), run.log_dir)
        logger.info(f"facefit {__version__}: {args.command}")
        return args.handler(args, run)
    except FaceFitError as e:
        log_error_with_context("cli", f"{args.command} failed", e)
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
