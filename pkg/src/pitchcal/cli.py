"""Command-line front end: evaluate, compare, fit, synth, render.

Exit codes: 0 success, 1 nothing to do (no annotation/camera pairs, or
mismatched inputs), 2 partial failure (the failing images are listed in the
summary and on stderr).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

from .calibrate import PINHOLE_PARAMS, FitOptions, fit_homography, fit_pinhole
from .field_model import PitchSpec, build_pitch_template
from .io_formats import (
    LegacyConvention,
    read_annotation,
    read_camera,
    read_legacy_homography,
    render_overlay,
    write_camera,
    write_dataset_csv,
    write_image_eval,
    write_json,
    write_scene,
)
from .metrics import DEFAULT_SPACING, aggregate, measure_image, score
from .synth import SceneConfig, generate_scene

log = logging.getLogger("pitchcal")

EXIT_OK = 0
EXIT_NO_INPUT = 1
EXIT_PARTIAL = 2

DEFAULT_TAUS = (5.0, 2.0)
SIDE_SUFFIXES = (".camera.json", ".provenance.json", ".fit.json", ".eval.json", ".config.json")


@dataclass(frozen=True)
class RunConfig:
    command: str
    annotations: Optional[Path] = None
    cameras: tuple[Path, ...] = ()
    pitch: Optional[Path] = None
    taus: tuple[float, ...] = DEFAULT_TAUS
    spacing: float = DEFAULT_SPACING
    out: Optional[Path] = None
    jobs: int = 1
    seed: int = 0
    legacy_convention: Optional[str] = None
    manifest: Optional[Path] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.taus or any(not t > 0 for t in self.taus):
            raise ValueError("tau values must be positive")
        if self.jobs < 1:
            raise ValueError("--jobs must be at least 1")
        if not self.spacing > 0:
            raise ValueError("--spacing must be positive")

    def pitch_spec(self) -> PitchSpec:
        return PitchSpec() if self.pitch is None else PitchSpec.load(self.pitch)


# ---------------------------------------------------------------------------
# pairing and fan-out
# ---------------------------------------------------------------------------


def annotation_stems(directory: Path) -> dict[str, Path]:
    out = {}
    for p in sorted(Path(directory).glob("*.json")):
        if p.name.endswith(SIDE_SUFFIXES):
            continue
        out[p.name[: -len(".json")]] = p
    return out


def camera_path(directory: Path, stem: str, legacy: bool) -> Path:
    if legacy:
        return Path(directory) / f"{stem}.homography.txt"
    return Path(directory) / f"{stem}.camera.json"


def pair_inputs(config: RunConfig, camera_dir: Path) -> tuple[list[tuple[str, Path, Path]], list[str]]:
    """``(stem, annotation, camera)`` triples plus stems lacking a camera.

    A manifest (JSON object stem -> camera path relative to the camera
    directory) overrides the stem convention.
    """
    stems = annotation_stems(config.annotations)
    legacy = config.legacy_convention is not None
    manifest = {}
    if config.manifest is not None:
        manifest = json.loads(Path(config.manifest).read_text(encoding="utf-8"))
    pairs, missing = [], []
    for stem, ann in stems.items():
        cam = Path(camera_dir) / manifest[stem] if stem in manifest else camera_path(camera_dir, stem, legacy)
        if cam.exists():
            pairs.append((stem, ann, cam))
        else:
            missing.append(stem)
    return pairs, missing


def fan_out(fn: Callable, tasks: Sequence, jobs: int) -> list:
    """Ordered map over ``tasks``, in a process pool when ``jobs > 1``."""
    if jobs == 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def _load_camera(path: Path, convention: Optional[str], spec: PitchSpec, image_size):
    if convention is None:
        return read_camera(path)
    return read_legacy_homography(path, LegacyConvention.parse(convention), spec, image_size)


# ---------------------------------------------------------------------------
# evaluate / compare
# ---------------------------------------------------------------------------


def _evaluate_task(task):
    stem, ann_path, cam_path, spec, taus, spacing, convention = task
    try:
        ann = read_annotation(ann_path)
        cam = _load_camera(cam_path, convention, spec, ann.image_size)
        m = measure_image(cam, build_pitch_template(spec), ann, spacing)
        return stem, [score(m, t) for t in taus], None
    except Exception as exc:  # reported per image, never fatal for the batch
        return stem, None, f"{type(exc).__name__}: {exc}"


def evaluate_directory(config: RunConfig, camera_dir: Path):
    """Evaluate every pair; returns (results, failures) with results by stem."""
    pairs, missing = pair_inputs(config, camera_dir)
    spec = config.pitch_spec()
    tasks = [
        (stem, a, c, spec, config.taus, config.spacing, config.legacy_convention)
        for stem, a, c in pairs
    ]
    results, failures = {}, {stem: "no matching camera file" for stem in missing}
    for stem, evals, err in fan_out(_evaluate_task, tasks, config.jobs):
        if err is None:
            results[stem] = evals
        else:
            failures[stem] = err
            log.warning("%s: %s", stem, err)
    return results, failures


def summarize(results: dict, taus) -> dict:
    out = {}
    for i, tau in enumerate(taus):
        summary = aggregate(evals[i] for evals in results.values())
        out[f"{tau:g}"] = summary.to_dict()
    return out


def cmd_evaluate(config: RunConfig) -> int:
    results, failures = evaluate_directory(config, config.cameras[0])
    if not results:
        print("no annotation/camera pairs could be evaluated", file=sys.stderr)
        _report_failures(failures)
        return EXIT_NO_INPUT
    out = Path(config.out)
    (out / "per_image").mkdir(parents=True, exist_ok=True)
    for stem, evals in results.items():
        write_image_eval(evals, out / "per_image" / f"{stem}.eval.json", stem)
    for i, tau in enumerate(config.taus):
        write_dataset_csv([(s, e[i]) for s, e in results.items()], out / f"dataset_tau{tau:g}.csv")
    summary = {
        "n_images": len(results),
        "taus": list(config.taus),
        "jaccard": summarize(results, config.taus),
        "failures": [{"image_id": k, "error": v} for k, v in sorted(failures.items())],
    }
    write_json(summary, out / "summary.json")
    for tau in config.taus:
        s = summary["jaccard"][f"{tau:g}"]
        print(f"JaC_{tau:g} = {s['micro_jaccard']:.4f}  ({len(results)} images)")
    return _finish(failures)


def _report_failures(failures: dict) -> None:
    for stem, err in sorted(failures.items()):
        print(f"failed: {stem}: {err}", file=sys.stderr)


def _finish(failures: dict) -> int:
    if failures:
        _report_failures(failures)
        return EXIT_PARTIAL
    return EXIT_OK


def _fmt_cell(v) -> str:
    return "-" if v is None else f"{v:.4f}"


def comparison_table(names: Sequence[str], summaries: Sequence[dict], taus) -> tuple[list[str], list[list[str]]]:
    header = ["model"] + [f"JaC_{t:g}" for t in taus] + ["reproj_px", "reproj_norm"]
    rows = []
    for name, s in zip(names, summaries):
        first = s[f"{taus[0]:g}"]
        rows.append(
            [name]
            + [_fmt_cell(s[f"{t:g}"]["micro_jaccard"]) for t in taus]
            + [_fmt_cell(first["mean_reprojection_px"]), _fmt_cell(first["mean_reprojection_norm"])]
        )
    return header, rows


# published JaC_5 on the World Cup 2014 test set, for scale
REFERENCE_JAC5 = (
    ("homography, WC14 annotations", 67.4),
    ("homography, CARWC annotations", 79.1),
    ("pinhole + one radial coefficient", 92.5),
)


def reference_footer() -> str:
    parts = ", ".join(f"{name} {value:.1f}" for name, value in REFERENCE_JAC5)
    return f"reference JaC_5 (%), WC14 test set: {parts}\n"


def aligned(header, rows) -> str:
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [header] + rows]
    return "\n".join(lines) + "\n"


def cmd_compare(config: RunConfig) -> int:
    if len(config.cameras) < 2:
        print("compare needs at least two --cameras directories", file=sys.stderr)
        return EXIT_NO_INPUT
    stems = None
    for d in config.cameras:
        pairs, _ = pair_inputs(config, d)
        s = {p[0] for p in pairs}
        if stems is not None and s != stems:
            print(f"annotation/camera sets differ for {d}", file=sys.stderr)
            return EXIT_NO_INPUT
        stems = s
    if not stems:
        print("no annotation/camera pairs", file=sys.stderr)
        return EXIT_NO_INPUT
    names, summaries, failures = [], [], {}
    short = [Path(d).name for d in config.cameras]
    for d in config.cameras:
        results, fails = evaluate_directory(config, d)
        if not results:
            print(f"nothing evaluable in {d}", file=sys.stderr)
            return EXIT_NO_INPUT
        names.append(str(d) if short.count(Path(d).name) > 1 or not Path(d).name else Path(d).name)
        summaries.append(summarize(results, config.taus))
        failures.update({f"{Path(d).name}/{k}": v for k, v in fails.items()})
    header, rows = comparison_table(names, summaries, config.taus)
    text = aligned(header, rows) + "\n" + reference_footer()
    print(text, end="")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.txt").write_text(text, encoding="utf-8")
    with open(out / "compare.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join("" if c == "-" else c for c in r) + "\n")
    write_json(
        {"models": dict(zip(names, summaries)), "failures": sorted(failures)},
        out / "compare.json",
    )
    return _finish(failures)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _fit_task(task):
    stem, ann_path, seed_path, spec, model, options = task
    try:
        ann = read_annotation(ann_path)
        template = build_pitch_template(spec)
        seed = read_camera(seed_path) if seed_path is not None else None
        if model == "homography":
            cam, report = fit_homography(template, ann, options, seed=seed)
        else:
            cam, report = fit_pinhole(template, ann, options, seed=seed)
        return stem, cam, report.to_dict(), None
    except Exception as exc:
        return stem, None, None, f"{type(exc).__name__}: {exc}"


def cmd_fit(config: RunConfig) -> int:
    stems = annotation_stems(config.annotations)
    if not stems:
        print("no annotation files found", file=sys.stderr)
        return EXIT_NO_INPUT
    extra = config.extra
    fixed = frozenset(extra.get("fix") or ())
    options = FitOptions(
        max_iterations=extra.get("max_iterations", 200),
        unlock_k2=extra.get("unlock_k2", False),
        fixed=fixed,
        spacing=config.spacing,
    )
    seed_dir = extra.get("seed_camera")
    tasks = []
    for stem, ann in stems.items():
        seed = None
        if seed_dir is not None:
            p = Path(seed_dir) / f"{stem}.camera.json"
            seed = p if p.exists() else None
        tasks.append((stem, ann, seed, config.pitch_spec(), extra.get("model", "pinhole_radial"), options))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = {}
    for stem, cam, report, err in fan_out(_fit_task, tasks, config.jobs):
        if err is not None:
            failures[stem] = err
            log.warning("%s: %s", stem, err)
            continue
        write_camera(cam, out / f"{stem}.camera.json")
        write_json(report, out / f"{stem}.fit.json")
        log.info("%s: rms %.4f px after %d iterations", stem, report["rms_px"], report["iterations"])
    if len(failures) == len(tasks):
        _report_failures(failures)
        return EXIT_NO_INPUT
    return _finish(failures)


# ---------------------------------------------------------------------------
# synth / render
# ---------------------------------------------------------------------------


def cmd_synth(config: RunConfig) -> int:
    extra = config.extra
    if extra.get("config") is not None:
        base = SceneConfig.from_dict(json.loads(Path(extra["config"]).read_text(encoding="utf-8")))
    else:
        base = SceneConfig()
    overrides = {"seed": config.seed, "spacing": config.spacing}
    for key in ("noise_sigma", "dropout_rate", "hallucination_rate"):
        if extra.get(key) is not None:
            overrides[key] = extra[key]
    if config.pitch is not None:
        overrides["pitch"] = config.pitch_spec()
    scene_config = replace(base, **overrides)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    template = build_pitch_template(scene_config.pitch)
    n = extra.get("n", 10)
    width = max(4, len(str(n - 1)))
    for i in range(n):
        scene = generate_scene(scene_config, i, template)
        write_scene(scene, out, f"scene_{i:0{width}d}")
    write_json(scene_config.to_dict(), out / "synth.config.json")
    print(f"wrote {n} scenes to {out}")
    return EXIT_OK


def _render_task(task):
    stem, ann_path, cam_path, spec, tau, spacing, convention, out = task
    try:
        ann = read_annotation(ann_path)
        cam = _load_camera(cam_path, convention, spec, ann.image_size)
        template = build_pitch_template(spec)
        ev = score(measure_image(cam, template, ann, spacing), tau)
        render_overlay(cam, template, ann, ev, Path(out) / f"{stem}.svg", spacing)
        return stem, None
    except Exception as exc:
        return stem, f"{type(exc).__name__}: {exc}"


def cmd_render(config: RunConfig) -> int:
    pairs, missing = pair_inputs(config, config.cameras[0])
    if not pairs:
        print("no annotation/camera pairs", file=sys.stderr)
        return EXIT_NO_INPUT
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.pitch_spec()
    tasks = [
        (s, a, c, spec, config.taus[0], config.spacing, config.legacy_convention, out)
        for s, a, c in pairs
    ]
    failures = {s: "no matching camera file" for s in missing}
    for stem, err in fan_out(_render_task, tasks, config.jobs):
        if err is not None:
            failures[stem] = err
    return _finish(failures)


COMMANDS = {
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "fit": cmd_fit,
    "synth": cmd_synth,
    "render": cmd_render,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, cameras: bool = True, annotations: bool = True) -> None:
    if annotations:
        p.add_argument("--annotations", type=Path, required=True, help="directory of X.json annotation files")
    if cameras:
        p.add_argument(
            "--cameras",
            type=Path,
            action="append",
            required=True,
            help="directory of X.camera.json files (repeat for compare)",
        )
        p.add_argument("--manifest", type=Path, help="JSON object mapping stem to camera file")
        p.add_argument(
            "--legacy-homography-convention",
            dest="legacy_convention",
            help="read X.homography.txt files: a convention name or a JSON sidecar path",
        )
    p.add_argument("--pitch", type=Path, help="pitch dimensions JSON")
    p.add_argument("--tau", type=float, action="append", help="pixel threshold (repeatable, default 5 and 2)")
    p.add_argument("--spacing", type=float, default=DEFAULT_SPACING, help="template sampling step in meters")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pitchcal", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("evaluate", help="score cameras against annotations"))
    _common(sub.add_parser("compare", help="side-by-side scores of several camera directories"))
    _common(sub.add_parser("render", help="SVG overlays coloured by verdict"))

    fit = sub.add_parser("fit", help="calibrate a camera per annotation file")
    _common(fit, cameras=False)
    fit.add_argument("--model", choices=("homography", "pinhole_radial"), default="pinhole_radial")
    fit.add_argument("--max-iterations", type=int, default=200)
    fit.add_argument("--unlock-k2", action="store_true")
    fit.add_argument("--fix", action="append", choices=PINHOLE_PARAMS, help="hold a parameter at its seed value")
    fit.add_argument("--seed-camera", type=Path, help="directory of X.camera.json seeds")

    synth = sub.add_parser("synth", help="generate synthetic scenes")
    _common(synth, cameras=False, annotations=False)
    synth.add_argument("--n", type=int, default=10)
    synth.add_argument("--noise", type=float, dest="noise_sigma")
    synth.add_argument("--dropout", type=float, dest="dropout_rate")
    synth.add_argument("--hallucination", type=float, dest="hallucination_rate")
    synth.add_argument("--config", type=Path, help="SceneConfig JSON")
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = {
        "command", "annotations", "cameras", "pitch", "tau", "spacing", "out",
        "jobs", "seed", "legacy_convention", "manifest", "verbose",
    }
    extra = {k: v for k, v in vars(args).items() if k not in base}
    return RunConfig(
        command=args.command,
        annotations=getattr(args, "annotations", None),
        cameras=tuple(getattr(args, "cameras", None) or ()),
        pitch=args.pitch,
        taus=tuple(args.tau) if args.tau else DEFAULT_TAUS,
        spacing=args.spacing,
        out=args.out,
        jobs=args.jobs,
        seed=args.seed,
        legacy_convention=getattr(args, "legacy_convention", None),
        manifest=getattr(args, "manifest", None),
        extra=extra,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        config = config_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))
    return COMMANDS[config.command](config)


if __name__ == "__main__":
    sys.exit(main())
