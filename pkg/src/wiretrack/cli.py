"""Command-line entry points: track, simulate, eval, overlay, calibrate.

Exit codes: 0 success, 1 input error, 2 the run finished but tracking was
degraded (tracked fraction below ``track.min_tracked_fraction``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .calibrate import calibrate_planar, load_calibration_input
from .config import build, dataclass_defaults, jsonable, load_flat, parse_assignment, resolve
from .errors import ConfigError, SchemaError, WiretrackError
from .estimate import RansacConfig
from .geometry import CameraIntrinsics, Pose, load_intrinsics, pose_from_json, save_intrinsics
from .images import frame_name, list_frames, read_gray, write_gray, write_rgb
from .lsd import LsdParams
from .overlay import overlay_frame
from .simulate import (
    ACCEPTANCE_RENDER,
    UNIT_SCALE,
    OrbitSpec,
    RenderSpec,
    evaluate_trajectory,
    make_orbit,
    relative_trajectory,
    render_frame,
    visible_vertex_correspondences,
)
from .trajectory import TrajectoryRow, read_trajectory, write_track, write_truth
from .tracker import Status, TrackerConfig, TrackerState, init_pose_from_points, track_frame
from .wiremodel import load_model_file, model_to_json, unit_cube

log = logging.getLogger("wiretrack")

EXIT_OK, EXIT_INPUT, EXIT_DEGRADED = 0, 1, 2
DEFAULT_CAMERA = CameraIntrinsics(500.0, 500.0, 320.0, 240.0)


class InputError(Exception):
    """Anything wrong with the files or settings a command was given."""


# --------------------------------------------------------------------- helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.stem + ".manifest.json")


def write_manifest(out: Path, command: str, config: dict, inputs: dict, outputs: list, seeds: dict) -> Path:
    doc = {
        "command": command,
        "version": __version__,
        "config": jsonable(config),
        "inputs": {k: str(v) for k, v in inputs.items() if v is not None},
        "input_sha256": {k: _sha256(v) for k, v in inputs.items() if v is not None and Path(v).is_file()},
        "outputs": [str(o) for o in outputs],
        "seeds": seeds,
    }
    path = _manifest_path(out)
    _write_json(path, doc)
    return path


def _config_layers(config_path, sets) -> tuple[list[dict], dict]:
    """Override layers from ``--config`` (flat file or a manifest) and ``--set``.

    Returns the layers plus the manifest's recorded inputs when the config is
    a manifest, so a rerun can omit the input flags.
    """
    layers, inputs = [], {}
    if config_path:
        p = Path(config_path)
        if not p.is_file():
            raise InputError(f"config file not found: {p}")
        text = p.read_text()
        if text.lstrip().startswith("{"):
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise InputError(f"{p}: invalid JSON: {exc}") from None
            if not isinstance(doc, dict) or "config" not in doc:
                raise InputError(f"{p}: JSON config must be a run manifest with a 'config' block")
            layers.append(doc["config"])
            inputs = doc.get("inputs", {})
        else:
            layers.append(load_flat(p))
    layers.append(dict(parse_assignment(s) for s in sets))
    return layers, inputs


def _pick(flag, inputs: dict, name: str, required: bool = True):
    value = flag if flag is not None else inputs.get(name)
    if value is None and required:
        raise InputError(f"missing --{name}")
    return value


def _load_intrinsics(path) -> CameraIntrinsics:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"intrinsics file not found: {p}")
    try:
        return load_intrinsics(p)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{p}: invalid intrinsics: {exc}") from None


def _load_model(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"model file not found: {p}")
    return load_model_file(p)


# --------------------------------------------------------------------- config defaults


def track_defaults() -> dict:
    base = TrackerConfig()
    d = {k: v for k, v in dataclass_defaults(base).items() if not k.startswith("cam_to_body")}
    d["cam_to_body.t"] = (0.0, 0.0, 0.0)
    d["cam_to_body.q"] = (1.0, 0.0, 0.0, 0.0)
    d["track.min_tracked_fraction"] = 0.9
    d["init.seed"] = 0
    return d


def tracker_config(values: dict) -> TrackerConfig:
    top = {k: v for k, v in values.items() if "." not in k}
    try:
        return TrackerConfig(
            lsd=build(LsdParams, values, "lsd"),
            ransac=build(RansacConfig, values, "ransac"),
            cam_to_body=Pose.from_quaternion(values["cam_to_body.q"], values["cam_to_body.t"]),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid tracker settings: {exc}") from None


def simulate_defaults(camera: CameraIntrinsics = DEFAULT_CAMERA) -> dict:
    d = dataclass_defaults(OrbitSpec(), "orbit.")
    d.update(dataclass_defaults(ACCEPTANCE_RENDER, "render."))
    d.update({f"camera.{k}": v for k, v in camera.to_dict().items()})
    d["output.format"] = "pgm"
    d["init.n_points"] = 5
    return d


# --------------------------------------------------------------------- commands


@click.group()
@click.version_option(__version__, prog_name="wiretrack")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Model-based edge tracking of a known wireframe object."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


config_option = click.option("--config", "config_path", type=click.Path(), help="Flat key = value file, or a run manifest to repeat.")
set_option = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override one config key (repeatable).")


@cli.command()
@click.option("--model", type=click.Path(), help="Wireframe model JSON.")
@click.option("--intrinsics", type=click.Path(), help="Camera intrinsics JSON.")
@click.option("--frames", type=click.Path(), help="Directory of frame_NNNNNN.pgm/png files.")
@click.option("--init", "init_path", type=click.Path(), help="Initial pose JSON or correspondence list.")
@click.option("--out", type=click.Path(), required=True, help="Trajectory CSV to write.")
@config_option
@set_option
def track(model, intrinsics, frames, init_path, out, config_path, sets):
    """Track the model through a frame sequence."""
    layers, recorded = _config_layers(config_path, sets)
    values = resolve(track_defaults(), *layers)
    cfg = tracker_config(values)
    model_path = _pick(model, recorded, "model")
    k_path = _pick(intrinsics, recorded, "intrinsics")
    frames_dir = _pick(frames, recorded, "frames")
    init_file = _pick(init_path, recorded, "init")

    m = _load_model(model_path)
    k = _load_intrinsics(k_path)
    try:
        frame_list = list_frames(frames_dir)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    if not frame_list:
        raise InputError(f"no frame_NNNNNN.pgm/png files in {frames_dir}")
    pose0 = _initial_pose(init_file, k, values["init.seed"])

    state = TrackerState(frame_index=frame_list[0][0] - 1, camera_pose=pose0)
    rows = []
    for number, path in frame_list:
        img = read_gray(path)
        if img.shape != (k.height, k.width):
            raise InputError(f"{path.name}: size {img.shape[1]}x{img.shape[0]} does not match intrinsics {k.width}x{k.height}")
        state = track_frame(state, img, m, k, cfg, frame_index=number)
        rows.append(
            TrajectoryRow(number, state.camera_pose, state.status.value, state.last_inlier_fraction, state.last_rms)
        )
        log.info("frame %d %s inliers %.3f rms %.3f", number, state.status.value, state.last_inlier_fraction, state.last_rms)

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_track(out_path, rows)
    inputs = {"model": model_path, "intrinsics": k_path, "frames": frames_dir, "init": init_file}
    write_manifest(out_path, "track", values, inputs, [out_path], {"ransac.rng_seed": values["ransac.rng_seed"]})

    tracked = sum(r.status == Status.TRACKING.value for r in rows) / len(rows)
    click.echo(f"tracked {tracked:.3f} of {len(rows)} frames -> {out_path}")
    if tracked < values["track.min_tracked_fraction"]:
        click.echo(f"warning: tracked fraction below {values['track.min_tracked_fraction']}", err=True)
        sys.exit(EXIT_DEGRADED)


def _initial_pose(path, k: CameraIntrinsics, seed: int) -> Pose:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"init file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON: {exc}") from None
    try:
        if isinstance(doc, dict):
            return pose_from_json(doc)
        corrs = [(np.asarray(c["xyz"], dtype=float), np.asarray(c["uv"], dtype=float)) for c in doc]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{p}: expected {{'t','q'}} or a list of {{'uv','xyz'}}: {exc}") from None
    return init_pose_from_points(corrs, k, seed=seed)


@cli.command()
@click.option("--model", type=click.Path(), help="Wireframe model JSON (default: bundled unit cube).")
@click.option("--intrinsics", type=click.Path(), help="Camera intrinsics JSON (default: 640x480, f = 500).")
@click.option("--out", type=click.Path(), required=True, help="Output directory.")
@config_option
@set_option
def simulate(model, intrinsics, out, config_path, sets):
    """Render a synthetic orbit sequence with ground truth."""
    layers, recorded = _config_layers(config_path, sets)
    model_path = _pick(model, recorded, "model", required=False)
    k_path = _pick(intrinsics, recorded, "intrinsics", required=False)
    camera = _load_intrinsics(k_path) if k_path else DEFAULT_CAMERA
    values = resolve(simulate_defaults(camera), *layers)
    orbit = build(OrbitSpec, values, "orbit")
    render = build(RenderSpec, values, "render")
    try:
        k = CameraIntrinsics.from_dict({key: values[f"camera.{key}"] for key in camera.to_dict()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid camera settings: {exc}") from None
    fmt = values["output.format"]
    if fmt not in ("pgm", "png"):
        raise ConfigError("output.format must be pgm or png")
    m = _load_model(model_path) if model_path else unit_cube()

    out_dir = Path(out)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    poses = make_orbit(orbit)
    numbers = list(range(1, len(poses) + 1))
    for n, pose in zip(numbers, poses):
        img, _ = render_frame(m, pose, k, render, frame_index=n)
        write_gray(frames_dir / frame_name(n, fmt), img)

    write_truth(out_dir / "truth.csv", numbers, poses)
    save_intrinsics(k, out_dir / "intrinsics.json")
    (out_dir / "model.json").write_text(model_to_json(m))
    corrs = visible_vertex_correspondences(m, poses[0], k, values["init.n_points"])
    _write_json(out_dir / "init.json", [{"uv": uv.tolist(), "xyz": x.tolist()} for x, uv in corrs])
    _write_json(out_dir / "scene.json", {"orbit": _section_json(values, "orbit"), "render": _section_json(values, "render"),
                                          "camera": k.to_dict(), "n_frames": len(poses), "frame_format": fmt})
    outputs = [frames_dir, out_dir / "truth.csv", out_dir / "scene.json", out_dir / "intrinsics.json",
               out_dir / "model.json", out_dir / "init.json"]
    write_manifest(out_dir, "simulate", values, {"model": model_path, "intrinsics": k_path}, outputs,
                   {"render.rng_seed": values["render.rng_seed"]})
    click.echo(f"wrote {len(poses)} frames to {frames_dir}")


def _section_json(values: dict, prefix: str) -> dict:
    p = prefix + "."
    return {k[len(p):]: v for k, v in jsonable(values).items() if k.startswith(p)}


@cli.command("eval")
@click.argument("estimate", type=click.Path())
@click.argument("truth", type=click.Path())
@click.option("--units", type=click.Choice(sorted(UNIT_SCALE)), default="m", show_default=True)
@click.option("--out", type=click.Path(), help="Also write the JSON report here.")
def eval_cmd(estimate, truth, units, out):
    """Compare an estimated trajectory with ground truth; prints JSON."""
    est_rows = _read_csv(estimate)
    gt_rows = _read_csv(truth)
    if len(est_rows) != len(gt_rows):
        raise InputError(f"row count mismatch: {len(est_rows)} estimated vs {len(gt_rows)} truth")
    if [r.frame for r in est_rows] != [r.frame for r in gt_rows]:
        raise InputError("frame numbers of the two files differ")
    metrics = evaluate_trajectory(
        [(r.frame, r.pose, r.status) for r in est_rows], [r.pose for r in gt_rows], units
    )
    scale = UNIT_SCALE[units]
    report = metrics.to_dict()
    report["relative_estimate"] = _relative_rows(est_rows, scale)
    report["relative_truth"] = _relative_rows(gt_rows, scale)
    text = json.dumps(report, indent=2)
    click.echo(text)
    if out:
        Path(out).write_text(text + "\n")


def _read_csv(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {p}")
    rows = read_trajectory(p)
    if not rows:
        raise InputError(f"{p}: no rows")
    return rows


def _relative_rows(rows, scale: float) -> list:
    rel = relative_trajectory([r.pose for r in rows], scale)
    return [[r.frame] + v.tolist() for r, v in zip(rows, rel)]


@cli.command()
@click.option("--frames", type=click.Path(), required=True, help="Directory of input frames.")
@click.option("--model", type=click.Path(), required=True, help="Wireframe model JSON.")
@click.option("--intrinsics", type=click.Path(), required=True, help="Camera intrinsics JSON.")
@click.option("--trajectory", type=click.Path(), required=True, help="Trajectory (or truth) CSV.")
@click.option("--out", type=click.Path(), required=True, help="Output directory for annotated PNGs.")
def overlay(frames, model, intrinsics, trajectory, out):
    """Draw the model profile at each estimated pose over its frame."""
    m = _load_model(model)
    k = _load_intrinsics(intrinsics)
    rows = _read_csv(trajectory)
    try:
        frame_map = dict(list_frames(frames))
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for r in rows:
        if r.frame not in frame_map:
            raise InputError(f"frame {r.frame} listed in the trajectory is missing from {frames}")
        img = read_gray(frame_map[r.frame])
        rgb, _ = overlay_frame(img, m, k, r.pose, lost=r.status != Status.TRACKING.value)
        write_rgb(out_dir / frame_name(r.frame, "png"), rgb)
        written += 1
    click.echo(f"wrote {written} overlays to {out_dir}")


@cli.command()
@click.argument("views_json", type=click.Path())
@click.option("--out", type=click.Path(), required=True, help="Intrinsics JSON to write.")
@click.option("--width", type=int, default=640, show_default=True)
@click.option("--height", type=int, default=480, show_default=True)
def calibrate(views_json, out, width, height):
    """Estimate intrinsics from checkerboard corner files."""
    p = Path(views_json)
    if not p.is_file():
        raise InputError(f"file not found: {p}")
    try:
        board, views = load_calibration_input(p.read_text())
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{p}: invalid calibration input: {exc}") from None
    result = calibrate_planar(board, views, width, height)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_intrinsics(result.intrinsics, out_path)
    report_path = out_path.with_name(out_path.stem + ".report.json")
    _write_json(report_path, result.report())
    write_manifest(out_path, "calibrate", {"width": width, "height": height}, {"views": p}, [out_path, report_path], {})
    click.echo(f"rms {result.rms:.6g} px -> {out_path}")
    if not result.converged:
        click.echo("error: refinement did not converge", err=True)
        sys.exit(EXIT_INPUT)


# --------------------------------------------------------------------- entry point


def main(argv=None) -> int:
    """Console entry point; maps every failure onto the exit-code contract."""
    try:
        cli.main(args=argv, prog_name="wiretrack", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.ClickException as exc:
        exc.show()
        return EXIT_INPUT
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INPUT
    except (InputError, SchemaError, ConfigError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INPUT
    except WiretrackError as exc:
        click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
