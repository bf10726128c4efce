####################################################################################################
# Description: the mcli command line, driving synth -> solve -> fuse -> evaluate.
#
# Global options (config file, --set overrides, threads, seed, logging) go before the subcommand:
#
#   mcli --config run.cfg --set mu=1 pipeline scenes/planar3 out/planar3
#
# `solve` and `pipeline` also accept --config and --seed after the subcommand; those win.
####################################################################################################
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional

import click

from mvs_core import api, file_naming, scene_synth
from mvs_core import configuration as root_cfg
from mvs_core.config_objects import MvsCfg
from mvs_core.errors import ConfigError, MapFormatError, SceneParseError, SceneValidationError
from mvs_core.evaluation import default_tau, evaluate, report_json, report_table
from mvs_core.fusion import FusedCloud, FusionParams, fuse
from mvs_core.run_record import save_run_record
from mvs_core.scene_io import (
    CameraView,
    DepthNormalResult,
    load_depth_normal,
    load_scene,
    read_point_cloud,
    save_depth_normal,
)
from mvs_core.solver import run_scene
from mvs_core.utils.utils_clean import disable_console_logging

logger = root_cfg.setup_logger("mvs_core")

dash_line = "########################################################"

LOG_LEVELS = {"DEBUG": logging.DEBUG, "INFO": logging.INFO, "WARNING": logging.WARNING, "ERROR": logging.ERROR}

_VALIDATION_ERRORS = (SceneValidationError, SceneParseError, ConfigError, MapFormatError)


###################################################################################################
# Helpers
###################################################################################################
def _parse_set(ctx: click.Context, param: click.Parameter, values: tuple[str, ...]) -> dict[str, str]:
    """Turn repeated --set key=value options into a dict."""
    overrides: dict[str, str] = {}
    for item in values:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise click.BadParameter(f"expected key=value, got {item!r}", ctx=ctx, param=param)
        overrides[key.strip().lower()] = value.strip()
    return overrides


def _effective_cfg(ctx: click.Context,
                   config: Optional[Path] = None,
                   seed: Optional[int] = None) -> MvsCfg:
    """Effective configuration for a subcommand; subcommand options override the global ones."""
    opts = ctx.find_root().obj
    overrides: dict[str, Any] = dict(opts["overrides"])
    if seed is not None:
        overrides["seed"] = seed
    return root_cfg.load_mvs_cfg(config or opts["config"], overrides)


def _echo_header(title: str) -> None:
    click.echo(dash_line)
    click.echo(f"# {title}")
    click.echo(dash_line)


def _solve(scene_dir: Path, out: Path, cfg: MvsCfg, view_ids: Optional[list[int]],
           dump_debug: bool) -> tuple[list[CameraView], dict[int, DepthNormalResult]]:
    scene = load_scene(scene_dir)
    known = sorted(v.id for v, _ in scene)
    unknown = [vid for vid in view_ids or [] if vid not in known]
    if unknown:
        raise click.BadParameter(f"view id(s) {unknown} not in scene; ids are {known}", param_hint="--view")

    out.mkdir(parents=True, exist_ok=True)
    results = run_scene(scene, cfg, out, view_ids, dump_debug=dump_debug)
    for result in results.values():
        save_depth_normal(result, out)
    save_run_record(out, cfg, scene_dir, results)
    return [v for v, _ in scene], results


def _fuse(views: list[CameraView], results: dict[int, DepthNormalResult], path: Path,
          cfg: MvsCfg) -> FusedCloud:
    cloud = fuse(results, views, FusionParams.from_cfg(cfg))
    cloud.save(path)
    return cloud


def _evaluate(cloud_file: Path, gt_file: Path, taus: list[float], json_file: Optional[Path]) -> Path:
    cloud, _, _ = read_point_cloud(cloud_file)
    gt, _, _ = read_point_cloud(gt_file)
    if not taus:
        taus = [default_tau(gt)]
    reports = [evaluate(cloud, gt, tau) for tau in taus]
    click.echo(report_table(reports))

    json_file = json_file or file_naming.eval_json_file(cloud_file)
    json_file.parent.mkdir(parents=True, exist_ok=True)
    with open(json_file, "w", encoding="utf-8") as f:
        json.dump(report_json(reports, cloud=cloud_file, gt=gt_file), f, indent=2)
    logger.info(f"Wrote evaluation report {json_file}")
    return json_file


###################################################################################################
# Command group
###################################################################################################
@click.group(invoke_without_command=True)
@click.option("--config", "config", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Flat key=value parameter file.")
@click.option("--set", "overrides", multiple=True, callback=_parse_set, metavar="KEY=VALUE",
              help="Override one parameter; repeatable.")
@click.option("--threads", type=click.IntRange(min=0), default=None,
              help="Worker threads; 0 uses every logical core. Mirrors DVP_THREADS.")
@click.option("--seed", type=int, default=None, help="Seed for every random draw.")
@click.option("--log-level", type=click.Choice(list(LOG_LEVELS), case_sensitive=False), default=None)
@click.option("--quiet", is_flag=True, help="No console logging; the log file is still written.")
@click.option("--dump-config", is_flag=True, help="Print the effective parameters and exit.")
@click.pass_context
def cli(ctx: click.Context,
        config: Optional[Path],
        overrides: dict[str, str],
        threads: Optional[int],
        seed: Optional[int],
        log_level: Optional[str],
        quiet: bool,
        dump_config: bool) -> None:
    """Multi-view stereo from calibrated images and monocular priors."""
    merged: dict[str, Any] = dict(overrides)
    if threads is not None:
        merged["threads"] = threads
    if seed is not None:
        merged["seed"] = seed
    if log_level is not None:
        merged["log_level"] = LOG_LEVELS[log_level.upper()]
    ctx.obj = {"config": config, "overrides": merged}

    # Validates keys and values up front so a bad --set fails before any work
    cfg = root_cfg.load_mvs_cfg(config, merged)
    if quiet:
        ctx.with_resource(disable_console_logging("mvs_core"))

    if dump_config:
        click.echo(root_cfg.dump_mvs_cfg(cfg))
        ctx.exit(api.EXIT_CODE.OK)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@cli.command()
@click.argument("fixture_name", metavar="FIXTURE", type=click.Choice([f.value for f in api.FIXTURE]))
@click.argument("out", type=click.Path(file_okay=False, path_type=Path))
@click.option("--width", type=click.IntRange(scene_synth.MIN_RESOLUTION, scene_synth.MAX_RESOLUTION),
              default=160, show_default=True)
@click.option("--height", type=click.IntRange(scene_synth.MIN_RESOLUTION, scene_synth.MAX_RESOLUTION),
              default=120, show_default=True)
def synth(fixture_name: str, out: Path, width: int, height: int) -> None:
    """Render a synthetic fixture scene with ground truth into OUT."""
    rendered = scene_synth.render(scene_synth.fixture(fixture_name, width, height), out)
    click.echo(f"Wrote {fixture_name} ({len(rendered.views)} views, {width}x{height}, "
               f"{len(rendered.cloud)} ground-truth points) to {out}")


@cli.command()
@click.argument("scene_dir", metavar="SCENE", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(file_okay=False, path_type=Path))
@click.option("--view", "view_ids", type=int, multiple=True, help="Solve only this view id; repeatable.")
@click.option("--config", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None)
@click.option("--dump-debug", is_flag=True, help="Also write region atlases and visibility masks.")
@click.pass_context
def solve(ctx: click.Context, scene_dir: Path, out: Path, view_ids: tuple[int, ...],
          config: Optional[Path], seed: Optional[int], dump_debug: bool) -> None:
    """Estimate per-view depth and normal maps of SCENE into OUT."""
    cfg = _effective_cfg(ctx, config, seed)
    _, results = _solve(scene_dir, out, cfg, list(view_ids) or None, dump_debug)
    click.echo(f"Solved {len(results)} view(s) into {out}")


@cli.command(name="fuse")
@click.argument("scene_dir", metavar="SCENE", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("depthmaps", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(dir_okay=False, path_type=Path))
@click.pass_context
def fuse_cmd(ctx: click.Context, scene_dir: Path, depthmaps: Path, out: Path) -> None:
    """Fuse the depth maps in DEPTHMAPS into the point cloud OUT."""
    cfg = _effective_cfg(ctx)
    ids = file_naming.result_view_ids(depthmaps)
    if not ids:
        raise click.BadParameter(f"no depth maps found in {depthmaps}", param_hint="DEPTHMAPS")
    views = [v for v, _ in load_scene(scene_dir)]
    results = {vid: load_depth_normal(depthmaps, vid) for vid in ids}
    cloud = _fuse(views, results, out, cfg)
    click.echo(f"Fused {len(cloud)} points from {len(ids)} view(s) into {out}")


@cli.command(name="evaluate")
@click.argument("cloud", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("gt", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--tau", "taus", type=click.FloatRange(min=0, min_open=True), multiple=True,
              help="Distance threshold; repeatable. Default 0.5% of the ground-truth diameter.")
@click.option("--json", "json_file", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Report file. Default <cloud>_eval.json next to CLOUD.")
def evaluate_cmd(cloud: Path, gt: Path, taus: tuple[float, ...], json_file: Optional[Path]) -> None:
    """Accuracy, completeness and F1 of CLOUD against GT."""
    _evaluate(cloud, gt, list(taus), json_file)


@cli.command()
@click.argument("scene_dir", metavar="SCENE", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("out", type=click.Path(file_okay=False, path_type=Path))
@click.option("--config", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=None)
@click.pass_context
def pipeline(ctx: click.Context, scene_dir: Path, out: Path, config: Optional[Path],
             seed: Optional[int]) -> None:
    """Solve, fuse and (when SCENE has ground truth) evaluate."""
    cfg = _effective_cfg(ctx, config, seed)

    _echo_header("SOLVE")
    views, results = _solve(scene_dir, out, cfg, None, dump_debug=False)
    click.echo(f"Solved {len(results)} view(s) into {out}")

    _echo_header("FUSE")
    cloud_file = out / file_naming.FUSED_CLOUD_FILE
    cloud = _fuse(views, results, cloud_file, cfg)
    click.echo(f"Fused {len(cloud)} points into {cloud_file}")

    gt_file = file_naming.gt_cloud_file(scene_dir)
    if not gt_file.exists():
        logger.warning(f"No ground-truth cloud at {gt_file}; skipping evaluation")
        return
    _echo_header("EVALUATE")
    _evaluate(cloud_file, gt_file, [], None)


###################################################################################################
# Entry points
###################################################################################################
def main(argv: Optional[list[str]] = None) -> int:
    """Run the CLI and map failures onto exit codes."""
    try:
        rv = cli.main(args=argv, prog_name="mcli", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return api.EXIT_CODE.USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return api.EXIT_CODE.USAGE
    except _VALIDATION_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e}")
        click.echo(f"Error: {e}", err=True)
        return api.EXIT_CODE.VALIDATION
    except Exception as e:
        logger.error(f"mcli failed: {e}", exc_info=True)
        click.echo(f"Error: {e}", err=True)
        return api.EXIT_CODE.RUNTIME
    return int(rv) if isinstance(rv, int) else api.EXIT_CODE.OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
