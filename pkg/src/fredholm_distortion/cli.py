"""Command-line front end.

Subcommands::

    simulate     render a scene config to an observation
    sense        apply sensor pixel-integration sampling to an FGRID
    desense      undo it
    extract-psf  crop, normalize and upsample a reference PSF
    estimate     fit distortion parameters to an observation
    compare      residue, V, lambda-hat and chi-squared of two FGRIDs

Every command writes ``<out>.manifest`` next to its primary output. Failed
commands exit nonzero and remove whatever they had written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .estimator import FitOptions, chi_squared, estimate_lambda, fit
from .grid import (FgridError, PointSourceScene, ScalarField, export_png, read_fgrid,
                   write_fgrid)
from .psf import PsfExtractionError, extract_reference_psf, psf_from_config, upsample_psf_frequency
from .sampling import (SamplingError, build_r_matrix, correct_sampling,
                       sampling_matrix_from_values, sensor_sample)
from .simulator import NoiseSpec, add_poisson_noise, distortion_from_config, render_downsampled_scene

log = logging.getLogger("fredholm_distortion")

SCENE_KEYS = {"canvas", "sources", "grid", "psf", "distortion", "noise", "downsample", "fit"}


class ConfigError(ValueError):
    """Invalid command input; the message names the offending field."""


# config handling

def load_config(path) -> tuple[dict, bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg, raw


def _field(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return cfg[key]


def _number(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"field {name!r} must be a finite number, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"field {name!r} must be >= {minimum}, got {value!r}")
    return value


def parse_scene(cfg: dict) -> PointSourceScene:
    unknown = set(cfg) - SCENE_KEYS
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)}")
    canvas = _field(cfg, "canvas")
    if (not isinstance(canvas, list) or len(canvas) != 2
            or not all(isinstance(c, int) and not isinstance(c, bool) and c > 0 for c in canvas)):
        raise ConfigError(f"field 'canvas' must be [width, height] positive integers, got {canvas!r}")
    if "sources" in cfg and "grid" in cfg:
        raise ConfigError("give either 'sources' or 'grid', not both")
    if "grid" in cfg:
        g = cfg["grid"]
        count = _field(g, "count", "grid")
        if not isinstance(count, int) or count < 1:
            raise ConfigError(f"field 'grid.count' must be a positive integer, got {count!r}")
        spacing = _number(_field(g, "spacing", "grid"), "grid.spacing")
        flux = _number(_field(g, "flux", "grid"), "grid.flux", 0)
        build = lambda: PointSourceScene.grid(tuple(canvas), count, spacing, flux)  # noqa: E731
    else:
        sources = _field(cfg, "sources")
        if not isinstance(sources, list):
            raise ConfigError("field 'sources' must be a list")
        rows = []
        for k, s in enumerate(sources):
            where = f"sources[{k}]"
            if not isinstance(s, dict):
                raise ConfigError(f"{where} must be an object")
            rows.append([_number(_field(s, key, where), f"{where}.{key}", 0 if key == "flux" else None)
                         for key in ("x", "y", "flux")])
        build = lambda: PointSourceScene(np.array(rows, float).reshape(-1, 3), tuple(canvas))  # noqa: E731
    try:
        return build()
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from exc


def parse_psf(cfg: dict, base_dir):
    block = _field(cfg, "psf")
    if not isinstance(block, dict):
        raise ConfigError("field 'psf' must be an object")
    try:
        return psf_from_config(block, base_dir)
    except KeyError as exc:
        raise ConfigError(f"psf: missing required field {exc.args[0]!r}") from exc
    except (ValueError, FgridError, OSError) as exc:
        raise ConfigError(f"psf: {exc}") from exc


def parse_distortion(cfg: dict):
    try:
        return distortion_from_config(cfg.get("distortion"))
    except KeyError as exc:
        raise ConfigError(f"distortion: unknown or missing entry {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"distortion: {exc}") from exc


def _downsample(cfg, override):
    d = override if override is not None else cfg.get("downsample", 1)
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ConfigError(f"field 'downsample' must be a positive integer, got {d!r}")
    return d


# output bookkeeping

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class Outputs:
    """Tracks written files so a failed command can remove them."""

    def __init__(self, primary):
        self.primary = Path(primary)
        self.paths: list[Path] = []

    def sibling(self, suffix):
        return self.primary.with_name(self.primary.name + suffix)

    def fgrid(self, field: ScalarField, path=None, preview=True):
        path = Path(path or self.primary)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        write_fgrid(field, path)
        if read_fgrid(path).data.tobytes() != field.data.tobytes():
            raise OSError(f"{path}: read-back mismatch")
        if preview:
            png = path.with_suffix(".png")
            self.paths.append(png)
            export_png(field, png)
        return path

    def text(self, path, payload: dict):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(path)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    def manifest(self, command, digest, seed):
        entries = [{"path": str(p), "sha256": _sha256(p.read_bytes())} for p in self.paths]
        return self.text(self.sibling(".manifest"), {
            "command": command,
            "config_digest": digest,
            "tool_version": __version__,
            "seed": seed,
            "outputs": entries,
        })

    def remove(self):
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _input_digest(command, parts, options):
    h = hashlib.sha256(command.encode())
    for part in parts:
        h.update(hashlib.sha256(part).digest())
    h.update(json.dumps(options, sort_keys=True).encode())
    return h.hexdigest()


def _read_input(path) -> tuple[ScalarField, bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return read_fgrid(path), raw
    except FgridError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# sampling-matrix cache

def cache_dir() -> Path:
    env = os.environ.get("FREDHOLM_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "fredholm_distortion"


def cached_r_matrix(size: int):
    """R of order ``size``, from the on-disk cache when it holds a valid copy."""
    path = cache_dir() / f"r_{size}.npy"
    try:
        values = np.load(path, allow_pickle=False)
        if values.shape == (size, size) and np.all(np.isfinite(values)):
            return sampling_matrix_from_values(values)
        log.info("R cache %s has shape %s, rebuilding", path, values.shape)
    except (OSError, ValueError):
        pass
    R = build_r_matrix(size)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f"{path.stem}.{os.getpid()}.tmp.npy")
        np.save(tmp, R.values)
        os.replace(tmp, path)
    except OSError as exc:
        log.warning("could not write R cache %s: %s", path, exc)
    return R


def _r_pair(shape):
    h, w = shape
    rows = cached_r_matrix(h)
    return rows if h == w else (rows, cached_r_matrix(w))


# commands

def cmd_simulate(args, out: Outputs):
    cfg, raw = load_config(args.config)
    scene = parse_scene(cfg)
    psf = parse_psf(cfg, Path(args.config).parent)
    distortion = parse_distortion(cfg)
    d = _downsample(cfg, args.downsample)
    noise_cfg = cfg.get("noise") or {}
    if not isinstance(noise_cfg, dict):
        raise ConfigError("field 'noise' must be an object")
    lam = _number(noise_cfg.get("lambda", 0.0), "noise.lambda", 0)
    seed = args.seed if args.seed is not None else noise_cfg.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"field 'noise.seed' must be a non-negative integer, got {seed!r}")
    try:
        image = render_downsampled_scene(scene, psf, distortion, d)
    except ValueError as exc:
        raise ConfigError(f"downsample: {exc}") from exc
    image = add_poisson_noise(image, NoiseSpec(lam, seed))
    out.fgrid(image)
    return _input_digest("simulate", [raw], {"seed": seed, "downsample": d}), seed


def _sampling_command(name, op):
    def run(args, out: Outputs):
        field, raw = _read_input(args.input)
        result = op(field, _r_pair(field.shape))
        out.fgrid(result)
        return _input_digest(name, [raw], {}), None
    return run


cmd_sense = _sampling_command("sense", sensor_sample)
cmd_desense = _sampling_command("desense", correct_sampling)


def cmd_extract_psf(args, out: Outputs):
    image, raw = _read_input(args.input)
    parts = [raw]
    others = None
    if args.config:
        cfg, cfg_raw = load_config(args.config)
        others = parse_scene(cfg).sources[:, :2]
        parts.append(cfg_raw)
    if args.window < 1 or args.upsample < 1:
        raise ConfigError("--window and --upsample must be positive")
    psf = extract_reference_psf(image, tuple(args.center), args.window, others)
    fine = upsample_psf_frequency(psf, args.upsample)
    out.fgrid(fine)
    opts = {"center": list(args.center), "window": args.window, "upsample": args.upsample}
    return _input_digest("extract-psf", parts, opts), None


def cmd_estimate(args, out: Outputs):
    cfg, raw = load_config(args.config)
    observed, obs_raw = _read_input(args.input)
    scene = parse_scene(cfg)
    psf = parse_psf(cfg, Path(args.config).parent)
    fit_cfg = dict(cfg.get("fit") or {})
    for key, flag in (("model", args.model), ("starts", args.starts), ("seed", args.seed)):
        if flag is not None:
            fit_cfg[key] = flag
    fit_cfg["downsample"] = _downsample(cfg, args.downsample)
    try:
        options = FitOptions.from_config(fit_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"fit: {exc}") from exc
    if options.model not in ("fredholm", "pinhole"):
        raise ConfigError(f"field 'fit.model' must be 'fredholm' or 'pinhole', got {options.model!r}")
    expected = (scene.canvas[1] // options.downsample, scene.canvas[0] // options.downsample)
    if observed.shape != expected:
        raise ConfigError(f"observation is {observed.shape[1]}x{observed.shape[0]} but the "
                          f"scene canvas at downsample {options.downsample} is "
                          f"{expected[1]}x{expected[0]}")
    report = fit(observed, scene, psf, options=options)
    residue_path = out.fgrid(report.residue, out.primary.with_suffix(".residue.fgrid"))
    payload = report.to_dict()
    payload["residue_path"] = str(residue_path)
    out.text(out.primary, payload)
    log.info("V=%.6g lambda_hat=%.6g chi2=%s", report.value, report.lambda_hat, report.chi2)
    return _input_digest("estimate", [raw, obs_raw], fit_cfg), options.seed


def cmd_compare(args, out: Outputs):
    a, raw_a = _read_input(args.input[0])
    b, raw_b = _read_input(args.input[1])
    if a.shape != b.shape:
        raise ConfigError(f"grid mismatch: {a.shape} vs {b.shape}")
    residue = ScalarField(a.data - b.data)
    v = float(np.dot(residue.data.ravel(), residue.data.ravel()))
    lam = estimate_lambda(a, b)
    chi2 = chi_squared(a, b, lam) if lam > 0 else None
    residue_path = out.fgrid(residue, out.primary.with_suffix(".residue.fgrid"))
    out.text(out.primary, {"value": v, "lambda_hat": lam, "chi2": chi2,
                           "residue_path": str(residue_path)})
    return _input_digest("compare", [raw_a, raw_b], {}), None


COMMANDS = {
    "simulate": cmd_simulate,
    "sense": cmd_sense,
    "desense": cmd_desense,
    "extract-psf": cmd_extract_psf,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fredholm-distortion",
                                     description="Shift-variant field distortion tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scene config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="observation FGRID path")
    p.add_argument("--seed", type=int, help="overrides noise.seed")
    p.add_argument("--downsample", type=int)

    for name, text in (("sense", "apply sensor sampling"), ("desense", "correct sensor sampling")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--out", required=True)

    p = sub.add_parser("extract-psf", help="extract and upsample a reference PSF")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="upsampled PSF table FGRID path")
    p.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--upsample", type=int, default=8)
    p.add_argument("--config", help="scene config; enables the neighbor-isolation check")

    p = sub.add_parser("estimate", help="fit distortion parameters")
    p.add_argument("--config", required=True, help="scene config with optional 'fit' block")
    p.add_argument("--in", dest="input", required=True, help="observation FGRID")
    p.add_argument("--out", required=True, help="report path; residue goes to <out stem>.residue.fgrid")
    p.add_argument("--model", choices=("fredholm", "pinhole"))
    p.add_argument("--starts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--downsample", type=int)

    p = sub.add_parser("compare", help="compare two FGRIDs")
    p.add_argument("--in", dest="input", nargs=2, required=True, metavar=("OBSERVED", "MODEL"))
    p.add_argument("--out", required=True, help="report path; residue goes to <out stem>.residue.fgrid")
    return parser


def _thread_cap():
    env = os.environ.get("FREDHOLM_THREADS")
    if not env:
        return None
    try:
        n = int(env)
    except ValueError:
        raise ConfigError(f"FREDHOLM_THREADS must be a positive integer, got {env!r}") from None
    if n < 1:
        raise ConfigError(f"FREDHOLM_THREADS must be a positive integer, got {env!r}")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(args.out)
    try:
        threads = _thread_cap()
        with threadpool_limits(limits=threads):
            digest, seed = COMMANDS[args.command](args, out)
        out.manifest(args.command, digest, seed)
    except ConfigError as exc:
        out.remove()
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SamplingError, PsfExtractionError, FgridError, ValueError, RuntimeError,
            OSError, np.linalg.LinAlgError) as exc:
        out.remove()
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        out.remove()
        raise
    return 0


if __name__ == "__main__":
    sys.exit(main())
