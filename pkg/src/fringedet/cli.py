"""``fringedet`` command line: gen, train, eval, infer, analyze.

Every command accepts ``--config FILE`` (INI sections named after the
config objects) and repeatable ``--set section.key=value`` overrides, and
writes the fully resolved configuration to ``run_config.ini`` in its
output directory. Passing that file back with ``--config`` replays the run.

Exit codes: 0 success, 1 runtime error, 2 usage error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from fringedet.analysis import (
    NoteRegion,
    Rect,
    assemble_series,
    export_area_vs_rings,
    export_ecc2_vs_rings,
    fit_abs_cos,
    fit_csv,
    read_amplitude_csv,
    table_csv,
)
from fringedet.annotations import (
    DatasetManifest,
    frame_index_of,
    list_frame_csvs,
    read_annotations,
    read_frame_csv,
    resolve_image,
    split_dataset,
    write_annotations,
    write_frame_csv,
)
from fringedet.augment import AugmentConfig, stage1_expand
from fringedet.errors import (
    ConfigError,
    EmptySeries,
    FitDiverged,
    FringeError,
    IoError,
    NoOscillation,
    TrainingDiverged,
)
from fringedet.evaluate import evaluate
from fringedet.geometry import Ellipse, ellipse_outline
from fringedet.gridcodec import GridSpec
from fringedet.loss import LossWeights
from fringedet.model import Frames, GridDetector, ModelConfig, TrainConfig, infer, load_checkpoint, train
from fringedet.synthgen import SceneConfig, directory_digest, generate_dataset, load_png

log = logging.getLogger("fringedet")

ENV_OUT = "FRINGEDET_OUT"
CONFIG_ECHO = "run_config.ini"

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


# -- config plumbing ---------------------------------------------------------

def _parse_value(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        vals = []
        for p in parts:
            try:
                vals.append(int(p))
            except ValueError:
                vals.append(float(p))
        return tuple(vals)
    return text


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    return str(v)


def _apply(obj, section: dict, name: str):
    """Replace dataclass fields of ``obj`` from string values in ``section``."""
    fields = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, text in section.items():
        if key not in fields:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"[{name}] {key} is configured in its own section")
        try:
            changes[key] = _parse_value(text, current)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    return dataclasses.replace(obj, **changes) if changes else obj


def _dump(cp: configparser.ConfigParser, name: str, obj):
    cp[name] = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if not dataclasses.is_dataclass(v):
            cp[name][f.name] = _format_value(v)


def load_sections(args) -> dict:
    """Merge ``--config`` and ``--set`` into ``{section: {key: text}}``."""
    out: dict = {}
    if args.config:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(args.config, encoding="utf-8") as f:
                cp.read_file(f)
        except OSError as exc:
            raise IoError(f"cannot read config {args.config}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        for sec in cp.sections():
            out.setdefault(sec, {}).update(cp[sec])
    for item in args.set or []:
        key, sep, value = item.partition("=")
        sec, dot, name = key.partition(".")
        if not sep or not dot or not sec or not name:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        out.setdefault(sec.strip(), {})[name.strip()] = value
    return out


def _take(sections: dict, name: str) -> dict:
    return sections.pop(name, {})


def _reject_leftovers(sections: dict, allowed=()):
    extra = [s for s in sections if s not in allowed]
    if extra:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(extra))}")


def write_echo(out_dir: Path, command: str, objects: dict, extra: dict | None = None):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["run"] = {"command": command}
    for name, obj in objects.items():
        _dump(cp, name, obj)
    for name, values in (extra or {}).items():
        cp[name] = {k: _format_value(v) for k, v in values.items()}
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / CONFIG_ECHO, "w", encoding="utf-8", newline="") as f:
        cp.write(f)


def default_out(command: str) -> Path:
    return Path(os.environ.get(ENV_OUT, "runs")) / command


def _out_dir(args, command: str, sections: dict) -> Path:
    run = sections.get("run", {})
    if args.out:
        return Path(args.out)
    if "out" in run:
        return Path(run["out"])
    return default_out(command)


# -- data loading ------------------------------------------------------------

def load_frames(manifest_path) -> tuple[Frames, DatasetManifest]:
    m = read_annotations(manifest_path)
    imgs = [load_png(resolve_image(manifest_path, r)) for r in m.records]
    frames = Frames.from_uint8(imgs, [list(r.annotations) for r in m.records])
    frames.width, frames.height = m.image_width, m.image_height
    return frames, m


def _manifest_file(path) -> Path:
    p = Path(path)
    return p / "manifest.csv" if p.is_dir() else p


# -- commands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    sections = load_sections(args)
    scene = SceneConfig.desk() if args.preset == "desk" else SceneConfig()
    scene = _apply(scene, _take(sections, "scene"), "scene")
    gen = {"n": 100, "name": "fake", "split": (0.8, 0.1, 0.1), "split_seed": 0}
    for k, v in _take(sections, "gen").items():
        if k not in gen:
            raise ConfigError(f"[gen] unknown key {k!r}")
        gen[k] = _parse_value(v, gen[k])
    if args.n is not None:
        gen["n"] = args.n
    if args.seed is not None:
        scene = dataclasses.replace(scene, seed=args.seed)
        gen["split_seed"] = args.seed
    if gen["n"] < 0:
        raise ConfigError("--n must be >= 0")
    out = _out_dir(args, "gen", sections)
    _reject_leftovers(sections, ("run",))

    manifest = generate_dataset(scene, gen["n"], out, name=gen["name"])
    for part in split_dataset(manifest, gen["split"], seed=gen["split_seed"]):
        write_annotations(part, out / f"{part.split}.csv")
    write_echo(out, "gen", {"scene": scene}, {"gen": gen, "run": {"out": str(out)}})
    n_obj = sum(len(r.annotations) for r in manifest.records)
    print(f"generated {gen['n']} images with {n_obj} antinodes (seed {scene.seed}) in {out}")
    print(f"digest {directory_digest(out / 'images') if gen['n'] else '-'}")
    return EXIT_OK


def _train_configs(args, sections):
    desk = args.preset == "desk"
    mcfg = _apply(ModelConfig(), _take(sections, "model"), "model")
    acfg = _apply(AugmentConfig.desk() if desk else AugmentConfig(), _take(sections, "augment"), "augment")
    lw = _apply(LossWeights.desk() if desk else LossWeights(), _take(sections, "loss"), "loss")
    tcfg = _apply(TrainConfig(), _take(sections, "train"), "train")
    over = {}
    if args.epochs is not None:
        over["epochs"] = args.epochs
    if args.batch_size is not None:
        over["batch_size"] = args.batch_size
    if args.lr is not None:
        over["max_lr"] = args.lr
    if args.seed is not None:
        over["seed"] = args.seed
        mcfg = dataclasses.replace(mcfg, seed=args.seed)
        acfg = dataclasses.replace(acfg, seed=args.seed)
    tcfg = dataclasses.replace(tcfg, loss=lw, **over)
    return mcfg, acfg, tcfg


def cmd_train(args) -> int:
    sections = load_sections(args)
    mcfg, acfg, tcfg = _train_configs(args, sections)
    data = dict(_take(sections, "data"))
    if args.data:
        data["train"] = str(args.data)
    if args.val:
        data["val"] = str(args.val)
    if "train" not in data:
        raise UsageError("train needs --data (a training manifest)")
    out = _out_dir(args, "train", sections)
    _reject_leftovers(sections, ("run",))

    train_frames, m = load_frames(data["train"])
    if not len(train_frames):
        raise ConfigError(f"training manifest {data['train']} has no frames")
    val_frames = load_frames(data["val"])[0] if data.get("val") else None
    spec = GridSpec(m.image_width, m.image_height, mcfg.rows, mcfg.cols, mcfg.predictors_per_cell,
                    mcfg.vars_per_predictor)

    state = None
    if args.resume:
        state, _ = load_checkpoint(args.resume)
        model = state.model
        mcfg = model.cfg
        log.info("resuming from %s at epoch %d", args.resume, state.epoch)
    else:
        model = GridDetector(mcfg)

    if tcfg.augment and acfg.stage1_copies > 1:
        imgs, anns = stage1_expand(train_frames.images, train_frames.annotations, acfg)
        train_frames = Frames(imgs, anns, train_frames.width, train_frames.height)
        log.info("stage-1 augmentation: %d training frames", len(train_frames))

    write_echo(out, "train", {"model": mcfg, "train": tcfg, "loss": tcfg.loss, "augment": acfg},
               {"data": data, "run": {"out": str(out)}})

    def progress(row):
        print(f"epoch {row['epoch']:4d}  train {row['train_loss']:.6f}  val {row['val_loss']:.6f}  "
              f"ring_acc {row['val_ring_acc']:.3f}  mAP {row['val_map']:.3f}  lr {row['lr']:.2e}", flush=True)

    try:
        state = train(model, train_frames, val_frames, tcfg, acfg, spec, state=state,
                      checkpoint_path=out / "last.npz", progress=None if args.quiet else progress)
    finally:
        if state is not None:
            (out / "history.csv").write_text(state.history.to_csv(), encoding="utf-8")
            (out / "loss_components.csv").write_text(state.history.components_csv(), encoding="utf-8")
    print(f"checkpoint {out / 'last.npz'} after epoch {state.epoch}")
    return EXIT_OK


def _read_detections(det_dir: Path, records) -> list:
    out = []
    for r in records:
        p = det_dir / f"frame_{r.frame_index:06d}.csv"
        out.append(read_frame_csv(p, with_confidence=True) if p.exists() else [])
    return out


def cmd_eval(args) -> int:
    sections = load_sections(args)
    ev = {"sigma": 1.7, "iou": 0.5, "threshold": 0.5}
    for k, v in _take(sections, "eval").items():
        if k not in ev:
            raise ConfigError(f"[eval] unknown key {k!r}")
        ev[k] = float(v)
    if args.sigma is not None:
        ev["sigma"] = args.sigma
    if args.threshold is not None:
        ev["threshold"] = args.threshold
    out = _out_dir(args, "eval", sections)
    _reject_leftovers(sections, ("run",))
    truth_path = _manifest_file(args.truth)
    manifest = read_annotations(truth_path)
    truths = [list(r.annotations) for r in manifest.records]
    if args.pred:
        dets = _read_detections(Path(args.pred), manifest.records)
    elif args.checkpoint:
        state, _ = load_checkpoint(args.checkpoint)
        spec = state.model.grid_spec(manifest.image_width, manifest.image_height)
        imgs = [load_png(resolve_image(truth_path, r)) for r in manifest.records]
        dets = infer(state.model, imgs, spec, ev["threshold"])
    else:
        raise UsageError("eval needs --pred DIR or --checkpoint FILE")
    report = evaluate(dets, truths, volunteer_sigma=ev["sigma"], iou_threshold=ev["iou"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "summary.txt").write_text(report.summary() + "\n", encoding="utf-8")
    write_echo(out, "eval", {}, {"eval": ev, "run": {"out": str(out)}})
    print(report.summary())
    return EXIT_OK


def _overlay(image: np.ndarray, truths, dets, scale: int):
    """RGB overlay: truth outlines (green, ring label above), predictions (red, label below)."""
    from PIL import Image, ImageDraw

    h, w = image.shape
    im = Image.fromarray(image).convert("RGB").resize((w * scale, h * scale), Image.NEAREST)
    draw = ImageDraw.Draw(im)

    def outline(e: Ellipse, color):
        pts = ellipse_outline(e, 72) * scale + (scale - 1) / 2.0
        draw.polygon([tuple(p) for p in pts], outline=color)

    for t in truths:
        outline(t.ellipse, (0, 220, 0))
        _, hy = t.ellipse.half_extents()
        draw.text((t.ellipse.cx * scale, (t.ellipse.cy - hy) * scale - 11), f"{t.rings:.1f}", fill=(0, 220, 0))
    for d in dets:
        outline(d.ellipse, (230, 30, 30))
        _, hy = d.ellipse.half_extents()
        draw.text((d.ellipse.cx * scale, (d.ellipse.cy + hy) * scale + 1), f"{d.rings:.1f}", fill=(230, 30, 30))
    return im


def cmd_infer(args) -> int:
    sections = load_sections(args)
    inf = {"threshold": 0.5, "mode": "normalized", "overlay": False, "scale": 0}
    for k, v in _take(sections, "infer").items():
        if k not in inf:
            raise ConfigError(f"[infer] unknown key {k!r}")
        inf[k] = _parse_value(v, inf[k])
    if args.threshold is not None:
        inf["threshold"] = args.threshold
    if args.overlay:
        inf["overlay"] = True
    out = _out_dir(args, "infer", sections)
    _reject_leftovers(sections, ("run",))

    state, _ = load_checkpoint(args.checkpoint)
    src = Path(args.data)
    if src.is_dir() and not (src / "manifest.csv").exists():
        paths = sorted(p for p in src.iterdir() if p.suffix.lower() == ".png")
        indices = [frame_index_of(p) if p.stem.startswith("frame_") else i for i, p in enumerate(paths)]
        truths = [[] for _ in paths]
    else:
        mpath = _manifest_file(src)
        m = read_annotations(mpath)
        paths = [resolve_image(mpath, r) for r in m.records]
        indices = [r.frame_index for r in m.records]
        truths = [list(r.annotations) for r in m.records]
    imgs = [load_png(p) for p in paths]
    if not imgs:
        print("no frames found")
        return EXIT_OK
    h, w = imgs[0].shape
    spec = state.model.grid_spec(w, h)
    dets = infer(state.model, imgs, spec, inf["threshold"], inf["mode"])
    for idx, img, d, t in zip(indices, imgs, dets, truths):
        write_frame_csv(out / "detections" / f"frame_{idx:06d}.csv", d, with_confidence=True)
        if inf["overlay"]:
            scale = inf["scale"] or max(1, 512 // max(w, h))
            im = _overlay(img, t, d, scale)
            (out / "overlays").mkdir(parents=True, exist_ok=True)
            im.save(out / "overlays" / f"frame_{idx:06d}.png", format="PNG")
    write_echo(out, "infer", {}, {"infer": inf, "run": {"out": str(out)}})
    print(f"{sum(len(d) for d in dets)} detections in {len(dets)} frames -> {out / 'detections'}")
    return EXIT_OK


def parse_roi(text: str) -> NoteRegion:
    """``LABEL:x0,y0,x1,y1`` (rectangle) or ``LABEL:ellipse:cx,cy,a,b,theta``; optional ``@freq``."""
    freq = None
    if "@" in text:
        text, f = text.rsplit("@", 1)
        freq = float(f)
    label, sep, rest = text.partition(":")
    if not sep or not label:
        raise UsageError(f"bad --roi {text!r}")
    try:
        if rest.startswith("ellipse:"):
            cx, cy, a, b, th = (float(v) for v in rest[len("ellipse:"):].split(","))
            return NoteRegion(label, Ellipse(cx, cy, a, b, th), freq)
        x0, y0, x1, y1 = (float(v) for v in rest.split(","))
    except ValueError:
        raise UsageError(f"bad --roi {text!r}") from None
    return NoteRegion(label, Rect(x0, y0, x1, y1), freq)


def _plots(out: Path, series, fits, area_rows, ecc_rows, audio):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping plots")
        return
    for label, s in series.items():
        fig, ax = plt.subplots(figsize=(7, 3))
        ax.plot(s.times * 1e3, s.rings, ".", ms=3, label="detected rings")
        if label in fits:
            f = fits[label]
            t = np.linspace(s.times[0], s.times[-1], 2000)
            ax.plot(t * 1e3, np.abs(f.A * np.cos(2 * np.pi * f.f * t + f.phase)), "-", lw=1,
                    label=f"|A cos| fit, {f.f:.1f} Hz")
        if audio is not None:
            at, aa = audio
            ax2 = ax.twinx()
            ax2.plot(at * 1e3, aa, color="gray", lw=0.8, alpha=0.7, label="audio")
            ax2.set_ylabel("audio amplitude")
        ax.set_xlabel("time (ms)")
        ax.set_ylabel("rings")
        ax.set_title(label)
        ax.legend(loc="upper right", fontsize=7)
        fig.tight_layout()
        fig.savefig(out / f"series_{label}.png", dpi=120)
        plt.close(fig)
    for name, rows, ylab in (("area_vs_rings", area_rows, "area (px^2)"), ("ecc2_vs_rings", ecc_rows, "e^2")):
        if not rows:
            continue
        fig, ax = plt.subplots(figsize=(4, 3))
        ax.scatter([r[2] for r in rows], [r[1] for r in rows], s=4)
        ax.set_xlabel("rings")
        ax.set_ylabel(ylab)
        fig.tight_layout()
        fig.savefig(out / f"{name}.png", dpi=120)
        plt.close(fig)


def cmd_analyze(args) -> int:
    sections = load_sections(args)
    out = _out_dir(args, "analyze", sections)
    _reject_leftovers(sections, ("run",))
    if not args.frame_rate > 0:
        raise UsageError("--frame-rate must be positive")
    det_dir = Path(args.detections)
    paths = list_frame_csvs(det_dir)
    indices = [frame_index_of(p) for p in paths]
    dets = [read_frame_csv(p, with_confidence=True) for p in paths]
    out.mkdir(parents=True, exist_ok=True)

    area_rows = export_area_vs_rings(dets, indices)
    ecc_rows = export_ecc2_vs_rings(dets, indices)
    (out / "area_vs_rings.csv").write_text(table_csv(["frame", "area_px2", "rings"], area_rows), encoding="utf-8")
    (out / "ecc2_vs_rings.csv").write_text(table_csv(["frame", "ecc2", "rings"], ecc_rows), encoding="utf-8")

    series, fits = {}, {}
    for roi_text in args.roi or []:
        region = parse_roi(roi_text)
        try:
            s = assemble_series(dets, region, args.frame_rate)
        except EmptySeries as exc:
            log.warning("%s", exc)
            continue
        series[region.label] = s
        (out / f"series_{region.label}.csv").write_text(
            table_csv(["time_s", "rings"], zip(s.times, s.rings)), encoding="utf-8")
        try:
            fits[region.label] = fit_abs_cos(s, f0=args.f0 or region.expected_freq)
        except NoOscillation as exc:
            log.warning("%s: %s", region.label, exc)
        except FitDiverged as exc:
            log.warning("%s: %s", region.label, exc)
            fits[region.label] = exc.best
    (out / "fit.csv").write_text(fit_csv(list(fits.items())), encoding="utf-8")
    if args.plot:
        audio = read_amplitude_csv(args.audio) if args.audio else None
        _plots(out, series, fits, area_rows, ecc_rows, audio)
    write_echo(out, "analyze", {}, {"analyze": {"frame_rate": args.frame_rate, "roi": ";".join(args.roi or [])},
                                    "run": {"out": str(out)}})
    for label, f in fits.items():
        print(f"{label}: A={f.A:.3f} rings  f={f.f:.2f} Hz  phase={f.phase:.3f} rad  rms={f.residual_rms:.3f}")
    print(f"{len(paths)} frames, {len(area_rows)} detections -> {out}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fringedet", description="Fringe antinode detection toolkit.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file (e.g. a run_config.ini echo)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
        sp.add_argument("--out", help=f"output directory (default ${ENV_OUT}/<command>)")

    g = sub.add_parser("gen", help="generate a synthetic dataset")
    common(g)
    g.add_argument("--n", type=int, help="number of images")
    g.add_argument("--seed", type=int)
    g.add_argument("--preset", choices=("desk", "full"), default="desk")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a detector")
    common(t)
    t.add_argument("--data", help="training manifest (CSV or dataset directory)")
    t.add_argument("--val", help="validation manifest")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float, help="peak learning rate")
    t.add_argument("--seed", type=int)
    t.add_argument("--preset", choices=("desk", "full"), default="desk")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score detections against ground truth")
    common(e)
    e.add_argument("--truth", required=True, help="ground-truth manifest")
    e.add_argument("--pred", help="directory of detection CSVs")
    e.add_argument("--checkpoint", help="run the model instead of reading --pred")
    e.add_argument("--sigma", type=float, help="volunteer ring-count sigma (default 1.7)")
    e.add_argument("--threshold", type=float, help="existence threshold with --checkpoint")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="detect antinodes in frames")
    common(i)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--data", required=True, help="manifest, dataset directory, or directory of PNGs")
    i.add_argument("--threshold", type=float)
    i.add_argument("--overlay", action="store_true", help="also write annotated PNGs")
    i.set_defaults(func=cmd_infer)

    a = sub.add_parser("analyze", help="ring time series, frequency fits, scatter tables")
    common(a)
    a.add_argument("--detections", required=True, help="directory of detection CSVs")
    a.add_argument("--frame-rate", type=float, required=True, help="frames per second")
    a.add_argument("--roi", action="append", help="LABEL:x0,y0,x1,y1 or LABEL:ellipse:cx,cy,a,b,theta[@Hz]")
    a.add_argument("--f0", type=float, help="initial frequency guess (Hz)")
    a.add_argument("--plot", action="store_true")
    a.add_argument("--audio", help="time,amplitude CSV to overlay on series plots")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fringedet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"fringedet: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FringeError, OSError) as exc:
        print(f"fringedet: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
