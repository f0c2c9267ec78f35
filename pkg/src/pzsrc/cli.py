"""Command-line driver: ``pzsrc <command> [options]``.

Commands: basis, build-dict, classify, sweep, correlate, synth.  Settings are
resolved as built-in defaults, then ``--config FILE``, then explicit flags.
Every run writes the resolved settings to ``run_config.json`` in the output
directory; passing that file back with ``--config`` repeats the run exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from pzsrc import __version__
from pzsrc.classify import (atom_correlations, neighbor_correlation, write_correlations_csv,
                            write_decisions_csv, write_report_csv)
from pzsrc.dictionary import AuxScheme, load_dictionary, save_dictionary
from pzsrc.errors import ConfigError, DataError, PZError
from pzsrc.moments import build_basis, build_disk_geometry, save_basis
from pzsrc.pipeline import (FeaturePipeline, RunConfig, check_scheme, evaluate_split, load_images,
                            load_split, prepare)
from pzsrc.synth import TargetSpec, default_targets, generate_dataset, load_manifest, make_manifest

log = logging.getLogger("pzsrc")

COMMANDS = ("basis", "build-dict", "classify", "sweep", "correlate", "synth")


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "1", "yes"):
        return True
    if text.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    opts = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = opts.add_argument_group("run settings")
    g.add_argument("--config", help="JSON settings file (e.g. a previous run_config.json)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--manifest", help="dataset manifest.json")
    g.add_argument("--dictionary", help="dictionary file written by build-dict")
    g.add_argument("--n-max", dest="n_max", type=int, help="maximum moment degree (default 10)")
    g.add_argument("--side", type=int, help="image side in pixels (default 96)")
    g.add_argument("--fusion", type=_on_off, help="fuse magnitude and phase: on|off (default on)")
    g.add_argument("--xi", type=float, help="scale normalization target for the zeroth moment")
    g.add_argument("--aux", choices=["none", "fix", "mov", "corr"], help="auxiliary atom scheme")
    g.add_argument("--window", type=int, help="moving-average window W")
    g.add_argument("--circular", type=_on_off, help="wrap the moving-average window around 360 deg")
    g.add_argument("--upsilon", type=float, help="correlation threshold")
    g.add_argument("--gamma", type=int, help="sparsity order (default 5)")
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g.add_argument("--residual-tol", dest="residual_tol", type=float)
    g.add_argument("--step", choices=["unit", "spectral"], help="IHT step policy")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--split", choices=["train", "test"], help="split to classify (default test)")
    g.add_argument("--figures", type=_on_off, help="render report figures: on|off")
    g.add_argument("--sweep-param", dest="sweep_param", choices=["window", "upsilon"])
    g.add_argument("--values", dest="sweep_values", type=float, nargs="+")
    g.add_argument("--class", dest="class_id")
    g.add_argument("--references", type=int, nargs="+")
    g.add_argument("--synth-spec", dest="synth_spec", help="JSON file describing synthetic classes")
    g.add_argument("--n-train", dest="n_train", type=int)
    g.add_argument("--n-test", dest="n_test", type=int)
    g.add_argument("--aspect-irregularity", dest="aspect_irregularity", type=float)
    g.add_argument("--clutter-sigma", dest="clutter_sigma", type=float)
    g.add_argument("--informative-phase", dest="informative_phase", type=_on_off)
    g.add_argument("-v", "--verbose", action="store_true", default=False)

    parser = argparse.ArgumentParser(prog="pzsrc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pzsrc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "basis": "build and save the moment basis",
        "build-dict": "featurize the training split and save the dictionary",
        "classify": "encode and classify a split against a saved dictionary",
        "sweep": "accuracy over a range of window or threshold values",
        "correlate": "atom correlation curves in moment and pixel space",
        "synth": "render a synthetic dataset and its manifest",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[opts], help=helps[name], argument_default=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    given = vars(args).copy()
    command = given.pop("command")
    given.pop("verbose", None)
    path = given.pop("config", None)
    cfg = RunConfig.load(path) if path else RunConfig()
    data = cfg.__dict__ | given | {"command": command}
    return RunConfig.from_dict(data).validate()


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise ConfigError("--out is required")
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _manifest(cfg: RunConfig):
    if not cfg.manifest:
        raise ConfigError(f"{cfg.command} needs --manifest")
    manifest = load_manifest(cfg.manifest)
    if manifest.side != cfg.side:
        raise ConfigError(f"manifest side {manifest.side} does not match --side {cfg.side}")
    return manifest


def _write_config(out: Path, cfg: RunConfig) -> None:
    (out / "run_config.json").write_text(cfg.to_json(), encoding="utf-8")


def cmd_basis(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    basis = build_basis(cfg.n_max, build_disk_geometry(cfg.side))
    save_basis(out / "basis.pzb", basis)
    log.info("basis: n_max=%d side=%d P=%d N=%d", basis.n_max, basis.side, basis.P, basis.N)
    _write_config(out, cfg)


def cmd_build_dict(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    manifest = _manifest(cfg)
    scheme = cfg.aux_scheme()
    exp = prepare(manifest, cfg.n_max, cfg.fusion, cfg.xi, cfg.workers, with_test=False)
    dictionary = exp.dictionary(scheme)
    cfg.xi = exp.pipeline.xi
    save_dictionary(out / "dictionary.pzd", dictionary)
    build_log = {
        "P": dictionary.P,
        "Q": dictionary.Q,
        "scheme": scheme.describe(),
        "xi": cfg.xi,
        "classes": [{"id": b.class_id, "J": b.J, "L": b.L} for b in dictionary.blocks],
    }
    (out / "build_log.json").write_text(json.dumps(build_log, indent=2) + "\n", encoding="utf-8")
    log.info("dictionary: P=%d Q=%d scheme=%s (%s)", dictionary.P, dictionary.Q, scheme.describe(),
             ", ".join(f"{b.class_id}: J={b.J} L={b.L}" for b in dictionary.blocks))
    _write_config(out, cfg)


def _feature_pipeline(cfg: RunConfig, manifest) -> FeaturePipeline:
    pipe = FeaturePipeline(build_basis(cfg.n_max, build_disk_geometry(cfg.side)), cfg.fusion, cfg.xi)
    if pipe.xi is None:
        if not manifest.train:
            raise DataError("xi is unset and the manifest has no training item to derive it from")
        pipe.calibrate(load_images(manifest, manifest.train[:1])[0])
        cfg.xi = pipe.xi
    return pipe


def cmd_classify(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    if not cfg.dictionary:
        raise ConfigError("classify needs --dictionary")
    dictionary = load_dictionary(cfg.dictionary)
    P = (cfg.n_max + 1) ** 2
    if dictionary.P != P:
        raise ConfigError(f"dictionary has P={dictionary.P} moments but n_max={cfg.n_max} gives P={P}")
    manifest = _manifest(cfg)
    pipe = _feature_pipeline(cfg, manifest)
    data = load_split(manifest, cfg.split, pipe, cfg.workers)
    unknown = {it.class_id for it in data.items} - set(dictionary.class_ids)
    if unknown:
        raise DataError(f"{cfg.split} split has classes missing from the dictionary: {sorted(unknown)}")
    report, decisions = evaluate_split(dictionary, data, cfg.iht_config(), cfg.workers)
    rows = [(it.path, it.class_id, d) for it, d in zip(data.items, decisions)]
    write_decisions_csv(out / "decisions.csv", rows, dictionary.class_ids)
    write_report_csv(out / "report.csv", report)
    if cfg.figures:
        from pzsrc.plotting import confusion_figure
        confusion_figure(report, out / "confusion.png")
    log.info("omega = %.2f%% over %d items", report.omega, len(decisions))
    print(f"omega {report.omega:.6f}")
    _write_config(out, cfg)


def cmd_sweep(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    if cfg.sweep_param not in ("window", "upsilon"):
        raise ConfigError("sweep needs --sweep-param window|upsilon")
    if not cfg.sweep_values:
        raise ConfigError("sweep needs at least one value (--values)")
    manifest = _manifest(cfg)
    exp = prepare(manifest, cfg.n_max, cfg.fusion, cfg.xi, cfg.workers)
    cfg.xi = exp.pipeline.xi
    if not exp.test.items:
        raise DataError("test split is empty")
    J = [s.J for s in exp.subdicts]
    iht = cfg.iht_config()
    rows = []
    for value in cfg.sweep_values:
        if cfg.sweep_param == "window":
            if value != int(value):
                raise ConfigError(f"window values must be integers, got {value}")
            scheme = AuxScheme("mov", window=int(value), circular=cfg.circular)
            ratio = value / float(np.mean(J))
        else:
            scheme = AuxScheme("corr", upsilon=value)
            ratio = None
        check_scheme(scheme, exp.subdicts)
        omega = exp.evaluate(scheme, iht, cfg.workers).omega
        log.info("%s -> omega %.2f%%", scheme.describe(), omega)
        rows.append((value, ratio, omega))
    with (out / "sweep.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([cfg.sweep_param, "ratio_w_over_j", "omega"])
        for value, ratio, omega in rows:
            w.writerow([f"{value:.6f}", "" if ratio is None else f"{ratio:.6f}", f"{omega:.6f}"])
    if cfg.figures:
        from pzsrc.plotting import sweep_figure
        sweep_figure([r[0] for r in rows], [r[2] for r in rows], out / "sweep.png",
                     "window W" if cfg.sweep_param == "window" else "threshold")
    _write_config(out, cfg)


def cmd_correlate(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    manifest = _manifest(cfg)
    class_id = cfg.class_id or manifest.class_ids[0]
    if class_id not in manifest.class_ids:
        raise ConfigError(f"unknown class {class_id!r}")
    pipe = _feature_pipeline(cfg, manifest)
    train = load_split(manifest, "train", pipe, cfg.workers)
    cols = train.columns(class_id)
    if cols.size == 0:
        raise DataError(f"class {class_id!r} has no training items")
    angles = [train.items[i].angle for i in cols]
    if all(a is not None for a in angles):
        cols = cols[np.argsort(np.asarray(angles, dtype=float), kind="stable")]
    pixels = train.vectors[:, cols]
    atoms = train.features[:, cols]
    if cfg.dictionary:
        dictionary = load_dictionary(cfg.dictionary)
        block = dictionary.block(class_id)
        if block.J != cols.size or dictionary.P != atoms.shape[0]:
            raise ConfigError("dictionary does not match the manifest's training split for this class")
        atoms = dictionary.matrix[:, block.primary.start:block.primary.stop]
    refs = cfg.references or [0]
    tables = {"pz": atom_correlations(atoms, refs), "pixel": atom_correlations(pixels, refs)}
    write_correlations_csv(out / "correlations.csv", tables, refs)
    if cfg.figures:
        from pzsrc.plotting import correlation_figure
        correlation_figure(tables, refs, out / "correlations.png", title=f"class {class_id}")
    log.info("mean neighbour correlation: pz %.6f, pixel %.6f",
             neighbor_correlation(atoms), neighbor_correlation(pixels))
    _write_config(out, cfg)


def _synth_targets(cfg: RunConfig):
    if not cfg.synth_spec:
        return default_targets(cfg.aspect_irregularity, cfg.clutter_sigma, cfg.seed, cfg.informative_phase)
    try:
        data = json.loads(Path(cfg.synth_spec).read_text(encoding="utf-8"))
        return [(str(c["id"]), TargetSpec.from_json(c["spec"])) for c in data["classes"]]
    except OSError as exc:
        raise ConfigError(f"cannot read {cfg.synth_spec}: {exc.strerror or exc}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{cfg.synth_spec}: malformed synthetic spec ({exc})") from exc


def cmd_synth(cfg: RunConfig) -> None:
    out = _out_dir(cfg)
    manifest = make_manifest(_synth_targets(cfg), cfg.side, cfg.n_train, cfg.n_test)
    path = generate_dataset(manifest, out)
    log.info("wrote %d train and %d test chips; manifest %s", len(manifest.train), len(manifest.test), path)
    _write_config(out, cfg)


HANDLERS = {
    "basis": cmd_basis,
    "build-dict": cmd_build_dict,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "correlate": cmd_correlate,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        HANDLERS[cfg.command](cfg)
    except PZError as exc:
        print(f"pzsrc {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
