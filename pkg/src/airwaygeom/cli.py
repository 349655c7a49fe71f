"""Command-line interface: ``airwaygeom <subcommand> [options]``.

Every subcommand writes its outputs plus ``<out stem>.meta.json`` holding the
arguments, input digests, seed and library versions of the run.  Exit status
is 0 on success, 1 on a usage error and 2 when the input data is unusable.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__
from .codes import CodeError, named_pool, parse_angle
from .volume import DEFAULT_AIR_THRESHOLD, Label, load_volume, save_volume

logger = logging.getLogger("airwaygeom")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- small helpers ---------------------------------------------------------

def _triple(text: str, kind=int) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad value in {text!r}") from None


def _float_triple(text):
    return _triple(text, float)


def _seed_arg(text: str):
    return "auto" if text == "auto" else _triple(text)


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _versions() -> dict:
    out = {"airwaygeom": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "scikit-learn", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=False) + "\n")


def meta_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name.split(".")[0] + ".meta.json")


def _pct(x: float) -> str:
    return "n/a" if x is None or not math.isfinite(x) else f"{100 * x:.2f}%"


class Run:
    """Bookkeeping for one subcommand invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.inputs: dict[str, Path] = {}
        self.outputs: list[Path] = []
        self.results: dict = {}

    def input(self, name: str, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"{name}: no such file: {path}")
        self.inputs[name] = path
        return path

    def output(self, path) -> Path:
        path = Path(path)
        if not path.parent.is_dir():
            raise FileNotFoundError(f"output directory does not exist: {path.parent}")
        return path

    def wrote(self, *paths) -> None:
        self.outputs.extend(Path(p) for p in paths)

    def finish(self, primary) -> None:
        params = {k: v for k, v in vars(self.args).items() if k not in ("func", "verbose")}
        meta = {
            "command": self.args.command,
            "argv": self.argv,
            "parameters": params,
            "seed": params.get("seed"),
            "inputs": {k: {"path": str(p), "sha256": _digest(p)} for k, p in self.inputs.items()},
            "outputs": [str(p) for p in self.outputs],
            "results": self.results,
            "versions": _versions(),
        }
        _write_json(meta_path(primary), meta)


# -- volumes ---------------------------------------------------------------

def _auto_lumen_seed(volume, hu_threshold: float) -> tuple[int, int, int]:
    """Centre of the largest enclosed air region in the first slice that has
    one; a trachea entering through the top of the grid is found this way."""
    nz = volume.shape[0]
    for z in range(nz):
        air = (volume.intensities[z] < hu_threshold) & (volume.labels[z] == Label.UNLABELED)
        lab, n = ndimage.label(air)
        if n == 0:
            continue
        border = np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))
        sizes = np.bincount(lab.ravel(), minlength=n + 1)
        sizes[0] = 0
        sizes[border] = 0
        if sizes.max() == 0:
            continue
        best = int(np.argmax(sizes))
        ys, xs = np.nonzero(lab == best)
        cy, cx = ys.mean(), xs.mean()
        i = int(np.argmin((ys - cy) ** 2 + (xs - cx) ** 2))
        return int(xs[i]), int(ys[i]), z
    raise ValueError("no enclosed air region found for an automatic lumen seed; pass --lumen-seed x,y,z")


def _auto_parenchyma_seed(volume, hu_threshold: float) -> tuple[int, int, int]:
    nx, ny, nz = volume.dims
    for x, y, z in ((0, 0, 0), (nx - 1, 0, 0), (0, ny - 1, 0), (nx - 1, ny - 1, 0),
                    (0, 0, nz - 1), (nx - 1, 0, nz - 1), (0, ny - 1, nz - 1), (nx - 1, ny - 1, nz - 1)):
        if volume.intensities[z, y, x] < hu_threshold:
            return x, y, z
    raise ValueError("no air at the grid corners for an automatic parenchyma seed")


def _lumen_seed_from_truth(truth, volume) -> list[int]:
    a = truth.airways["B1"]
    spacing = np.array(volume.spacing_mm)
    nx, ny, nz = volume.dims
    step = 0.25 * spacing.min()
    t = 0.0
    while t < a.length:
        p = a.start + t * a.direction
        x, y, z = (int(math.floor(c + 0.5)) for c in p / spacing)
        if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz and truth.lumen_mask[z, y, x]:
            q = a.start + (t + 2 * spacing.max()) * a.direction
            return [int(math.floor(c + 0.5)) for c in q / spacing]
        t += step
    raise ValueError("trachea does not cross the grid")


def cmd_phantom(run: Run) -> None:
    from .phantom import (PhantomSpec, generate_phantom, inject_pinhole, pinhole_sites,
                          standard_phantom_spec)
    a = run.args
    out = run.output(a.out)
    if a.spec:
        spec = PhantomSpec.load(run.input("spec", a.spec))
        if a.seed is not None:
            spec.rng_seed = a.seed
    else:
        spec = standard_phantom_spec(a.generations, a.spacing, parenchyma_hu=a.parenchyma_hu,
                                     noise_sd=a.noise_sd, rng_seed=a.seed or 0, seed=a.angle_seed,
                                     small_branch=None if a.no_small_branch else "B11111")
    volume, truth = generate_phantom(spec)
    for site in a.pinhole or ():
        volume = inject_pinhole(volume, site, a.pinhole_radius, spec.lumen_hu)
    save_volume(volume, out, with_labels=False)
    truth_path = out.with_name(out.name.split(".")[0] + ".truth.json")
    bifs = {code: {"branch_point": b.branch_point, "parent_direction": b.parent_direction,
                   "angles": b.angles, "parent_diameter": b.parent_diameter,
                   "daughter_diameters": b.daughter_diameters, "parent_length": b.parent_length}
            for code, b in sorted(truth.bifurcations.items())}
    doc = {
        "spec": spec.to_dict(),
        "angles": truth.angles(),
        "bifurcations": bifs,
        "lumen_voxels": truth.lumen_voxels,
        "exterior_air_voxels": truth.exterior_air_voxels,
        "wall_voxels": truth.wall_voxels,
        "lumen_seed": _lumen_seed_from_truth(truth, volume),
        "pinholes": [list(p) for p in a.pinhole or ()],
        "pinhole_sites": [list(s) for s in pinhole_sites(truth)] if truth.exterior_air_voxels else [],
    }
    _write_json(truth_path, doc)
    raw = out.with_suffix(".raw")
    run.wrote(out, raw, truth_path)
    run.results = {"dims": list(volume.dims), "lumen_voxels": truth.lumen_voxels,
                   "bifurcations": len(truth.bifurcations)}
    print(f"wrote {out} ({'x'.join(map(str, volume.dims))} voxels, {len(truth.bifurcations)} bifurcations)")


def _plugs(run: Run):
    from .floodfill import PlugBox
    a = run.args
    plugs = [PlugBox.parse(p) for p in a.plug or ()]
    if a.plug_file:
        data = json.loads(run.input("plug_file", a.plug_file).read_text())
        items = data["plugs"] if isinstance(data, dict) else data
        plugs += [PlugBox.parse(p) if isinstance(p, str) else PlugBox.from_dict(p) for p in items]
    return plugs


def cmd_segment(run: Run) -> None:
    from .floodfill import FillConfig, limited_flood_fill, segment_airways
    a = run.args
    src = run.input("volume", a.volume)
    out = run.output(a.out)
    plugs = _plugs(run)
    volume = load_volume(src)
    for p in plugs:
        p.check(volume.dims)
    cap = a.max_voxels or 2**62
    lumen_seed = _auto_lumen_seed(volume, a.hu_threshold) if a.lumen_seed == "auto" else a.lumen_seed
    lumen_cfg = FillConfig(lumen_seed, Label.LUMEN, cap, a.hole_size, a.connectivity, a.hu_threshold)
    if a.parenchyma_seed is None:
        seg = volume.copy()
        reports = [("lumen", limited_flood_fill(seg, lumen_cfg, plugs))]
    else:
        p_seed = (_auto_parenchyma_seed(volume, a.hu_threshold) if a.parenchyma_seed == "auto"
                  else a.parenchyma_seed)
        p_hole = a.hole_size if a.parenchyma_hole_size is None else a.parenchyma_hole_size
        p_cfg = FillConfig(p_seed, Label.PARENCHYMA, cap, p_hole, a.connectivity, a.hu_threshold)
        seg, (first, second) = segment_airways(volume, p_cfg, lumen_cfg, plugs)
        reports = [("parenchyma", first), ("lumen", second)]
    save_volume(seg, out, with_labels=True)
    run.wrote(out, out.with_suffix(".raw"), out.with_name(out.stem + ".labels.json"),
              out.with_name(out.stem + ".labels.raw"))
    run.results = {"lumen_seed": list(lumen_seed), **{name: r.to_dict() for name, r in reports}}
    for name, r in reports:
        print(f"{name}: {r.voxels_filled} voxels in {r.front_layers} layers ({r.stop_reason.value})")
    if reports[-1][1].stop_reason.value == "SeedInvalid":
        raise ValueError(f"lumen seed {tuple(lumen_seed)} is not unlabeled air")


def cmd_export_slice(run: Run) -> None:
    from .volume import export_slice
    a = run.args
    src = run.input("volume", a.volume)
    out = run.output(a.out)
    labels = None
    if a.overlay:
        labels = src.with_name(src.stem + ".labels.json")
        run.input("labels", labels)
    volume = load_volume(src, labels)
    export_slice(volume, a.axis, a.index, out, a.overlay, a.level, a.width)
    run.wrote(out)
    print(f"wrote {out}")


# -- trees -----------------------------------------------------------------

def _generations(text: str) -> set[int]:
    out = set()
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            out.update(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.add(int(part))
    return out


def cmd_extract(run: Run) -> None:
    from .bifurcation import AnnealConfig, BifurcationParams, collect_angles, extract_tree
    from .bifurcation.tree import write_angles_csv
    a = run.args
    src = run.input("volume", a.volume)
    labels = run.input("labels", src.with_name(src.stem + ".labels.json"))
    out = run.output(a.out)
    angles_path = run.output(a.angles or out.with_name(out.name.split(".")[0] + ".angles.csv"))
    init = None
    if a.trachea_init:
        init = BifurcationParams.from_dict(json.loads(run.input("trachea_init", a.trachea_init).read_text()))
    volume = load_volume(src, labels)
    if volume.count(Label.LUMEN) == 0:
        raise ValueError(f"{src}: no lumen voxels; run segment first")
    config = AnnealConfig(max_evaluations=a.evaluations, seed=a.seed)
    tree = extract_tree(volume, init, config, max_generation=a.max_generation)
    tree.save(out)
    gens = _generations(a.angle_generations) if a.angle_generations else set(range(1, tree.max_generation + 1))
    rows, missing = collect_angles(tree, gens)
    write_angles_csv(rows, angles_path)
    run.wrote(out, angles_path)
    run.results = {"bifurcations": sorted(str(c) for c in tree), "angles": len(rows),
                   "missing": [str(m) for m in missing],
                   "not_converged": sorted(str(c) for c, e in tree.items() if not e.converged)}
    print(f"{len(tree)} bifurcations, {len(rows)} angles; wrote {out} and {angles_path}")


# -- machine learning ------------------------------------------------------

def _pool(dataset, spec: str | None) -> list[str]:
    if not spec or spec == "all":
        return list(dataset.codes)
    if "," in spec or spec.startswith("B"):
        codes = [c.strip() for c in spec.split(",") if c.strip()]
        for c in codes:
            parse_angle(c)
        return codes
    return [str(c) for c in named_pool(spec)]


def _dataset(run: Run):
    from .ml import read_dataset
    return read_dataset(run.input("data", run.args.data))


def cmd_simulate(run: Run) -> None:
    from .ml import planted_dataset, write_dataset
    a = run.args
    out = run.output(a.out)
    codes = [str(c) for c in named_pool(a.pool)] if not a.pool.startswith("B") else a.pool.split(",")
    informative = [codes.index(c) for c in a.informative.split(",")] if a.informative else [0, 1]
    ds = planted_dataset(codes, informative, a.n, a.n_positive, a.gap_sd, seed=a.seed)
    write_dataset(ds, out)
    run.wrote(out)
    run.results = {"informative": [codes[i] for i in informative], "class_counts": list(ds.class_counts)}
    print(f"wrote {out} ({ds.n} subjects, {len(codes)} angles)")


def cmd_sweep(run: Run) -> None:
    from .ml import pc_sweep
    a = run.args
    ds = _dataset(run)
    out = run.output(a.out)
    pool = _pool(ds, a.pool)
    result = pc_sweep(ds, pool, a.C, a.pca_scope, not a.no_bias)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "accuracy", "sensitivity", "specificity", "tp", "tn", "fp", "fn"])
        for k, m in result.entries:
            w.writerow([k, f"{m.accuracy:.6f}", f"{m.sensitivity:.6f}", f"{m.specificity:.6f}",
                        m.tp, m.tn, m.fp, m.fn])
    run.wrote(out)
    best = dict(result.entries)[result.best_k]
    run.results = {"best_k": result.best_k, "best_accuracy": best.accuracy, "pool": sorted(pool)}
    print(f"best k = {result.best_k}: accuracy {_pct(best.accuracy)}, sensitivity {_pct(best.sensitivity)}, "
          f"specificity {_pct(best.specificity)}")


def cmd_search(run: Run) -> None:
    from .ml import format_table, greedy_extend, subset_search
    a = run.args
    ds = _dataset(run)
    out = run.output(a.out)
    table_path = run.output(a.table or out.with_name(out.name.split(".")[0] + ".txt"))
    pool = _pool(ds, a.pool)
    max_size = min(a.max_size, len(pool))
    result = subset_search(ds, pool, max_size, a.C, a.pca_scope, not a.no_bias, a.threads, a.min_size)
    doc = result.to_dict()
    if a.extend and max_size < len(result.pool):
        greedy = greedy_extend(ds, result.rows[-1].subset, pool, a.C, a.pca_scope, not a.no_bias, a.threads)
        result.rows.extend(greedy.rows[1:])
        doc["greedy"] = [r.to_dict() for r in greedy.rows[1:]]
    # the worker count affects speed only, so it stays out of the primary output
    doc["params"] = {k: v for k, v in doc["params"].items() if k != "threads"}
    _write_json(out, doc)
    table = format_table(result)
    table_path.write_text(table)
    run.wrote(out, table_path)
    run.results = {"threads": result.params["threads"],
                   "evaluated": {r.size: r.evaluated for r in result.rows}}
    sys.stdout.write(table)


def cmd_train(run: Run) -> None:
    from .decision import save_model, train_model
    a = run.args
    ds = _dataset(run)
    out = run.output(a.out)
    codes = _pool(ds, a.angles)
    model = train_model(ds, codes, a.k, a.C, not a.no_bias)
    save_model(model, out)
    run.wrote(out)
    if a.scaler_out:
        path = run.output(a.scaler_out)
        _write_json(path, {"means": dict(zip(model.angles, model.means)),
                           "stds": dict(zip(model.angles, model.stds))})
        run.wrote(path)
    print(f"wrote {out} ({model.p} angles)")


def _read_measurements(path: Path) -> list[tuple[str, dict]]:
    """Subjects from a dataset-style CSV (``subject_id[,label],codes...``) or
    from a ``code,degrees`` angle list, which counts as one subject."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    try:
        if header[:2] == ["code", "degrees"]:
            return [(path.stem, {r[0]: float(r[1]) for r in rows[1:]})]
        if header[0] != "subject_id":
            raise ValueError(f"{path}: header must start with subject_id or be code,degrees")
        first = 2 if len(header) > 1 and header[1] == "label" else 1
        out = []
        for r in rows[1:]:
            if len(r) != len(header):
                raise ValueError(f"{path}: row for {r[0]} has {len(r)} fields, expected {len(header)}")
            out.append((r[0], {c: float(v) for c, v in zip(header[first:], r[first:]) if v.strip()}))
        return out
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: {exc}") from None


def cmd_predict(run: Run) -> None:
    from .decision import attach_scaler, builtin_models, label_for, load_model, load_scaler
    a = run.args
    builtins = {"builtin3": "model3", "builtin5": "model5"}
    if a.model in builtins:
        model = builtin_models()[builtins[a.model]]
    else:
        model = load_model(run.input("model", a.model))
    if a.scaler:
        model = attach_scaler(model, *load_scaler(run.input("scaler", a.scaler)))
    subjects = _read_measurements(run.input("input", a.input))
    out = run.output(a.out)
    lines = []
    for sid, values in subjects:
        score = model.score_normalized(model.normalize(model.vector(values)))
        lines.append((sid, score, label_for(score)))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "score", "label"])
        for sid, score, label in lines:
            w.writerow([sid, f"{score:.10f}", label])
    run.wrote(out)
    run.results = {"subjects": len(lines), "positive": sum(lab for _, _, lab in lines)}
    print(f"wrote {out} ({len(lines)} subjects)")


def cmd_report(run: Run) -> None:
    from .ml import CvMetrics, SearchResult, SizeResult, format_table
    a = run.args
    doc = json.loads(run.input("search", a.search).read_text())
    out = run.output(a.out)
    rows = []
    for r in [*doc["sizes"], *doc.get("greedy", [])]:
        m = CvMetrics(r["tp"], r["tn"], r["fp"], r["fn"], r["predictions"], tuple(r["flagged_folds"]))
        rows.append(SizeResult(r["size"], tuple(r["angles"]), r["k"], m, r["evaluated"]))
    lines = ["Best subset per size", "", format_table(SearchResult(tuple(doc["pool"]), rows)).rstrip(), "",
             "Peak LOOCV accuracy by subset size", ""]
    lines += [f"{r.size:>4}  {_pct(r.metrics.accuracy):>8}  " + "#" * round(40 * r.metrics.accuracy)
              for r in rows]
    peak = max(rows, key=lambda r: (r.metrics.correct, r.metrics.tn, -r.size))
    lines += ["", f"Peak: size {peak.size}, {_pct(peak.metrics.accuracy)} with {', '.join(peak.subset)}"]
    if a.sweep:
        with open(run.input("sweep", a.sweep), newline="") as fh:
            curve = list(csv.DictReader(fh))
        lines += ["", "Principal components vs LOOCV accuracy", ""]
        lines += [f"{int(c['k']):>4}  {_pct(float(c['accuracy'])):>8}  " + "#" * round(40 * float(c["accuracy"]))
                  for c in curve]
        best = max(curve, key=lambda c: (float(c["accuracy"]), -int(c["k"])))
        lines += ["", f"Best k: {best['k']} ({_pct(float(best['accuracy']))})"]
    out.write_text("\n".join(lines) + "\n")
    run.wrote(out)
    if a.curve:
        path = run.output(a.curve)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["size", "accuracy", "sensitivity", "specificity"])
            for r in rows:
                w.writerow([r.size, f"{r.metrics.accuracy:.6f}", f"{r.metrics.sensitivity:.6f}",
                            f"{r.metrics.specificity:.6f}"])
        run.wrote(path)
    print(f"wrote {out}")


# -- argument parsing ------------------------------------------------------

def _add_ml_options(p, pool_help="named pool (all26, gen1234, gen34), comma-separated codes, or all columns"):
    p.add_argument("--data", required=True, help="dataset CSV: subject_id,label,<angle codes>")
    p.add_argument("--pool", help=pool_help)
    p.add_argument("--C", type=float, default=1.0, help="SVM regularization (default 1.0)")
    p.add_argument("--pca-scope", choices=("fold", "global"), default="fold")
    p.add_argument("--no-bias", action="store_true", help="train SVMs without an intercept")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="airwaygeom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("phantom", help="generate a synthetic airway-tree volume")
    p.add_argument("--spec", help="phantom spec JSON; the standard tree is used when omitted")
    p.add_argument("--out", required=True, help="volume header path (writes .json/.raw)")
    p.add_argument("--seed", type=int, help="noise seed (overrides rng_seed in the phantom JSON)")
    p.add_argument("--generations", type=int, default=4)
    p.add_argument("--spacing", type=_float_triple, default=(0.5, 0.5, 1.0), help="sx,sy,sz in mm")
    p.add_argument("--parenchyma-hu", type=int, help="intensity outside the walls (default: tissue)")
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--angle-seed", type=int, default=7, help="seed for the standard tree's angles")
    p.add_argument("--no-small-branch", action="store_true", help="omit the 2.5 mm branch")
    p.add_argument("--pinhole", type=_triple, action="append", help="x,y,z wall voxel to open (repeatable)")
    p.add_argument("--pinhole-radius", type=int, default=0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("segment", help="two-phase limited flood fill")
    p.add_argument("--volume", required=True)
    p.add_argument("--out", required=True, help="output header; labels go to <stem>.labels.json")
    p.add_argument("--lumen-seed", type=_seed_arg, default="auto", help="x,y,z or auto (default)")
    p.add_argument("--parenchyma-seed", type=_seed_arg, help="x,y,z or auto; phase one is skipped if omitted")
    p.add_argument("--hole-size", type=int, default=0, help="hole gate radius s in voxels")
    p.add_argument("--parenchyma-hole-size", type=int, help="gate for phase one (default: --hole-size)")
    p.add_argument("--max-voxels", type=int, help="voxel cap per fill")
    p.add_argument("--connectivity", type=int, choices=(6, 26), default=6)
    p.add_argument("--hu-threshold", type=float, default=DEFAULT_AIR_THRESHOLD)
    p.add_argument("--plug", action="append", help="x0:x1,y0:y1,z0:z1 voxel box (repeatable)")
    p.add_argument("--plug-file", help="JSON list of plug boxes")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("export-slice", help="write one slice as an 8-bit PGM")
    p.add_argument("--volume", required=True)
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--overlay", action="store_true", help="draw lumen voxels white")
    p.add_argument("--level", type=float, default=-500.0)
    p.add_argument("--width", type=float, default=1500.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_slice)

    p = sub.add_parser("extract", help="fit bifurcations down a segmented tree")
    p.add_argument("--volume", required=True, help="segmented volume header")
    p.add_argument("--out", required=True, help="tree JSON")
    p.add_argument("--angles", help="angle CSV (default <stem>.angles.csv)")
    p.add_argument("--angle-generations", help="e.g. 1-4 or 3,4 (default: all)")
    p.add_argument("--max-generation", type=int, default=8)
    p.add_argument("--evaluations", type=int, default=20000, help="annealing budget per bifurcation")
    p.add_argument("--trachea-init", help="JSON of starting parameters for B1")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="write a synthetic angle dataset with planted signal")
    p.add_argument("--out", required=True)
    p.add_argument("--pool", default="gen34", help="named pool or comma-separated codes")
    p.add_argument("--informative", help="comma-separated informative codes (default: first two)")
    p.add_argument("--n", type=int, default=54)
    p.add_argument("--n-positive", type=int)
    p.add_argument("--gap-sd", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="LOOCV accuracy against number of principal components")
    _add_ml_options(p)
    p.add_argument("--out", required=True, help="curve CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("search", help="exhaustive best-subset search")
    _add_ml_options(p)
    p.add_argument("--max-size", type=int, default=8)
    p.add_argument("--min-size", type=int, default=1)
    p.add_argument("--extend", action="store_true", help="grow the largest subset greedily to the full pool")
    p.add_argument("--threads", type=int, help="worker threads (default: all available)")
    p.add_argument("--out", required=True, help="result JSON")
    p.add_argument("--table", help="text table (default <stem>.txt)")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("train", help="fit a decision model on all subjects")
    p.add_argument("--data", required=True)
    p.add_argument("--angles", required=True, help="comma-separated codes or a named pool")
    p.add_argument("--k", type=int, help="principal components (default: all)")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--no-bias", action="store_true")
    p.add_argument("--out", required=True, help="model JSON")
    p.add_argument("--scaler-out", help="also write the means/stds as a scaler JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score subjects with a decision model")
    p.add_argument("--model", required=True, help="builtin3, builtin5 or a model JSON")
    p.add_argument("--scaler", help="JSON of per-angle means and stds")
    p.add_argument("--input", required=True, help="subject CSV or a code,degrees angle list")
    p.add_argument("--out", required=True, help="CSV of subject_id,score,label")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="summarize search (and sweep) results")
    p.add_argument("--search", required=True, help="search result JSON")
    p.add_argument("--sweep", help="sweep curve CSV")
    p.add_argument("--out", required=True, help="text report")
    p.add_argument("--curve", help="also write peak accuracy by size as CSV")
    p.set_defaults(func=cmd_report)
    return parser


DATA_ERRORS = (OSError, ValueError, IndexError, KeyError, CodeError)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run = Run(args, argv)
    from .bifurcation.tree import ExtractionError
    try:
        args.func(run)
    except (*DATA_ERRORS, ExtractionError) as exc:
        print(f"airwaygeom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    run.finish(args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
