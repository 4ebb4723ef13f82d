"""Command-line entry points: build-index, stylize, transfer, rank."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .catalog.features import builtin_semantic_feature, load_external_features, read_feature_file
from .catalog.index import StyleIndex, fingerprint, load_index, save_index
from .catalog.kmeans import assign_many, kmeans_cluster
from .catalog.ranking import StyleEntry, build_ranking
from .colorspace import preprocess
from .errors import AutostyleError, IndexIOError
from .imgio import decode_image, encode_image, list_images
from .selection import SelectionConfig, merge_rankings, nearest_clusters, select_styles
from .similarity import SimilarityParams, pairwise_frechet
from .stylestats import MAX_STAT_SAMPLES, style_descriptor
from .transfer import (
    FaceCorrectionConfig,
    TransferConfig,
    load_faces,
    prepare_input,
    render,
    warmup,
)

log = logging.getLogger("autostyle")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_IO = 2


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class CliConfig:
    gamma: float = 2.2
    clip: float = 0.005
    lambda_r: float = 7.5
    tau: float = 0.4
    lambda_l: float = 0.005
    lambda_c: float = 0.05
    epsilon: float = 1.0
    n_clusters: int = 3
    threshold: float = 7.5
    k_outputs: int = 5
    l_th: float = 0.3
    gamma_th: float = 0.5
    alpha_r: float = 0.45
    alpha_c: float = 0.001
    kmeans_k: int = 1000
    seed: int = 0
    tone_target: str = "cap"
    format: str = "png"
    workers: int = 0  # 0 means one per CPU

    def problems(self) -> list[str]:
        out = []

        def need(ok, msg):
            if not ok:
                out.append(msg)

        for name in ("gamma", "lambda_r", "tau", "lambda_l", "lambda_c", "epsilon", "alpha_r", "alpha_c"):
            need(getattr(self, name) > 0, f"{name} must be > 0 (got {getattr(self, name)})")
        need(0 <= self.clip < 0.5, f"clip must lie in [0, 0.5) (got {self.clip})")
        need(self.tau <= 1, f"tau must lie in (0, 1] (got {self.tau})")
        need(0 < self.l_th <= 1, f"l_th must lie in (0, 1] (got {self.l_th})")
        need(0 < self.gamma_th <= 1, f"gamma_th must lie in (0, 1] (got {self.gamma_th})")
        need(self.threshold >= 0, f"threshold must be >= 0 (got {self.threshold})")
        for name in ("n_clusters", "k_outputs", "kmeans_k"):
            need(getattr(self, name) >= 1, f"{name} must be >= 1 (got {getattr(self, name)})")
        need(self.seed >= 0, f"seed must be >= 0 (got {self.seed})")
        need(self.workers >= 0, f"workers must be >= 0 (got {self.workers})")
        need(self.tone_target in ("cap", "literal"), f"tone_target must be cap or literal (got {self.tone_target!r})")
        need(self.format in ("png", "jpeg", "jpg"), f"format must be png or jpeg (got {self.format!r})")
        return out

    def transfer(self) -> TransferConfig:
        return TransferConfig(
            gamma=self.gamma,
            clip=self.clip,
            lambda_r=self.lambda_r,
            tau=self.tau,
            tone_target=self.tone_target,
            face=FaceCorrectionConfig(self.l_th, self.gamma_th, self.alpha_r, self.alpha_c),
        )

    def similarity(self) -> SimilarityParams:
        return SimilarityParams(self.lambda_l, self.lambda_c, self.epsilon)

    def selection(self) -> SelectionConfig:
        return SelectionConfig(self.n_clusters, self.threshold, self.k_outputs)

    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1


_FIELD_TYPES = {f.name: f.type for f in fields(CliConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def read_config_file(path) -> tuple[dict, list[str]]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values, problems = {}, []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{path}:{lineno}: expected key = value")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            problems.append(f"{path}:{lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _coerce(key, raw)
        except ValueError:
            problems.append(f"{path}:{lineno}: bad value for {key}: {raw!r}")
    return values, problems


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """Defaults, then the config file, then explicit flags. Raises ConfigError."""
    values, problems = {}, []
    if getattr(args, "config", None):
        try:
            file_values, problems = read_config_file(args.config)
            values.update(file_values)
        except OSError as exc:
            problems.append(f"cannot read config {args.config}: {exc}")
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    cfg = replace(CliConfig(), **values)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


# ---------------------------------------------------------------- helpers


def _map(fn, items, workers: int) -> list:
    """Ordered map, threaded when more than one worker is available."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _try_decode(path: Path):
    try:
        return decode_image(path), None
    except AutostyleError as exc:
        return None, str(exc)


def _descriptor(img, tcfg: TransferConfig):
    lab = preprocess(img, tcfg.gamma, tcfg.clip, tcfg.gamma_compress)
    return style_descriptor(lab, MAX_STAT_SAMPLES)


def _ms(t0: float) -> float:
    return round((time.perf_counter() - t0) * 1000.0, 3)


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _input_feature(args, index: StyleIndex, img):
    if args.feature:
        return read_feature_file(args.feature)
    if index.meta.get("feature_kind") == "external":
        raise ValueError("index was built from external features; pass --feature for the input")
    return builtin_semantic_feature(img)


# ---------------------------------------------------------------- commands


def cmd_build_index(args, cfg: CliConfig) -> int:
    photos_dir, styles_dir = Path(args.photos), Path(args.styles)
    for d in (photos_dir, styles_dir):
        if not d.is_dir():
            return _fail(EXIT_INPUT, f"not a directory: {d}")
    if args.features and not Path(args.features).is_dir():
        return _fail(EXIT_INPUT, f"not a directory: {args.features}")
    tcfg = cfg.transfer()
    workers = cfg.n_workers()

    style_paths = list_images(styles_dir)
    photo_paths = list_images(photos_dir)

    external = None
    if args.features:
        try:
            external = load_external_features(args.features, Path(args.features) / "manifest.json")
        except (AutostyleError, OSError, ValueError) as exc:
            return _fail(EXIT_INPUT, f"cannot load external features: {exc}")
        keep = []
        for p in photo_paths:
            if p.relative_to(photos_dir).as_posix() in external:
                keep.append(p)
            else:
                log.warning("no external feature for %s, skipping", p)
        photo_paths = keep

    def ingest_style(p):
        img, err = _try_decode(p)
        return (None, err) if img is None else (_descriptor(img, tcfg), None)

    def ingest_photo(p):
        img, err = _try_decode(p)
        if img is None:
            return None, None, err
        feat = external[p.relative_to(photos_dir).as_posix()] if external else builtin_semantic_feature(img)
        return feat, _descriptor(img, tcfg), None

    styles = []
    for p, (desc, err) in zip(style_paths, _map(ingest_style, style_paths, workers)):
        if desc is None:
            log.warning("skipping style %s: %s", p, err)
            continue
        styles.append(StyleEntry(len(styles), desc, p.relative_to(styles_dir).as_posix()))

    feats, descs = [], []
    for p, (feat, desc, err) in zip(photo_paths, _map(ingest_photo, photo_paths, workers)):
        if desc is None:
            log.warning("skipping photo %s: %s", p, err)
            continue
        feats.append(feat)
        descs.append(desc)

    if not styles:
        return _fail(EXIT_INPUT, f"no usable style images in {styles_dir}")
    if not feats:
        return _fail(EXIT_INPUT, f"no usable photos in {photos_dir}")
    if cfg.kmeans_k > len(feats):
        return _fail(EXIT_INPUT, f"k={cfg.kmeans_k} exceeds the {len(feats)} usable photos")

    X = np.stack(feats)
    model = kmeans_cluster(X, cfg.kmeans_k, seed=cfg.seed)
    labels = assign_many(X, model)
    table = build_ranking(model, X, descs, styles, cfg.similarity(), labels=labels)
    params = {
        "gamma": cfg.gamma,
        "clip": cfg.clip,
        "lambda_l": cfg.lambda_l,
        "lambda_c": cfg.lambda_c,
        "epsilon": cfg.epsilon,
        "kmeans_k": cfg.kmeans_k,
        "seed": cfg.seed,
    }
    meta = {
        "feature_kind": "external" if external else "builtin",
        "n_photos": len(feats),
        "params": params,
    }
    index = StyleIndex(model, table, styles, fingerprint({**params, **meta}), meta)
    try:
        save_index(index, args.out)
    except IndexIOError as exc:
        return _fail(EXIT_IO, str(exc))

    occupancy = np.bincount(labels, minlength=model.k)
    print(f"photos: {len(feats)} (skipped {len(photo_paths) - len(feats)})")
    print(f"styles: {len(styles)} (skipped {len(style_paths) - len(styles)})")
    print(f"clusters: k={model.k}, dim={model.dim}")
    hist = np.bincount(occupancy)
    print("cluster occupancy (members: clusters): " + ", ".join(f"{m}: {c}" for m, c in enumerate(hist) if c))
    print(f"index written to {args.out}")
    return EXIT_OK


def _output_name(stem: str, rank: int, style_id: int, fmt: str) -> str:
    ext = "png" if fmt == "png" else "jpg"
    return f"{stem}_style{rank}_{style_id}.{ext}"


def cmd_stylize(args, cfg: CliConfig) -> int:
    timings = {}
    warnings = []
    tcfg = cfg.transfer()
    t0 = time.perf_counter()
    warmup(tcfg)
    timings["warmup"] = _ms(t0)

    try:
        index = load_index(args.index)
    except (AutostyleError, OSError) as exc:
        return _fail(EXIT_INPUT, f"cannot load index {args.index}: {exc}")
    t0 = time.perf_counter()
    img, err = _try_decode(Path(args.input))
    if img is None:
        return _fail(EXIT_INPUT, err)
    timings["decode"] = _ms(t0)
    faces = []
    if args.faces:
        try:
            faces = load_faces(args.faces)
        except (OSError, ValueError) as exc:
            return _fail(EXIT_INPUT, f"cannot read faces: {exc}")

    t0 = time.perf_counter()
    try:
        feature = _input_feature(args, index, img)
    except (AutostyleError, ValueError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    timings["feature"] = _ms(t0)

    t0 = time.perf_counter()
    try:
        sel = select_styles(img, index, builtin_semantic_feature, cfg.selection(), feature=feature)
    except (AutostyleError, ValueError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    timings["select"] = _ms(t0)
    if len(sel.entries) < cfg.k_outputs:
        msg = (
            f"only {len(sel.entries)} of {cfg.k_outputs} styles survive the diversity "
            f"threshold {cfg.threshold}"
        )
        warnings.append(msg)
        log.warning(msg)

    t0 = time.perf_counter()
    try:
        prepared = prepare_input(img, tcfg)
        results = _map(lambda e: render(prepared, e.descriptor, faces, tcfg), sel.entries, cfg.n_workers())
    except ValueError as exc:
        return _fail(EXIT_INPUT, str(exc))
    timings["transfer_total"] = _ms(t0)

    out_dir = Path(args.out)
    stem = Path(args.input).stem
    t0 = time.perf_counter()
    selected = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for rank, (entry, score, res) in enumerate(zip(sel.entries, sel.scores, results), 1):
            name = _output_name(stem, rank, entry.style_id, cfg.format)
            encode_image(res.image, out_dir / name, cfg.format)
            selected.append(
                {
                    "style_id": entry.style_id,
                    "score": score,
                    "m": res.tone.m,
                    "delta": res.tone.delta,
                    "source_path": entry.source_path,
                    "output": name,
                }
            )
    except (AutostyleError, OSError) as exc:
        return _fail(EXIT_IO, f"cannot write outputs: {exc}")
    timings["write"] = _ms(t0)

    report = {
        "input": str(args.input),
        "clusters": sel.clusters,
        "threshold": cfg.threshold,
        "selected": selected,
        "pairwise_frechet": pairwise_frechet([e.descriptor.chroma for e in sel.entries]).tolist(),
        "timings_ms": timings,
        "warnings": warnings,
    }
    try:
        (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot write report: {exc}")
    for s in selected:
        print(f"{s['output']}  score={s['score']:.6g}  m={s['m']:.4f}  delta={s['delta']:.4f}")
    return EXIT_OK


def cmd_transfer(args, cfg: CliConfig) -> int:
    img, err = _try_decode(Path(args.input))
    if img is None:
        return _fail(EXIT_INPUT, err)
    style_img, err = _try_decode(Path(args.style))
    if style_img is None:
        return _fail(EXIT_INPUT, err)
    tcfg = cfg.transfer()
    try:
        faces = load_faces(args.faces) if args.faces else []
        res = render(prepare_input(img, tcfg), _descriptor(style_img, tcfg), faces, tcfg)
        encode_image(res.image, args.out, cfg.format)
    except (AutostyleError, OSError, ValueError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    T = res.chroma_map.T
    print(f"tone: m={res.tone.m:.6f} delta={res.tone.delta:.6f}")
    print(f"chroma T: [[{T[0, 0]:.6f}, {T[0, 1]:.6f}], [{T[1, 0]:.6f}, {T[1, 1]:.6f}]]")
    print(f"written to {args.out}")
    return EXIT_OK


def cmd_rank(args, cfg: CliConfig) -> int:
    try:
        index = load_index(args.index)
    except (AutostyleError, OSError) as exc:
        return _fail(EXIT_INPUT, f"cannot load index {args.index}: {exc}")
    img, err = _try_decode(Path(args.input))
    if img is None:
        return _fail(EXIT_INPUT, err)
    try:
        f = _input_feature(args, index, img)
        clusters = nearest_clusters(f, index.model, min(cfg.n_clusters, index.model.k))
    except (AutostyleError, ValueError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    rows = merge_rankings(index.rankings, clusters)[: args.top]
    if args.json:
        print(json.dumps({"clusters": clusters, "ranking": [{"style_id": i, "score": s} for i, s in rows]}))
    else:
        print(f"clusters: {clusters}")
        for i, s in rows:
            print(f"{i:6d}  {s:.6g}  {index.style(i).source_path}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_tunables(p: argparse.ArgumentParser, names) -> None:
    for name in names:
        kind = _FIELD_TYPES[name]
        conv = {"int": int, "float": float}.get(kind, str)
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=conv, default=None)


_TRANSFER_KEYS = ("gamma", "clip", "lambda_r", "tau", "tone_target", "l_th", "gamma_th", "alpha_r", "alpha_c")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="autostyle", description="Stylize photos with diverse exemplar looks chosen by content.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="cluster a photo collection and rank styles per cluster")
    p.add_argument("--photos", required=True)
    p.add_argument("--styles", required=True)
    p.add_argument("--features", help="directory with manifest.json mapping photo paths to feature files")
    p.add_argument("--k", dest="kmeans_k", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_tunables(p, ("seed", "gamma", "clip", "lambda_l", "lambda_c", "epsilon", "workers"))
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("stylize", help="produce diverse stylized versions of one photo")
    p.add_argument("--index", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--faces", help="faces JSON: [{\"cx\", \"cy\", \"r\"}, ...]")
    p.add_argument("--feature", help="semantic feature file for the input")
    _add_tunables(p, _TRANSFER_KEYS + ("n_clusters", "threshold", "k_outputs", "format", "workers"))
    p.set_defaults(func=cmd_stylize)

    p = sub.add_parser("transfer", help="transfer one style image onto one photo")
    p.add_argument("--input", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--faces")
    _add_tunables(p, _TRANSFER_KEYS + ("format",))
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("rank", help="print the merged style ranking for a photo")
    p.add_argument("--index", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--json", action="store_true")
    p.add_argument("--feature")
    _add_tunables(p, ("n_clusters",))
    p.set_defaults(func=cmd_rank)

    for action in sub.choices.values():
        action.add_argument("--config", help="key = value file; flags override it")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "top", 1) < 1:
        return _fail(EXIT_INPUT, "--top must be >= 1")
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())
