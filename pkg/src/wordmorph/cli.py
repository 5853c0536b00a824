"""Command-line pipeline: expand concept, pick font, pick region, morph, export.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every runtime error
names its pipeline stage. All randomness is seeded from --seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import fontdb as fontdb_mod
from .fonts import load_glyph_outlines
from .losses import LossWeights
from .optim import RunConfig, run
from .prompts import DEFAULT_SUFFIX, build_prompts, expand_concept
from .raster import RasterImage, render
from .regions import (
    DEFAULT_LAMBDA,
    LIGHT_ITERATIONS,
    RegionCandidate,
    report_tsv,
    score_all_regions,
    select_region,
)
from .scorer import BuiltinScorer, HttpScorer, MockSdsScorer, ScorerRequest
from .svgio import export_svg, load_svg

ENV_SCORER = "KHATTAT_SCORER_URL"


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"error in {stage}: {cause}")
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="wordmorph", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file (flags win)")
        sp.add_argument("--scorer", help=f"scorer URL, mock:<target.png>, or builtin (env {ENV_SCORER})")
        sp.add_argument("--seed", type=int, default=0, help="master random seed")
        sp.add_argument("--canvas", type=int, default=600, help="render size in pixels")
        sp.add_argument("--output-dir", default="out", help="output directory")

    m = sub.add_parser("morph", help="full pipeline: prompts, font, region, morph, export")
    common(m)
    m.add_argument("--word", help="word to morph")
    m.add_argument("--wordlist", help="file of words (one per line), morphed in sequence")
    m.add_argument("--concept", help="target concept")
    m.add_argument("--prompt", help="explicit morph prompt (skips concept expansion)")
    m.add_argument("--font", help="font file (skips font selection)")
    m.add_argument("--font-db", help="FONTDB1 embedding database path")
    m.add_argument("--fonts-dir", help="directory of fonts to build a database from")
    m.add_argument("--skip-font-selection", action="store_true",
                   help="use --font (or the fallback font) without the database")
    m.add_argument("--fixed-region", metavar="I..J", help="skip region selection")
    m.add_argument("--max-region-len", type=int, help="cap candidate region length")
    m.add_argument("--offline-prompts", action="store_true",
                   help="expand the concept from the bundled table, no LLM")
    m.add_argument("--object-index", type=int, default=0, choices=(0, 1, 2),
                   help="which of the three object prompts to morph toward")
    m.add_argument("--suffix", default=DEFAULT_SUFFIX, help="morph prompt suffix")
    m.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA,
                   help="readability weight in region selection, in [0, 1]")
    m.add_argument("--no-standardize", action="store_true",
                   help="combine raw region scores instead of z-scores")
    m.add_argument("--iterations", type=int, default=500)
    m.add_argument("--light-iterations", type=int, default=LIGHT_ITERATIONS)
    m.add_argument("--sds-weight", type=float, help="override semantic weight")
    m.add_argument("--ocr-weight", type=float, help="override readability weight")
    m.add_argument("--acap-weight", type=float, help="override deformation weight")
    m.add_argument("--base-lr", type=float, default=1.0)
    m.add_argument("--no-augment", action="store_true", help="disable augmentations")
    m.add_argument("--point-budget", type=int, help="control points per region glyph")

    f = sub.add_parser("fontdb", help="build or inspect a font embedding database")
    fsub = f.add_subparsers(dest="fontdb_command", required=True)
    fb = fsub.add_parser("build")
    common(fb)
    fb.add_argument("--fonts-dir", required=True)
    fb.add_argument("--out", required=True, help="database file to write")
    fb.add_argument("--probe-text", default=fontdb_mod.DEFAULT_PROBE_TEXT)
    fl = fsub.add_parser("list")
    fl.add_argument("--db", required=True)

    r = sub.add_parser("regions", help="score-only region report for a word")
    common(r)
    r.add_argument("--word", required=True)
    r.add_argument("--font", help="font file (fallback font if omitted)")
    r.add_argument("--concept")
    r.add_argument("--prompt")
    r.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    r.add_argument("--no-standardize", action="store_true")
    r.add_argument("--light-iterations", type=int, default=LIGHT_ITERATIONS)
    r.add_argument("--max-region-len", type=int)
    r.add_argument("--out", help="write the TSV report here (default stdout)")

    d = sub.add_parser("render", help="rasterize a word or an exported SVG")
    common(d)
    d.add_argument("--word")
    d.add_argument("--font")
    d.add_argument("--svg", help="render this SVG instead of a word")
    d.add_argument("--size", type=int, default=600)
    d.add_argument("--out", required=True, help="PNG to write")
    return p


def _apply_config_file(args: argparse.Namespace, argv: list[str]) -> None:
    """Fill unset values from a flat key=value file; explicit flags win."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key in explicit or not hasattr(args, key):
            continue
        cur = getattr(args, key)
        if isinstance(cur, bool):
            setattr(args, key, value.lower() in ("1", "true", "yes"))
        elif isinstance(cur, int):
            setattr(args, key, int(value))
        elif isinstance(cur, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)


def _load_target_png(path: str, size: int) -> RasterImage:
    from PIL import Image

    img = Image.open(path).convert("L").resize((size, size), Image.BILINEAR)
    coverage = 1.0 - np.asarray(img, dtype=np.float64) / 255.0
    return RasterImage(size, size, coverage)


def make_scorer(spec: str | None, canvas: int):
    """Resolve --scorer / env into a scorer handle."""
    spec = spec or os.environ.get(ENV_SCORER)
    if not spec:
        raise UsageError(f"no scorer given (use --scorer or {ENV_SCORER})")
    if spec == "builtin":
        return BuiltinScorer()
    if spec.startswith("mock:"):
        path = spec[len("mock:"):]
        if not Path(path).exists():
            raise UsageError(f"mock target image {path} not found")
        return MockSdsScorer(_load_target_png(path, canvas))
    return HttpScorer(spec)


def _fallback_font() -> str | None:
    candidates = []
    try:
        import matplotlib

        candidates.append(
            Path(matplotlib.__file__).parent
            / "mpl-data" / "fonts" / "ttf" / "DejaVuSans.ttf"
        )
    except ImportError:
        pass
    candidates += [
        Path("/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf"),
        Path("/usr/share/fonts/TTF/DejaVuSans.ttf"),
    ]
    for c in candidates:
        if Path(c).exists():
            return str(c)
    return None


def _parse_region(text: str, n: int) -> tuple[int, int]:
    try:
        i, j = text.split("..")
        start, end = int(i), int(j)
    except ValueError as exc:
        raise UsageError(f"bad --fixed-region {text!r}, expected I..J") from exc
    if not (1 <= start <= end <= n):
        raise UsageError(f"--fixed-region {text} out of range for {n} letters")
    return start, end


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (UsageError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - boundary: name the stage, exit 2
        raise StageError(name, exc) from exc


def _cmd_morph(args) -> int:
    if args.wordlist:
        path = Path(args.wordlist)
        if not path.exists():
            raise UsageError(f"wordlist {path} not found")
        words = [w.strip() for w in path.read_text(encoding="utf-8").splitlines() if w.strip()]
        if not words:
            raise UsageError(f"wordlist {path} is empty")
        for word in words:
            args.word = word
            rc = _cmd_morph_single(args)
            if rc != 0:
                return rc
        return 0
    return _cmd_morph_single(args)


def _cmd_morph_single(args) -> int:
    if not args.word:
        raise UsageError("--word is required")
    if not args.concept and not args.prompt:
        raise UsageError("need --concept or --prompt")
    if not 0.0 <= args.lam <= 1.0:
        raise UsageError(f"lambda must be in [0, 1], got {args.lam}")
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scorer = make_scorer(args.scorer, args.canvas)

    # prompts
    if args.prompt:
        morph_prompt, font_prompt = args.prompt, None
    else:
        mode = "offline" if args.offline_prompts else "remote"
        expansion = _stage(
            "prompts", expand_concept, args.concept, mode=mode, scorer=scorer
        )
        morph_prompts, font_prompt = build_prompts(expansion, args.suffix)
        morph_prompt = morph_prompts[args.object_index]
        print(f"prompts: {morph_prompts}")
        print(f"font prompt: {font_prompt!r}")

    # font
    font_file = args.font
    if font_file is None and not args.skip_font_selection and args.font_db:
        if not Path(args.font_db).exists():
            if args.fonts_dir:
                db = _stage("font-selection", _build_db_from_dir, args)
                db.save(args.font_db)
            else:
                raise UsageError(
                    f"font db {args.font_db} missing and no --fonts-dir to build it from"
                )
        db = _stage("font-selection", fontdb_mod.FontEmbeddingDB.load, args.font_db)
        if font_prompt is None:
            raise UsageError("--prompt mode cannot drive font selection; pass --font")
        resp = _stage(
            "font-selection",
            scorer.score,
            ScorerRequest(kind="font-embed", prompt=font_prompt),
        )
        fid, sim = _stage("font-selection", fontdb_mod.select_font, resp.features, db)
        font_file = fontdb_mod.font_path(db, fid)
        print(f"font: {fid} (similarity {sim:.4f})")
    elif font_file is None:
        if args.font_db or args.fonts_dir:
            raise UsageError("pass --font-db with an existing database, or --font")
        font_file = _fallback_font()
        if font_file is None:
            raise UsageError("no --font given and no fallback font found")
        print(f"font: fallback {font_file}")

    word = _stage("glyph-loading", load_glyph_outlines, font_file, args.word)
    n = len(word.glyphs)

    if isinstance(scorer, BuiltinScorer):
        scorer.set_reference(render(word, args.canvas).to_guidance())

    # region
    cfg = RunConfig(
        iterations=args.iterations,
        base_lr=args.base_lr,
        seed=args.seed,
        canvas=args.canvas,
        output_dir=str(out_dir),
        augment_enabled=not args.no_augment,
        point_budget=args.point_budget,
    )
    if args.fixed_region:
        start, end = _parse_region(args.fixed_region, n)
        chosen = RegionCandidate(start, end)
        print(f"region: {chosen.label()} (fixed)")
    else:
        scored = _stage(
            "region-selection",
            score_all_regions,
            word, morph_prompt, scorer,
            lam=args.lam,
            max_len=args.max_region_len,
            light_iterations=args.light_iterations,
            config=cfg,
            standardize=not args.no_standardize,
        )
        report_path = out_dir / f"{args.word}.regions.tsv"
        report_path.write_text(report_tsv(scored), encoding="utf-8")
        chosen = _stage("region-selection", select_region, scored)
        print(f"region: {chosen.label()} (composite {chosen.composite:.4f})")
        print(f"region report: {report_path}")

    weights = LossWeights.defaults_for(chosen.length)
    if args.sds_weight is not None:
        weights.sds_weight = args.sds_weight
    if args.ocr_weight is not None:
        weights.ocr_weight = args.ocr_weight
    if args.acap_weight is not None:
        weights.acap_weight = args.acap_weight
    cfg.weights = weights

    final, trace = _stage(
        "morph", run, word, (chosen.start, chosen.end), morph_prompt, cfg, scorer
    )

    _stage("export", _write_outputs, args, out_dir, word, final, trace)
    return 0


def _build_db_from_dir(args):
    fonts = sorted(
        p for p in Path(args.fonts_dir).iterdir()
        if p.suffix.lower() in (".ttf", ".otf")
    )
    scorer = make_scorer(args.scorer, args.canvas)
    return fontdb_mod.build_db(fonts, scorer)


def _write_outputs(args, out_dir: Path, initial, final, trace):
    word = args.word
    export_svg(final, out_dir / f"{word}.svg")
    export_svg(initial, out_dir / f"{word}.initial.svg")
    render(final, args.canvas).save_png(str(out_dir / f"{word}.final.png"))
    trace.save_tsv(out_dir / f"{word}.trace.tsv")
    print(f"final svg: {out_dir / (word + '.svg')}")


def _cmd_fontdb(args) -> int:
    if args.fontdb_command == "build":
        db = _stage("fontdb-build", _build_db_from_dir, args)
        db.save(args.out)
        print(f"wrote {len(db.entries)} embeddings (dim {db.dim}) to {args.out}")
        return 0
    db = _stage("fontdb-list", fontdb_mod.FontEmbeddingDB.load, args.db)
    print(f"{len(db.entries)} entries, dim {db.dim}")
    for fid, fpath, _ in db.entries:
        print(f"{fid}\t{fpath}")
    return 0


def _cmd_regions(args) -> int:
    if not 0.0 <= args.lam <= 1.0:
        raise UsageError(f"lambda must be in [0, 1], got {args.lam}")
    if not args.concept and not args.prompt:
        raise UsageError("need --concept or --prompt")
    font_file = args.font or _fallback_font()
    if font_file is None:
        raise UsageError("no --font given and no fallback font found")
    scorer = make_scorer(args.scorer, args.canvas)
    if args.prompt:
        prompt = args.prompt
    else:
        expansion = _stage("prompts", expand_concept, args.concept, mode="offline")
        prompt = build_prompts(expansion)[0][0]
    word = _stage("glyph-loading", load_glyph_outlines, font_file, args.word)
    if isinstance(scorer, BuiltinScorer):
        scorer.set_reference(render(word, args.canvas).to_guidance())
    cfg = RunConfig(seed=args.seed, canvas=args.canvas)
    scored = _stage(
        "region-selection",
        score_all_regions,
        word, prompt, scorer,
        lam=args.lam,
        max_len=args.max_region_len,
        light_iterations=args.light_iterations,
        config=cfg,
        standardize=not args.no_standardize,
    )
    text = report_tsv(scored)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_render(args) -> int:
    if args.svg:
        word = _stage("svg-import", load_svg, args.svg)
    else:
        if not args.word:
            raise UsageError("render needs --word or --svg")
        font_file = args.font or _fallback_font()
        if font_file is None:
            raise UsageError("no --font given and no fallback font found")
        word = _stage("glyph-loading", load_glyph_outlines, font_file, args.word)
    img = _stage("render", render, word, args.size)
    img.save_png(args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args, argv)
        if args.command == "morph":
            return _cmd_morph(args)
        if args.command == "fontdb":
            return _cmd_fontdb(args)
        if args.command == "regions":
            return _cmd_regions(args)
        if args.command == "render":
            return _cmd_render(args)
        raise UsageError(f"unknown command {args.command!r}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
