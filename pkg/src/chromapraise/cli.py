"""Command line entry points: extract, fit, synth.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable inputs,
empty corpus, singular design, ...), 3 unexpected internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import PipelineConfig, load_config
from .mixedmodel import SingularityError, coef_csv, coef_report, fit, render_coef_table
from .pipeline import (
    IMAGE_SUFFIXES,
    extract_corpus,
    find_image,
    load_design,
    read_meta_csv,
    write_error_table,
    write_feature_table,
)
from .synth import generate_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

CONFIG_ENV = "CHROMAPRAISE_CONFIG"


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the documented code is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit((EXIT_USAGE, f"{self.prog}: error: {message}"))


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="chromapraise",
        description="Visual feature extraction and mixed-model pricing for paintings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="extract features from an image corpus")
    p_extract.add_argument("--images", required=True, type=Path,
                           help="directory of painting images, named <id>.<ext>")
    p_extract.add_argument("--meta", required=True, type=Path,
                           help="metadata CSV (id,author,price,catalog fields)")
    p_extract.add_argument("--out", required=True, type=Path,
                           help="output feature CSV")
    p_extract.add_argument("--config", type=Path, default=None,
                           help=f"TOML parameter file (default: ${CONFIG_ENV} or built-ins)")
    p_extract.add_argument("--jobs", type=int, default=1,
                           help="parallel worker processes (default 1)")

    p_fit = sub.add_parser("fit", help="fit the random-intercept price model")
    p_fit.add_argument("--features", required=True, type=Path,
                       help="feature CSV produced by extract")
    p_fit.add_argument("--out", required=True, type=Path,
                       help="output directory for the report files")
    p_fit.add_argument("--predictors", default=None,
                       help="comma-separated predictor subset (default: all 42)")
    p_fit.add_argument("--level", type=float, default=0.95,
                       help="confidence level for profile intervals (default 0.95)")
    p_fit.add_argument("--reml", action="store_true",
                       help="use restricted maximum likelihood")

    p_synth = sub.add_parser("synth", help="generate a synthetic test corpus")
    p_synth.add_argument("--out", required=True, type=Path,
                         help="output directory (images/, meta.csv, truth.json)")
    p_synth.add_argument("--n", type=int, default=40, help="number of paintings")
    p_synth.add_argument("--seed", type=int, default=42, help="random seed")
    p_synth.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes (default 1)")
    return parser


def _load_config(path: Path | None) -> PipelineConfig:
    if path is None:
        env = os.environ.get(CONFIG_ENV)
        path = Path(env) if env else None
    return load_config(path)


def cmd_extract(args) -> int:
    config = _load_config(args.config)
    metas = read_meta_csv(args.meta)
    if not args.images.is_dir():
        raise ValueError(f"{args.images}: not a directory")
    n_images = sum(
        1 for p in args.images.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
    )
    if n_images == 0:
        raise ValueError(f"{args.images}: found zero image files")

    tasks, errors = [], []
    for meta in metas:
        path = find_image(args.images, meta.id)
        if path is None:
            errors.append((meta.id, "imaging", "no image file found"))
        else:
            tasks.append((path, meta))
    rows, extract_errors = extract_corpus(tasks, config, jobs=args.jobs)
    errors.extend(extract_errors)

    if errors:
        error_path = args.out.with_suffix(args.out.suffix + ".errors.csv")
        write_error_table(errors, error_path)
        for painting_id, stage, message in errors:
            print(f"warning: {painting_id} failed at {stage}: {message}",
                  file=sys.stderr)
        print(f"{len(errors)} failures logged to {error_path}", file=sys.stderr)
    if not rows:
        raise ValueError(f"no paintings extracted (0 of {len(metas)} succeeded)")
    write_feature_table(rows, args.out)
    print(f"wrote {len(rows)} of {len(metas)} feature rows to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    predictors = None
    if args.predictors is not None:
        predictors = [c.strip() for c in args.predictors.split(",") if c.strip()]
        if not predictors:
            raise ValueError("--predictors was given but names no columns")
    if not 0.0 < args.level < 1.0:
        raise ValueError("--level must be strictly between 0 and 1")
    data, dropped = load_design(args.features, predictors)
    for name in dropped:
        print(f"warning: dropped constant column {name}", file=sys.stderr)

    model = fit(data, reml=args.reml)
    report = coef_report(data, model, ci_level=args.level)

    args.out.mkdir(parents=True, exist_ok=True)
    table = render_coef_table(report)
    (args.out / "report.txt").write_text(table, encoding="utf-8")
    (args.out / "coefficients.csv").write_text(coef_csv(report), encoding="utf-8")
    summary = {
        "n_obs": report.n_obs,
        "n_groups": report.n_groups,
        "loglik": report.loglik,
        "lambda": model.lam,
        "sigma_u2": model.sigma_u2,
        "sigma_e2": model.sigma_e2,
        "r2_marginal": report.r2_marginal,
        "r2_conditional": report.r2_conditional,
        "reml": args.reml,
        "ci_level": args.level,
        "dropped_columns": dropped,
    }
    with open(args.out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(table, end="")
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    truth = generate_corpus(args.out, n=args.n, seed=args.seed, jobs=args.jobs)
    print(f"wrote {args.n} paintings to {args.out} "
          f"(planted features: {', '.join(truth['features'])})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, tuple):
            code, message = exc.code
            print(message, file=sys.stderr)
            return code
        return EXIT_OK if not exc.code else EXIT_USAGE
    handlers = {"extract": cmd_extract, "fit": cmd_fit, "synth": cmd_synth}
    try:
        return handlers[args.command](args)
    except SingularityError as exc:
        print(f"error: design matrix is singular; redundant columns: "
              f"{', '.join(exc.columns)}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
