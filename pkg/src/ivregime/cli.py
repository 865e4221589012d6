"""Command-line interface: ``ivregime {simulate,estimate,replicate,validate}``.

Exit codes: 0 success, 2 input error, 3 degenerate estimate, 4 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

from . import io as ivio
from .harness import ReplicationError, estimate, load_run_config, replicate, write_replications_csv
from .identification import DegenerateDenominator, EmptyRegimeCell, with_bootstrap
from .model import PanelDataset, validate_dataset
from .propensity import SeparationError, SingleClassError
from .simgen import generate

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("ivregime")


def _err(msg: str):
    print(f"ivregime: error: {msg}", file=sys.stderr)


def latents_path(out: Path) -> Path:
    return out.with_name(out.stem + ".latents" + out.suffix)


def cmd_simulate(args) -> int:
    run = load_run_config(args.config, seed=args.seed, n=args.n)
    data, latents = generate(run.sim, workers=args.workers or 1)
    out = Path(args.out)
    ivio.write_csv(data, out)
    if latents is not None:
        ivio.write_latents_csv(latents, latents_path(out))
    log.info("wrote %d paths to %s", data.n, out)
    return EXIT_OK


def _load_valid(path) -> PanelDataset:
    data = ivio.read_csv(path)
    problems = validate_dataset(data, max_per_rule=5)
    if problems:
        for p in problems[:20]:
            _err(f"{path}: {p}")
        raise ivio.CsvSchemaError(f"{path}: {len(problems)} validation problem(s)")
    return data


def cmd_estimate(args) -> int:
    run = load_run_config(args.config, method=args.method, bootstrap=args.bootstrap,
                          level=args.level)
    data = _load_valid(args.data)
    est = run.est
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            report = estimate(data, est)
            if run.bootstrap:
                report = with_bootstrap(report, lambda d: estimate(d, est).effect, data,
                                        run.bootstrap, run.level,
                                        args.seed if args.seed is not None else run.master_seed,
                                        args.workers or run.workers)
        for w in caught:
            log.warning("%s", w.message)
    except (DegenerateDenominator, EmptyRegimeCell, SeparationError, SingleClassError) as exc:
        print(ivio.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return EXIT_DEGENERATE
    print(ivio.dumps(report.to_dict()))
    return EXIT_OK


def cmd_replicate(args) -> int:
    run = load_run_config(args.config, master_seed=args.seed, R=args.R, n=args.n)
    workers = args.workers or run.workers

    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            log.info("replication %d/%d", done, total)

    try:
        result = replicate(run, workers=workers, progress=progress)
    except ReplicationError as exc:
        _err(str(exc))
        degenerate = {"DegenerateDenominator", "EmptyRegimeCell", "SeparationError"}
        return EXIT_DEGENERATE if exc.cause_type in degenerate else EXIT_INTERNAL
    text = ivio.dumps(result.to_dict(timing=args.timing))
    table = result.table() + f"\n(true effect {result.tau:g}, R={run.R}, n={run.sim.n}, " \
                             f"{result.seconds:.1f}s)"
    if args.per_rep:
        write_replications_csv(result, run.master_seed, args.per_rep)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(table)
    else:
        print(text)
        print(table, file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    data = ivio.read_csv(args.data)
    problems = validate_dataset(data)
    for p in problems:
        print(p)
    if problems:
        return EXIT_INPUT
    print(f"ok: {data.n} paths, T={data.horizon}, dims={list(data.dims)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivregime",
        description="Local average treatment regime effects with instrumental variable regimes.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a simulated panel as CSV")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate a regime contrast from a CSV panel")
    p.add_argument("--data", required=True)
    p.add_argument("--config")
    p.add_argument("--method", choices=("latre", "naive", "noiv"))
    p.add_argument("--bootstrap", type=int, metavar="B")
    p.add_argument("--level", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("replicate", help="Monte Carlo replication of the two-period simulation design")
    p.add_argument("--config")
    p.add_argument("--out", help="write the JSON result here instead of stdout")
    p.add_argument("--per-rep", help="CSV of per-replication estimates")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--R", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_true", help="include wall-clock seconds in the JSON")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("validate", help="check a CSV panel against the model's invariants")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ivio.ConfigError, ivio.CsvSchemaError, FileNotFoundError, IsADirectoryError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        _err(f"internal: {type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
