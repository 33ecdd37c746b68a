"""Command-line entry point: simulate, fit, loglik, factor-stats.

Exit codes: 0 success, 2 invalid input or refused request, 3 fit did not
converge (trace still written), 4 rank-deficient fixed-effect design.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench, reml
from .errors import RankDeficientError, RemlkitError
from .mme import MixedModelEquations, evaluate
from .model import Theta, load_model
from .sparse.mmio import FactorStats
from .sparse.symbolic import symbolic_factor

EXIT_OK, EXIT_INVALID, EXIT_NOCONV, EXIT_RANK = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _emit(pairs: dict, out=None, path: Path | None = None):
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in pairs.items())
    (out or sys.stdout).write(text)
    if path is not None:
        path.write_text(text)


def _parse_theta(text: str, q: int) -> Theta:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse --theta {text!r}; expected sigma2,kappa_1,...") from None
    if len(vals) != 1 + q:
        raise UsageError(f"--theta needs {1 + q} values (sigma2 then {q} ratios), got {len(vals)}")
    try:
        return Theta.from_vector(vals)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(path: str) -> str:
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")
    return path


def _load(args):
    return load_model(_require(args.data), _require(args.model))


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    params = bench.params_from_text(Path(_require(args.params)).read_text(), seed=args.seed)
    ds = bench.generate(params)
    out = Path(args.out or ".")
    csv_path, meta_path = bench.write_dataset(ds, out, args.stem)
    desc_path = out / f"{args.stem}.model"
    desc_path.write_text(bench.model_descriptor_text())
    row = bench.summarize(ds)
    _emit({"data": csv_path, "metadata": meta_path, "model": desc_path, "seed": params.seed,
           **{k: v for k, v in row.items()}, "mme_order": bench.mme_order(ds.counts)})
    return EXIT_OK


def cmd_fit(args) -> int:
    model = _load(args)
    theta0 = _parse_theta(args.theta0, model.q) if args.theta0 else None
    out = _out_dir(args)
    trace_fh = open(out / "trace.jsonl", "w") if out else None

    def callback(rec):
        if trace_fh:
            trace_fh.write(json.dumps(rec) + "\n")
        if args.verbose:
            sys.stderr.write(f"iter={rec['iter']} loglik={rec['loglik']!r} "
                             f"score_norm={rec['score_norm']:.3g} halvings={rec['halvings']}\n")

    try:
        result = reml.fit(model, theta0, args.method, profile_sigma2=args.profile_sigma2,
                          max_iter=args.max_iter, tol_score=args.tol_score,
                          tol_loglik=args.tol_loglik, dense_threshold=args.dense_threshold,
                          ordering=args.ordering, callback=callback)
    finally:
        if trace_fh:
            trace_fh.close()
    rep = {"n": model.n, "p": model.p, "terms": ",".join(model.names), **result.report(model.names)}
    _emit(rep, path=(out / "report.txt") if out else None)
    return EXIT_OK if result.converged else EXIT_NOCONV


def cmd_loglik(args) -> int:
    model = _load(args)
    theta = _parse_theta(args.theta, model.q) if args.theta else reml.default_theta0(model)
    mme = MixedModelEquations(model, args.ordering)
    system = evaluate(mme, theta)
    comp = reml.loglik_components(system)
    out = _out_dir(args)
    if out is not None and args.dump_mme:
        system.dump(out)
    _emit({"sigma2": theta.sigma2, "kappa": theta.kappa, "n": model.n, "p": model.p,
           "loglik": comp["loglik"], "dof_log_2pi_sigma2": comp["const"] + comp["dof_log_sigma2"],
           "logdet_c": comp["logdet_c"], "logdet_g": comp["logdet_g"], "ypy": comp["ypy"],
           "ypy_over_sigma2": comp["ypy_over_sigma2"]},
          path=(out / "loglik.txt") if out else None)
    return EXIT_OK


def cmd_factor_stats(args) -> int:
    model = _load(args)
    theta = _parse_theta(args.theta, model.q) if args.theta else reml.default_theta0(model)
    mme = MixedModelEquations(model, args.ordering)
    t0 = time.perf_counter()
    symbolic_factor(mme.WtW, args.ordering)
    order_time = time.perf_counter() - t0
    system = mme.assemble(theta)
    t0 = time.perf_counter()
    system.factorize()
    factor_time = time.perf_counter() - t0
    f = system.factor
    stats = FactorStats.from_counts(model.order, mme.WtW.nnz, f.nnz_l, f.flops,
                                    amd_time=order_time, factor_time=factor_time)
    row = {"ordering": args.ordering, **stats.as_dict()}
    _emit(row, path=(_out_dir(args) / "factor_stats.txt") if args.out else None)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="remlkit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--ordering", choices=("amd", "natural"), default="amd")
    common.add_argument("--dense-threshold", type=int, default=reml.DENSE_THRESHOLD)

    s = sub.add_parser("simulate", parents=[common], help="generate a benchmark dataset")
    s.add_argument("params", help="key = value parameter file (preset = P1 etc.)")
    s.add_argument("--stem", default="bench")
    s.set_defaults(func=cmd_simulate)

    def data_args(p):
        p.add_argument("data", help="CSV table")
        p.add_argument("model", help="model descriptor (response / fixed / random)")

    f = sub.add_parser("fit", parents=[common], help="REML fit")
    data_args(f)
    f.add_argument("--method", choices=("ai", "fisher", "newton"), default="ai")
    f.add_argument("--max-iter", type=int, default=50)
    f.add_argument("--tol-score", type=float, default=None)
    f.add_argument("--tol-loglik", type=float, default=1e-8)
    f.add_argument("--profile-sigma2", action=argparse.BooleanOptionalAction, default=True)
    f.add_argument("--theta0", help="sigma2,kappa_1,...,kappa_q")
    f.set_defaults(func=cmd_fit)

    ll = sub.add_parser("loglik", parents=[common], help="evaluate the restricted log-likelihood")
    data_args(ll)
    ll.add_argument("--theta", help="sigma2,kappa_1,...,kappa_q")
    ll.add_argument("--dump-mme", action="store_true", help="write C and rhs into --out")
    ll.set_defaults(func=cmd_loglik)

    fs = sub.add_parser("factor-stats", parents=[common], help="symbolic statistics of C")
    data_args(fs)
    fs.add_argument("--theta", help="sigma2,kappa_1,...,kappa_q")
    fs.set_defaults(func=cmd_factor_stats)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except RankDeficientError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RANK
    except (RemlkitError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
