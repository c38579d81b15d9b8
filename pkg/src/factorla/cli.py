"""Command-line interface: dataset generation, benchmarks, training, explain.

Subcommands::

    factorla gen pkfk --ns 2e5 --nr 1e4 --ds 20 --dr 80 --seed 1 --out data/
    factorla gen mn --ns 2e4 --ds 50 --dr 50 --nu-frac 0.01 --seed 1 --out data/
    factorla bench op --data data/ --op crossprod
    factorla bench algo --data data/ --algo logreg --iters 10
    factorla train --data data/ --algo kmeans --k 10 --iters 20 --mode auto
    factorla explain --ns 2e7 --nr 1e6 --ds 20 --dr 80

All numeric flags accept scientific notation.  ``--threads`` (or the
MORPHEUS_THREADS environment variable) caps BLAS parallelism and is recorded
in benchmark output.  Exit codes: 0 ok, 1 usage, 2 data error, 3 benchmark
correctness failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CORRECTNESS = 3

_thread_limiter = None  # keeps the threadpoolctl handle alive


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _num(text):
    return float(text)


def _int(text):
    return int(float(text))


def build_parser():
    p = _Parser(prog="factorla", description="Factorized linear algebra over normalized data")
    p.add_argument(
        "--threads",
        type=_int,
        default=None,
        help="BLAS thread cap (default: MORPHEUS_THREADS env var, else library default)",
    )
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gsub = gen.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in ("pkfk", "mn"):
        g = gsub.add_parser(kind, help=f"{kind} join dataset")
        g.add_argument("--ns", type=_int, required=True, help="entity rows")
        g.add_argument("--nr", type=_int, default=None, help="attribute rows (mn default: --ns)")
        g.add_argument("--ds", type=_int, required=True, help="entity features")
        g.add_argument("--dr", type=_int, required=True, help="attribute features")
        g.add_argument("--density", type=_num, default=1.0, help="feature density in (0,1]")
        g.add_argument("--seed", type=_int, default=0)
        g.add_argument("--out", required=True, help="output directory")
        if kind == "mn":
            g.add_argument("--nu", type=_int, default=None, help="join-attribute domain size")
            g.add_argument("--nu-frac", type=_num, default=None, help="domain size as a fraction of --ns")

    bench = sub.add_parser("bench", help="benchmark factorized vs materialized execution")
    bsub = bench.add_subparsers(dest="what", required=True, parser_class=_Parser)
    bop = bsub.add_parser("op", help="benchmark a single operator")
    bop.add_argument("--data", required=True, help="dataset directory or schema.json")
    bop.add_argument("--op", required=True, help="operator name")
    bop.add_argument("--dx", type=_int, default=10, help="columns of the lmm operand")
    bop.add_argument("--nx", type=_int, default=10, help="rows of the rmm operand")
    bop.add_argument("--method", choices=("efficient", "naive"), default="efficient")
    bop.add_argument("--warmup", type=_int, default=2)
    bop.add_argument("--trials", type=_int, default=5)
    bop.add_argument("--seed", type=_int, default=0)
    bop.add_argument("--out", default=None, help="result JSON path (default: stdout)")

    balgo = bsub.add_parser("algo", help="benchmark a training algorithm")
    balgo.add_argument("--data", required=True)
    balgo.add_argument("--algo", required=True)
    balgo.add_argument("--iters", type=_int, default=20)
    balgo.add_argument("--alpha", type=_num, default=1e-4, help="gradient-descent step size")
    balgo.add_argument("--k", type=_int, default=10, help="K-Means centroids")
    balgo.add_argument("--r", type=_int, default=5, help="GNMF rank")
    balgo.add_argument("--seed", type=_int, default=0)
    balgo.add_argument("--warmup", type=_int, default=1)
    balgo.add_argument("--trials", type=_int, default=3)
    balgo.add_argument("--out", default=None)

    train = sub.add_parser("train", help="train one model and emit its JSON")
    train.add_argument("--data", required=True)
    train.add_argument("--algo", required=True)
    train.add_argument("--mode", choices=("factorized", "materialized", "auto"), default="auto")
    train.add_argument("--tau", type=_num, default=5.0, help="tuple-ratio threshold for auto mode")
    train.add_argument("--rho", type=_num, default=1.0, help="feature-ratio threshold for auto mode")
    train.add_argument("--iters", type=_int, default=20)
    train.add_argument("--alpha", type=_num, default=1e-4)
    train.add_argument("--k", type=_int, default=10)
    train.add_argument("--r", type=_int, default=5)
    train.add_argument("--seed", type=_int, default=0)
    train.add_argument("--out", default=None)

    explain = sub.add_parser("explain", help="show ratios, predicted counts, and the dispatch verdict")
    explain.add_argument("--data", default=None, help="dataset directory or schema.json")
    explain.add_argument("--ns", type=_int, default=None)
    explain.add_argument("--nr", type=_int, default=None)
    explain.add_argument("--ds", type=_int, default=None)
    explain.add_argument("--dr", type=_int, default=None)
    explain.add_argument("--dx", type=_int, default=10)
    explain.add_argument("--nx", type=_int, default=10)
    explain.add_argument("--tau", type=_num, default=5.0)
    explain.add_argument("--rho", type=_num, default=1.0)
    explain.add_argument("--json", action="store_true", dest="as_json")
    return p


def _apply_threads(threads):
    global _thread_limiter
    if threads is None:
        env = os.environ.get("MORPHEUS_THREADS")
        threads = int(float(env)) if env else None
    if threads is not None:
        import threadpoolctl

        _thread_limiter = threadpoolctl.threadpool_limits(limits=threads)
    return threads


def _schema_path(data):
    p = Path(data)
    if p.is_dir():
        p = p / "schema.json"
    return p


def _emit_json(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)


def _cmd_gen(args):
    from .dataio import SynthParams, gen_mn, gen_pkfk
    from .exceptions import DataError

    n_r = args.nr if args.nr is not None else args.ns
    n_u = None
    if args.kind == "mn":
        if args.nu is not None:
            n_u = args.nu
        elif args.nu_frac is not None:
            n_u = max(1, int(round(args.nu_frac * args.ns)))
        else:
            print("factorla gen mn: error: one of --nu / --nu-frac is required", file=sys.stderr)
            return EXIT_USAGE
    try:
        params = SynthParams(
            n_s=args.ns, n_r=n_r, d_s=args.ds, d_r=args.dr,
            n_u=n_u, density=args.density, seed=args.seed,
        )
        fn = gen_pkfk if args.kind == "pkfk" else gen_mn
        schema = fn(params, args.out)
    except DataError as exc:
        print(f"factorla gen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wrote {schema}")
    return EXIT_OK


def _cmd_bench(args, threads):
    from . import bench
    from .dataio import load

    nm, y = load(_schema_path(args.data))
    if args.what == "op":
        record = bench.bench_op(
            nm, args.op, d_x=args.dx, n_x=args.nx, method=args.method,
            warmup=args.warmup, trials=args.trials, seed=args.seed,
        )
    else:
        from .ml import TrainConfig

        cfg = TrainConfig(
            iterations=args.iters, step_size=args.alpha,
            k=args.k, r=args.r, rng_seed=args.seed,
        )
        record = bench.bench_algo(nm, y, args.algo, cfg, warmup=args.warmup, trials=args.trials)
    record["threads"] = threads
    _emit_json(record, args.out)
    return EXIT_OK


def _cmd_train(args, threads):
    from . import bench
    from .costmodel import DecisionThresholds, Plan, plan_for
    from .dataio import load
    from .ml import TrainConfig
    from .normmat import materialize, stats

    nm, y = load(_schema_path(args.data))
    cfg = TrainConfig(
        iterations=args.iters, step_size=args.alpha, k=args.k, r=args.r, rng_seed=args.seed
    )
    decision = None
    if args.mode == "factorized":
        m = nm
    elif args.mode == "materialized":
        m = materialize(nm)
    else:
        thresholds = DecisionThresholds(tau=args.tau, rho=args.rho)
        plan = plan_for(nm, thresholds)
        st = stats(nm)
        decision = {
            "plan": plan.value,
            "tuple_ratio": st.tuple_ratio,
            "feature_ratio": None if st.feature_ratio == float("inf") else st.feature_ratio,
            "tau": args.tau,
            "rho": args.rho,
        }
        m = nm if plan is Plan.FACTORIZED else materialize(nm)
    out = bench._run_algo(args.algo, m, y, cfg)
    doc = out.to_json_dict()
    doc["mode"] = args.mode
    doc["decision"] = decision
    doc["threads"] = threads
    _emit_json(doc, args.out)
    return EXIT_OK


def _cmd_explain(args):
    from .costmodel import DecisionThresholds, decide, predict_counts
    from .dataio import load
    from .normmat import ShapeStats, stats

    if args.data:
        nm, _ = load(_schema_path(args.data))
        st = stats(nm)
    else:
        missing = [f for f in ("ns", "nr", "ds", "dr") if getattr(args, f) is None]
        if missing:
            print(
                f"factorla explain: error: need --data or all of --ns --nr --ds --dr "
                f"(missing: {', '.join('--' + m for m in missing)})",
                file=sys.stderr,
            )
            return EXIT_USAGE
        st = ShapeStats(
            variant="pkfk", n_s=args.ns, d_s=args.ds, n_r=(args.nr,), d_r=(args.dr,),
            logical_rows=args.ns, logical_cols=args.ds + args.dr,
            tuple_ratio=args.ns / args.nr, feature_ratio=args.dr / args.ds,
        )
    thresholds = DecisionThresholds(tau=args.tau, rho=args.rho)
    verdict = decide(st, thresholds)
    preds = {}
    for op, kw in (
        ("scalar_op", {}),
        ("rowsums", {}),
        ("colsums", {}),
        ("sum", {}),
        ("lmm", {"d_x": args.dx}),
        ("rmm", {"n_x": args.nx}),
        ("crossprod", {}),
        ("ginv", {}),
    ):
        p = predict_counts(op, st, **kw)
        preds[op] = {
            "standard": p.standard,
            "factorized": p.factorized,
            "speedup": p.predicted_speedup,
        }
    doc = {
        "dims": {
            "variant": st.variant,
            "n_s": st.n_s,
            "d_s": st.d_s,
            "n_r": list(st.n_r),
            "d_r": list(st.d_r),
            "logical_rows": st.logical_rows,
            "logical_cols": st.logical_cols,
        },
        "tuple_ratio": st.tuple_ratio,
        "feature_ratio": None if st.feature_ratio == float("inf") else st.feature_ratio,
        "thresholds": {"tau": args.tau, "rho": args.rho},
        "verdict": verdict.value,
        "predicted_counts": preds,
    }
    if args.as_json:
        print(json.dumps(doc, indent=2, sort_keys=True))
        return EXIT_OK
    fr = "inf" if doc["feature_ratio"] is None else f"{doc['feature_ratio']:.3g}"
    print(f"variant        {st.variant}")
    print(f"logical shape  {st.logical_rows} x {st.logical_cols}")
    print(f"tuple ratio    {st.tuple_ratio:.3g}")
    print(f"feature ratio  {fr}")
    print(f"verdict        {verdict.value} (tau={args.tau:g}, rho={args.rho:g})")
    print()
    print(f"{'operator':<12} {'standard':>14} {'factorized':>14} {'speedup':>9}")
    for op, p in preds.items():
        print(f"{op:<12} {p['standard']:>14.4g} {p['factorized']:>14.4g} {p['speedup']:>9.3g}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = _apply_threads(args.threads)
    from . import bench
    from .exceptions import DataError, FactorlaError

    try:
        if args.cmd == "gen":
            return _cmd_gen(args)
        if args.cmd == "bench":
            return _cmd_bench(args, threads)
        if args.cmd == "train":
            return _cmd_train(args, threads)
        if args.cmd == "explain":
            return _cmd_explain(args)
    except bench.CorrectnessError as exc:
        print(f"factorla: correctness failure: {exc}", file=sys.stderr)
        return EXIT_CORRECTNESS
    except DataError as exc:
        print(f"factorla: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FactorlaError as exc:
        print(f"factorla: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"factorla: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
