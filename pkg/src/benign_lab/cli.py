"""Command-line entry point.

    benign-lab selftest
    benign-lab check-assumptions (--config FILE | --n N --p P ...)
    benign-lab run --config FILE [--output DIR]
    benign-lab sweep --config FILE [--workers K] [--output DIR]
    benign-lab plot DIR

Exit codes: 0 success, 1 failed check, 2 configuration error.
"""

import argparse
import json
import sys

from .errors import ConfigurationError, DivergenceError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _selftest(args):
    from .oracle import selftest
    ok, _ = selftest(verbose=True)
    print("selftest:", "PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _check(args):
    from .assumption_gate import check_assumptions, implied_caps
    if args.config:
        from .experiment.config import load_config
        cfg = load_config(args.config)
        d, net, dg = cfg.data, cfg.network, cfg.diagnostics
        vals = dict(n=d.n, p=d.p, mu_norm_sq=d.mu_norm_sq, eta=d.eta,
                    alpha=cfg.resolved_alpha(), omega=cfg.resolved_omega(), m=net.m,
                    H=net.H, delta=dg.delta, C=dg.C)
    else:
        missing = [k for k in ("n", "p", "mu_norm_sq", "eta", "alpha", "omega", "m", "H")
                   if getattr(args, k) is None]
        if missing:
            raise ConfigurationError("missing --" + ", --".join(m.replace("_", "-")
                                                                  for m in missing))
        vals = {k: getattr(args, k) for k in ("n", "p", "mu_norm_sq", "eta", "alpha",
                                              "omega", "m", "H", "delta", "C")}
    rep = check_assumptions(**vals)
    print(rep.table())
    caps = implied_caps(vals["n"], vals["p"], vals["mu_norm_sq"], vals["m"], vals["H"],
                        vals["delta"], vals["C"])
    print("implied caps at this C:")
    for k, v in caps.items():
        print(f"  {k} = {v:.6g}")
    return EXIT_OK if rep.all_passed else EXIT_FAIL


def _run(args):
    from .experiment.config import load_config
    from .experiment.runner import run_single
    cfg = load_config(args.config)
    try:
        res = run_single(cfg, args.output)
    except DivergenceError as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    s = res.summary
    print(f"run directory: {res.directory}")
    print(json.dumps({k: s[k] for k in ("stop_reason", "steps", "interpolation",
                                        "test_error", "test_error_in_band")}))
    return EXIT_OK if s["converged"] and s["interpolation"] else EXIT_FAIL


def _sweep(args):
    from .experiment.config import load_config
    from .experiment.sweep import run_sweep
    grid = load_config(args.config, sweep=True)
    res = run_sweep(grid, args.workers, args.output)
    failed = sum(r["status"] != "ok" for r in res.rows)
    print(f"sweep directory: {res.directory}")
    print(f"{len(res.rows)} runs, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _plot(args):
    from .experiment.plots import emit_plots
    for path in emit_plots(args.dir):
        print(path)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="benign-lab",
                                 description="benign overfitting experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("selftest", help="run the oracle self-test").set_defaults(fn=_selftest)

    ca = sub.add_parser("check-assumptions", help="audit a configuration")
    ca.add_argument("--config")
    for name, typ in (("n", int), ("p", int), ("mu-norm-sq", float), ("eta", float),
                      ("alpha", float), ("omega", float), ("m", int), ("H", float)):
        ca.add_argument(f"--{name}", type=typ, dest=name.replace("-", "_"))
    ca.add_argument("--delta", type=float, default=0.05)
    ca.add_argument("--C", type=float, default=1.0)
    ca.set_defaults(fn=_check)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="run directory (default from the config)")
    r.set_defaults(fn=_run)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--output")
    s.set_defaults(fn=_sweep)

    p = sub.add_parser("plot", help="emit SVG figures for a run or sweep directory")
    p.add_argument("dir")
    p.set_defaults(fn=_plot)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        from .experiment.runner import SelftestFailed
        if isinstance(exc, SelftestFailed):
            print(str(exc), file=sys.stderr)
            return EXIT_FAIL
        raise


if __name__ == "__main__":
    sys.exit(main())
