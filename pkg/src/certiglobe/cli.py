"""Command-line driver.

Exit codes: 0 Safe, 1 Violated (or no certifiable threshold), 2 Unknown or
no guarantee available, 3 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fixtures
from .encoder import EncodingError, SafetySpec, build_query_family, dump_family
from .network import (NetworkFormatError, dumps_network, generate_network, load_network,
                      save_network)
from .sigmoid import error_bound, remez_sigmoid
from .verifier import (SAFE, VIOLATED, GuaranteeUnavailable, NotSafeAtMax,
                       min_confidence, sweep, verify, write_sweep_csv)

EXIT_SAFE, EXIT_VIOLATED, EXIT_UNKNOWN, EXIT_USAGE = 0, 1, 2, 3

FIXTURES = {
    "constant": lambda: fixtures.constant_network(),
    "flip": fixtures.flip_network,
    "indeterminate": fixtures.indeterminate_network,
    "fairness-biased": lambda: fixtures.fairness_network(bias=4.0),
    "fairness-unbiased": lambda: fixtures.fairness_network(bias=0.0),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _epsilon(text):
    """A number, a comma list, or a file holding a JSON list or plain numbers."""
    p = Path(text)
    if p.is_file():
        raw = p.read_text()
        vals = json.loads(raw) if raw.lstrip().startswith("[") else _floats(raw)
    else:
        try:
            vals = _floats(text)
        except ValueError:
            raise UsageError(f"--epsilon: not a number list or readable file: {text}") from None
    if not vals:
        raise UsageError("--epsilon is empty")
    return vals[0] if len(vals) == 1 else tuple(vals)


def _spec(args, net, kappa=None, epsilon=None):
    eps = epsilon if epsilon is not None else _epsilon(args.epsilon)
    kappa = args.kappa if kappa is None else kappa
    if args.property == "fairness":
        if not args.sensitive:
            raise UsageError("fairness needs --sensitive")
        names = [s for s in args.sensitive.split(",") if s]
        try:
            idx = [[f.name for f in net.features].index(s) for s in names]
        except ValueError:
            raise UsageError(f"unknown sensitive feature in {args.sensitive!r}") from None
        return SafetySpec.fairness(idx, eps, kappa, args.delta)
    return SafetySpec.robustness(eps, kappa, args.delta)


def _verify_kw(args):
    return {"early_exit": not args.no_early_exit, "fidelity": args.fidelity_two_query,
            "max_splits": args.max_splits, "max_time": args.max_time}


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_verify(args):
    net = load_network(args.network)
    spec = _spec(args, net)
    if args.dump_queries:
        _dump(net, spec, args)
    v = verify(net, spec, **_verify_kw(args))
    _emit(v.to_json(timing=not args.no_timing), args.out)
    return {SAFE: EXIT_SAFE, VIOLATED: EXIT_VIOLATED}.get(v.status, EXIT_UNKNOWN)


def _dump(net, spec, args):
    thr = spec.kappa - error_bound(net.output_dim, spec.delta)
    if not thr > 0.5:
        raise GuaranteeUnavailable(f"adjusted threshold {thr:.6g} is not above 1/2")
    fam = build_query_family(net, spec, thr, pwl=remez_sigmoid(spec.delta),
                             fidelity=args.fidelity_two_query)
    for p in dump_family(fam, args.dump_queries):
        print(p, file=sys.stderr)


def cmd_min_confidence(args):
    net = load_network(args.network)
    spec = _spec(args, net, kappa=0.75)   # kappa is searched; any valid value will do
    res = min_confidence(net, spec, args.granularity, **_verify_kw(args))
    if isinstance(res, NotSafeAtMax):
        doc = {"kappa_min": None, "not_safe_at_max": res.kappa_max,
               "granularity": args.granularity}
        code = EXIT_VIOLATED
    else:
        doc = {"kappa_min": res, "granularity": args.granularity}
        code = EXIT_SAFE
    _emit(json.dumps(doc) + "\n", args.out)
    return code


def cmd_sweep(args):
    net = load_network(args.network)
    eps = _floats(args.epsilons)
    kappas = _floats(args.kappas)
    if not eps or not kappas:
        raise UsageError("--epsilons and --kappas must be non-empty")
    spec = _spec(args, net, kappa=kappas[0], epsilon=eps[0])
    rows = sweep(net, spec, eps, kappas, **_verify_kw(args))
    _emit(write_sweep_csv(rows, timing=not args.no_timing), args.out)
    return EXIT_SAFE


def cmd_gen_network(args):
    if args.fixture:
        net = FIXTURES[args.fixture]()
    else:
        net = generate_network(args.seed, args.inputs, args.outputs,
                               _ints(args.hidden), args.weight_scale)
    if args.out:
        save_network(net, args.out)
    else:
        sys.stdout.write(dumps_network(net))
    return EXIT_SAFE


def _ints(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _add_query_flags(p, kappa=True):
    p.add_argument("--network", required=True)
    p.add_argument("--property", choices=["robustness", "fairness"], default="robustness")
    p.add_argument("--epsilon", help="number, comma list, or file with one tolerance per feature")
    p.add_argument("--sensitive", help="comma-separated sensitive feature names")
    if kappa:
        p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.005)
    p.add_argument("--fidelity-two-query", action="store_true",
                   help="also emit the vacuous '< 0' disequality query per class")
    p.add_argument("--no-early-exit", action="store_true", help="run every class query")
    p.add_argument("--max-splits", type=int)
    p.add_argument("--max-time", type=float, help="seconds per solver call")
    p.add_argument("--no-timing", action="store_true", help="write 0 for timings (byte-stable output)")
    p.add_argument("--out")


def build_parser():
    ap = _Parser(prog="certiglobe", description="Confidence-based global robustness and fairness checks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", help="verify one (epsilon, kappa) query")
    _add_query_flags(p)
    p.add_argument("--dump-queries", metavar="DIR", help="write each class query in text form")
    p.set_defaults(func=cmd_verify, needs_eps=True)

    p = sub.add_parser("min-confidence", help="smallest certified kappa on a grid")
    _add_query_flags(p, kappa=False)
    p.add_argument("--granularity", type=float, default=0.05)
    p.set_defaults(func=cmd_min_confidence, needs_eps=True)

    p = sub.add_parser("sweep", help="verify an epsilon x kappa grid and write CSV")
    _add_query_flags(p, kappa=False)
    p.add_argument("--epsilons", required=True, help="comma list of scalar tolerances")
    p.add_argument("--kappas", required=True, help="comma list of thresholds")
    p.set_defaults(func=cmd_sweep, needs_eps=False)

    p = sub.add_parser("gen-network", help="write a random or fixture network")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inputs", type=int, default=2)
    p.add_argument("--outputs", type=int, default=2)
    p.add_argument("--hidden", default="4", help="comma list of hidden layer sizes")
    p.add_argument("--weight-scale", type=float, default=1.0)
    p.add_argument("--fixture", choices=sorted(FIXTURES))
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_network, needs_eps=False)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "needs_eps", False) and args.epsilon is None:
            raise UsageError("--epsilon is required")
        return args.func(args)
    except GuaranteeUnavailable as exc:
        print(f"certiglobe: no guarantee: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except (UsageError, EncodingError, NetworkFormatError, OSError, ValueError) as exc:
        print(f"certiglobe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
