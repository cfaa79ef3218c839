"""
Command-line interface.

Exit codes: 0 success, 1 a verification check failed, 2 unreadable or
malformed input (including usage errors), 3 an instance that is not a valid
pair of Gaussians (asymmetric or not positive definite covariance).
"""

import argparse
import sys

import numpy as np

from . import oracle
from .exceptions import GaussKLDError, NotPositiveDefinite, NotSymmetric
from .instance import InstanceParseError, dumps, encode_array, load_instance, output_document
from .kld import BLOCK_ORDER, Basis, BlockId, assemble_hessian, assemble_jacobian, hessian_block, jacobian_block, kld_value

EXIT_OK, EXIT_CHECK_FAILED, EXIT_PARSE, EXIT_INVALID = 0, 1, 2, 3

_BLOCK_CHARS = {"m": BlockId.M, "w": BlockId.W, "s": BlockId.S, "v": BlockId.V}


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


def _load(path):
    try:
        return load_instance(path)
    except OSError as exc:
        raise CliError(EXIT_PARSE, f"cannot read {path}: {exc.strerror}") from exc
    except InstanceParseError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}") from exc
    except (NotSymmetric, NotPositiveDefinite) as exc:
        raise CliError(EXIT_INVALID, f"{path}: invalid instance: {exc}") from exc
    except GaussKLDError as exc:
        raise CliError(EXIT_PARSE, f"{path}: {exc}") from exc


def _parse_block(text):
    text = text.strip()
    if len(text) != 2 or any(c.lower() not in _BLOCK_CHARS for c in text):
        raise CliError(EXIT_PARSE, f"--block must be 'all' or two of m, w, S, V (e.g. mV), got {text!r}")
    return _BLOCK_CHARS[text[0].lower()], _BLOCK_CHARS[text[1].lower()]


def _parse_dims(text):
    try:
        dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise CliError(EXIT_PARSE, f"--dims must be a comma-separated list of integers, got {text!r}") from exc
    if not dims or any(d < 1 for d in dims):
        raise CliError(EXIT_PARSE, "--dims needs at least one positive integer")
    return dims


def cmd_kld(args):
    name, pair = _load(args.path)
    value = kld_value(pair)
    payload = {"value": value, "value_text": f"{value:.17g}"}
    return output_document("kld", payload, instance=name), EXIT_OK


def cmd_jacobian(args):
    name, pair = _load(args.path)
    basis = Basis(args.basis)
    if args.block == "all":
        J = assemble_jacobian(pair, basis)
        payload = {
            "blocks": {b.value: encode_array(v) for b, v in J.blocks.items()},
            "assembled": encode_array(J.assembled),
        }
    else:
        var = _BLOCK_CHARS[args.block.lower()]
        payload = {"blocks": {var.value: encode_array(jacobian_block(pair, var, basis))}}
    return output_document("jacobian", payload, name, basis.value, {"block": args.block}), EXIT_OK


def cmd_hessian(args):
    name, pair = _load(args.path)
    basis = Basis(args.basis)
    H = assemble_hessian(pair, basis)
    full = H.assembled
    payload = {
        "symmetry_residual": H.symmetry_residual,
        "norm_inf": float(np.linalg.norm(full, np.inf)),
        "min_eigenvalue": float(np.linalg.eigvalsh(full).min()),
    }
    if args.block == "all":
        payload["blocks"] = {f"{r.value}{c.value}": encode_array(H.blocks[r, c]) for r in BLOCK_ORDER for c in BLOCK_ORDER}
        payload["assembled"] = encode_array(full)
    else:
        r, c = _parse_block(args.block)
        payload["blocks"] = {f"{r.value}{c.value}": encode_array(hessian_block(pair, r, c, basis))}
    return output_document("hessian", payload, name, basis.value, {"block": args.block}), EXIT_OK


def _merge_reports(per_instance):
    """Collapse per-instance reports into one worst-case report per check name."""
    merged = {}
    for reports in per_instance:
        for r in reports:
            if r.name not in merged or r.observed_error > merged[r.name].observed_error:
                merged[r.name] = r
    out = []
    for key, r in merged.items():
        count = sum(1 for reports in per_instance for x in reports if x.name == key)
        out.append(oracle.make_report(key, r.observed_error, r.tolerance, f"worst over {count} instance(s)", r.oracle))
    return out


def cmd_check(args):
    if (args.path is None) == (args.random is None):
        raise CliError(EXIT_PARSE, "check needs either an instance path or --random N")
    config = {"tol_grad": args.tol_grad, "tol_hess": args.tol_hess}
    if args.path is not None:
        name, pair = _load(args.path)
        reports = oracle.instance_checks(pair, args.tol_grad, args.tol_hess)
    else:
        if args.random < 1 or args.trials < 1:
            raise CliError(EXIT_PARSE, "--random and --trials must be positive")
        name = None
        config.update(random=args.random, seed=args.seed, trials=args.trials)
        runs = [
            oracle.instance_checks(oracle.random_pair(oracle.instance_rng(args.seed, t), args.random), args.tol_grad, args.tol_hess)
            for t in range(args.trials)
        ]
        reports = _merge_reports(runs)
    payload = {"all_passed": all(r.passed for r in reports), "reports": [r.as_dict() for r in reports]}
    code = EXIT_OK if payload["all_passed"] else EXIT_CHECK_FAILED
    return output_document("check", payload, name, None, config), code


def cmd_identities(args):
    dims = _parse_dims(args.dims)
    if args.trials < 1:
        raise CliError(EXIT_PARSE, "--trials must be positive")
    reports = oracle.identity_suite(args.seed, dims, args.trials, args.tol)
    payload = {"all_passed": all(r.passed for r in reports), "reports": [r.as_dict() for r in reports]}
    config = {"seed": args.seed, "dims": dims, "trials": args.trials, "tol": args.tol}
    code = EXIT_OK if payload["all_passed"] else EXIT_CHECK_FAILED
    return output_document("identities", payload, config=config), code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_PARSE, message)


def build_parser():
    parser = _Parser(prog="gausskld", description=__doc__.strip().splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="write the JSON document here instead of stdout")
    common.add_argument("--format", choices=["json"], default="json")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("kld", parents=[common], help="KL(q || p) for an instance file")
    p.add_argument("path")
    p.set_defaults(func=cmd_kld)

    p = sub.add_parser("jacobian", parents=[common], help="Jacobian blocks")
    p.add_argument("path")
    p.add_argument("--basis", choices=["vec", "vech"], default="vech")
    p.add_argument("--block", choices=["m", "w", "S", "V", "all"], default="all")
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("hessian", parents=[common], help="Hessian blocks")
    p.add_argument("path")
    p.add_argument("--basis", choices=["vec", "vech"], default="vech")
    p.add_argument("--block", default="all", help="'all' or a pair such as mm, mV, SS")
    p.set_defaults(func=cmd_hessian)

    p = sub.add_parser("check", parents=[common], help="verify closed forms against finite differences")
    p.add_argument("path", nargs="?")
    p.add_argument("--random", type=int, metavar="N", help="check random instances of dimension N")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--tol-grad", type=float, default=1e-6)
    p.add_argument("--tol-hess", type=float, default=1e-4)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("identities", parents=[common], help="randomised matrix identity suite")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--dims", default="1,2,3,5")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_identities)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        doc, code = args.func(args)
    except CliError as exc:
        print(f"gausskld: error: {exc}", file=sys.stderr)
        return exc.code
    text = dumps(doc)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
