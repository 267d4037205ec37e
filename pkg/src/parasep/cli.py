"""Command-line entry point: ``parasep {run-study,audit,run-rbm,replay}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 nonintrusivity contract violated. Failures print a one-line JSON report
on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import experiments as ex
from .exceptions import (
    DegenerateInputError,
    IllConditionedError,
    LayoutError,
    ProviderError,
    SingularMatrixError,
)

NUMERICAL = (SingularMatrixError, IllConditionedError, ProviderError, DegenerateInputError, FloatingPointError)


def _parser():
    p = argparse.ArgumentParser(prog="parasep", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run-study", help="error sweep over a list of d^g")
    s.add_argument("-c", "--config", required=True, help="JSON file or shipped profile name")
    s.add_argument("-o", "--output", help="override the configured output directory")
    s.add_argument("--svg", action="store_true", help="also write log10 error charts")

    s = sub.add_parser("audit", help="count provider calls per access tier")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--output")

    s = sub.add_parser("run-rbm", help="reduced basis pipeline")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--output")

    s = sub.add_parser("replay", help="evaluate a saved model without assembly")
    s.add_argument("-m", "--manifest", required=True)
    s.add_argument("--mu", required=True, type=float)
    s.add_argument("-o", "--output", help="write the evaluated payload to this .npy file")
    return p


def _report(kind, exc, code):
    info = {"error": kind, "message": str(exc), "exit_code": code}
    mu = getattr(exc, "mu", None)
    if mu is not None:
        info["mu"] = float(mu)
    print(json.dumps(info), file=sys.stderr)
    return code


def _replay(args):
    res = ex.replay(args.manifest, args.mu)
    payload = res.pop("payload")
    if args.output:
        np.save(args.output, payload)
    res["beta"] = [[b.real, b.imag] if isinstance(b, complex) else b for b in res["beta"]]
    print(json.dumps(res))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run-study":
            summary = ex.run_study(args.config, svg=args.svg, output_dir=args.output)
            for run in summary["runs"]:
                print(
                    f"d^g={run['dg']:3d}  d^z={run['dz']:3d}  "
                    f"max matrix error={run['matrix_error']['max']:.3e}  "
                    f"max solution error={run['solution_error']['max']:.3e}"
                )
        elif args.command == "audit":
            report = ex.audit(args.config, output_dir=args.output)
            print(json.dumps({k: v for k, v in report.items() if k != "violations"}))
        elif args.command == "run-rbm":
            summary = ex.run_rbm(args.config, output_dir=args.output)
            print(f"n_hat={summary['n_hat']}  max error={summary['rbm_error']['max']:.3e}")
        else:
            _replay(args)
    except ex.AuditViolation as exc:
        return _report("audit", exc, ex.EXIT_AUDIT)
    except (ex.ConfigError, LayoutError, FileNotFoundError) as exc:
        return _report("config", exc, ex.EXIT_CONFIG)
    except NUMERICAL as exc:
        return _report("numerical", exc, ex.EXIT_NUMERICAL)
    return ex.EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
