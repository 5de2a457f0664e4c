"""Command-line entry points.

    agt-cert run <config.yaml>       train + certify + (optional) attacks
    agt-cert certify <ckpt> <config> re-certify a stored checkpoint
    agt-cert attack <config.yaml>    soundness harness only

Exit status0 requires every requested step to finish with zero soundness
violations.  Set AGT_CERT_OUTPUT_ROOT to relocate relative output dirs.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiment import certify_checkpoint, load_config, run_attacks_only, run_experiment


def _add_output_flag(parser):
    parser.add_argument("--output-dir", default=None,
                        help="artifact directory (default: config output_dir or name)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agt-cert",
        description="Certified training under data poisoning: sound parameter "
                    "boxes for SGD and the certificates they imply.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train with box tracking, certify, attack")
    run.add_argument("config", help="experiment YAML")
    _add_output_flag(run)

    cert = sub.add_parser("certify", help="certify a stored checkpoint")
    cert.add_argument("checkpoint", help="checkpoint .npz with a parameter box")
    cert.add_argument("config", help="experiment YAML providing the dataset")
    _add_output_flag(cert)

    attack = sub.add_parser("attack", help="run the attack soundness harness")
    attack.add_argument("config", help="experiment YAML with an attacks section")
    _add_output_flag(attack)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command == "run":
            summary = run_experiment(config, args.output_dir)
        elif args.command == "certify":
            summary = certify_checkpoint(args.checkpoint, config, args.output_dir)
        else:
            summary = run_attacks_only(config, args.output_dir)
    except (ValueError, OSError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    return 0 if summary.get("soundness_passed", True) else 1


if __name__ == "__main__":
    sys.exit(main())
