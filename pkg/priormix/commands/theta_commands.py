import argparse
import logging

from priormix.core.errors import ConfigError
from priormix.learning.prior_algebra import (
    TestPriors,
    diagonal_dominated_theta,
    nonsquare_theta,
    numerical_rank,
    symmetric_theta,
)
from priormix.utils.dataset_io import save_priors_csv, save_theta_csv

logger = logging.getLogger(__name__)


def cmd_gen_theta(args: argparse.Namespace) -> int:
    if args.kind == "symmetric":
        if args.a is None or args.b is None:
            raise ConfigError("--kind symmetric needs --a and --b")
        theta = symmetric_theta(args.a, args.b, args.k)
    elif args.kind == "diag":
        theta = diagonal_dominated_theta(args.k, args.seed)
    else:
        theta = nonsquare_theta(args.k, args.seed)

    save_theta_csv(theta, args.out)
    if args.pi_out:
        save_priors_csv(TestPriors.uniform(args.k), args.pi_out)

    rank = numerical_rank(theta.entries)
    print(f"wrote {theta.M}x{theta.K} class priors to {args.out}")
    print(f"rank={rank} condition_number={theta.condition_number():.6g}")
    logger.info("Generated class priors", extra={
        "kind": args.kind, "M": theta.M, "K": theta.K, "rank": rank})
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("gen-theta", help="generate a class-prior matrix CSV")
    parser.add_argument("--kind", choices=["symmetric", "diag", "nonsquare"], required=True)
    parser.add_argument("--a", type=float, help="symmetric: extra diagonal mass")
    parser.add_argument("--b", type=float, help="symmetric: off-diagonal entry")
    parser.add_argument("--k", type=int, required=True, help="number of classes")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--pi-out", help="also write uniform test priors here")
    parser.set_defaults(handler=cmd_gen_theta)
