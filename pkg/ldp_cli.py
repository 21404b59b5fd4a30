#!/usr/bin/env python3
"""
LDP Rating Collector - Unified CLI
Privatize ratings, certify privacy, evaluate utility bounds, run coverage
experiments and recover rating matrices.
"""

import argparse
import math
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent))

import config
from config_loader import RunConfig
from scripts.completion import SolverConfig, solve_completion
from scripts.dp_verify import (
    certification_passed, certify_mlaplace_entry, certify_rr_entry, certify_vector_composition,
    default_partition, default_rr_partition, empirical_frequency_test,
)
from scripts.mechanisms import MECHANISMS, MISSING, MLAPLACE, RANDOMIZED_RESPONSE, RandomStream
from scripts.ratings_io import (
    normalize_matrix, read_ratings, write_estimate, write_ratings, write_report, write_results,
)
from scripts.utility import UtilityBoundInputs, bound_for, privatize_matrix, run_coverage_experiment

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class LDPCLI:
    """Unified CLI for the LDP rating collector."""

    def privatize(self, args) -> int:
        """Privatize a ratings file user by user."""
        print(f"\n🔒 Privatizing {args.input} with {args.mechanism} (eps={args.epsilon})")

        matrix = read_ratings(args.input, d=args.d)
        if args.mechanism == MLAPLACE and args.d is not None:
            matrix = normalize_matrix(matrix)

        # Row i of the sorted matrix uses child stream i of the seed
        matrix = matrix.sorted()
        private = privatize_matrix(matrix, args.mechanism, args.epsilon, RandomStream(args.seed))

        fabricated = int((private.mask & ~matrix.mask).sum())
        dropped = int((matrix.mask & ~private.mask).sum())
        print(f"   Users: {matrix.m}, items: {matrix.n}, ratings: {matrix.observed_count}")
        print(f"✓ Kept {private.observed_count - fabricated}, dropped {dropped}, fabricated {fabricated}")

        write_ratings(args.output, private)
        print(f"💾 Saved: {args.output}")
        return EXIT_OK

    def verify_dp(self, args) -> int:
        """Certify the epsilon-DP ratio bounds and write a report."""
        print(f"\n🔍 Certifying {args.mechanism} at eps={args.epsilon}")

        if args.mechanism == MLAPLACE:
            reports = certify_mlaplace_entry(args.epsilon)
        else:
            reports = certify_rr_entry(args.d, args.epsilon)
        print(f"   Single coordinate: {len(reports)} ratios, max {reports[0].ratio:.6f} "
              f"(bound {math.exp(args.epsilon):.6f})")

        rng = RandomStream(args.seed)
        frequencies_ok = True
        if args.mechanism == RANDOMIZED_RESPONSE or args.samples:
            composed = certify_vector_composition(
                args.mechanism, args.n, args.epsilon, rng=rng.spawn(0),
                mc_samples=args.samples or 0, d=args.d,
            )
            reports.append(composed)
            print(f"   Composition n={args.n}: ratio {composed.ratio:.6f} "
                  f"(bound {composed.bound:.6f}, {composed.method})")

        if args.samples:
            if args.mechanism == MLAPLACE:
                inputs, partition = [-1.0, 0.0, 1.0, MISSING], default_partition()
            else:
                inputs, partition = list(range(args.d + 1)), default_rr_partition(args.d)
            for index, x in enumerate(inputs):
                histogram = empirical_frequency_test(args.mechanism, x, args.epsilon, partition,
                                                     args.samples, rng.spawn(index + 1), d=args.d)
                marker = "✓" if histogram.passed else "❌"
                print(f"{marker} {histogram.summary()}")
                frequencies_ok &= histogram.passed

        report_path = args.report or Path(RunConfig.load().output.report)
        write_report(report_path, reports)
        print(f"💾 Saved: {report_path}")

        if certification_passed(reports) and frequencies_ok:
            print("\n✅ Certification passed")
            return EXIT_OK
        failed = [r for r in reports if not r.passed]
        print(f"\n❌ Certification failed: {len(failed)} ratio(s) above bound")
        return EXIT_FAILED

    def bound(self, args) -> int:
        """Print the utility upper bound."""
        inputs = UtilityBoundInputs(
            rho0=args.rho0, s=args.s, epsilon=args.epsilon, gamma=args.gamma,
            m=args.m, n=args.n, d=args.d,
        )
        print(config.format_float(bound_for(args.mechanism, inputs)))
        return EXIT_OK

    def experiment(self, args) -> int:
        """Run a coverage experiment and write per-trial results."""
        run_config = RunConfig.load(args.config)
        exp = run_config.experiment
        for name in ("mechanism", "epsilon", "gamma", "d", "trials", "seed"):
            value = getattr(args, name)
            if value is not None:
                setattr(exp, name, value)
        if args.no_recover:
            exp.recover = False
        if args.out is not None:
            run_config.output.results = args.out

        errors = run_config.validate()
        if errors:
            print("❌ Configuration errors:")
            for error in errors:
                print(f"   - {error}")
            return EXIT_USAGE

        spec = run_config.ground_truth_spec()
        print(f"\n📊 Coverage experiment: {exp.mechanism}, eps={exp.epsilon}, gamma={exp.gamma}, "
              f"{exp.trials} trials on {spec.m}x{spec.n} rank {spec.r}")

        outcome = run_coverage_experiment(
            spec, exp.mechanism, exp.epsilon, exp.gamma, exp.trials, base_seed=exp.seed,
            settings=run_config.solver_config(), recover=exp.recover, verbose=args.verbose,
        )
        write_results(run_config.output.results, outcome.records)
        print(f"💾 Saved: {run_config.output.results}")

        if exp.recover:
            unconverged = sum(1 for record in outcome.records if record.converged is False)
            if unconverged:
                print(f"⚠️  Solver did not converge on {unconverged} trial(s)")

        print(f"coverage={config.format_float(outcome.coverage)}")
        if outcome.accepted:
            return EXIT_OK
        print(f"❌ Coverage below 1 - gamma = {1 - exp.gamma:.6g}")
        return EXIT_FAILED

    def recover(self, args) -> int:
        """Complete a privatized ratings file with a user-supplied rho."""
        print(f"\n🧩 Recovering {args.input} with rho={args.rho}")
        matrix = read_ratings(args.input, d=args.d, unbounded=args.d is None)
        settings = SolverConfig(
            max_iterations=args.max_iterations,
            step_tolerance=args.step_tolerance,
            constraint_tolerance=args.constraint_tolerance,
            lambda_bisection_steps=args.bisection_steps,
            rank_cap=args.rank_cap,
        )
        result = solve_completion(matrix, args.rho, settings)

        print(f"   Observed: {matrix.observed_count} of {matrix.m * matrix.n} entries")
        print(f"✓ Nuclear norm {result.nuclear_norm:.6g}, rank {result.rank}, "
              f"residual {result.constraint_residual:.6g}, {result.iterations} iterations")

        write_estimate(args.output, result.estimate, matrix.users, matrix.items)
        print(f"💾 Saved: {args.output}")

        if result.converged:
            return EXIT_OK
        print("❌ Solver did not converge; estimate is the last iterate")
        return EXIT_FAILED


def _add_mechanism_args(parser):
    parser.add_argument('--mechanism', required=True, choices=list(MECHANISMS), help='Privatization mechanism')
    parser.add_argument('--epsilon', required=True, type=float, help='Privacy budget (> 0)')
    parser.add_argument('--d', type=int, help='Star scale 1..d (required for rr)')


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        description="LDP Rating Collector - Unified CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Privatize 5-star ratings with randomized response
  python ldp_cli.py privatize --mechanism rr --epsilon 1.6 --d 5 --seed 7 --in ratings.csv --out private.csv

  # Privatize normalized ratings with the modified Laplace mechanism
  python ldp_cli.py privatize --mechanism mlaplace --epsilon 2 --seed 7 --in ratings.csv --out private.csv

  # Certify the privacy guarantee
  python ldp_cli.py verify-dp --mechanism mlaplace --epsilon 1 --report report.csv

  # Evaluate the utility bound
  python ldp_cli.py bound --mechanism rr --epsilon 1.6 --gamma 0.1 --rho0 0.1 --s 500 --m 100 --n 100 --d 5

  # Coverage experiment from a run configuration
  python ldp_cli.py experiment --config run.yaml --trials 200 --out results.csv

  # Recover the rating matrix from a privatized file
  python ldp_cli.py recover --in private.csv --rho 12.5 --out estimate.csv
        """
    )

    subparsers = parser.add_subparsers(dest='command', help='Command to execute')

    # Privatize command
    privatize_parser = subparsers.add_parser('privatize', help='Privatize a ratings file')
    _add_mechanism_args(privatize_parser)
    privatize_parser.add_argument('--seed', required=True, type=int, help='Random seed')
    privatize_parser.add_argument('--in', dest='input', required=True, type=Path, help='Input ratings CSV')
    privatize_parser.add_argument('--out', dest='output', required=True, type=Path, help='Output ratings CSV')

    # Verify command
    verify_parser = subparsers.add_parser('verify-dp', help='Certify epsilon-DP ratio bounds')
    _add_mechanism_args(verify_parser)
    verify_parser.add_argument('--samples', type=int, help='Monte Carlo samples (enables sampled checks)')
    verify_parser.add_argument('--n', type=int, default=2, help='Vector dimension for composition (default: 2)')
    verify_parser.add_argument('--seed', type=int, default=config.DEFAULT_SEED, help='Random seed')
    verify_parser.add_argument('--report', type=Path, help='Report CSV (default: output.report from run.yaml)')

    # Bound command
    bound_parser = subparsers.add_parser('bound', help='Print the utility upper bound')
    _add_mechanism_args(bound_parser)
    bound_parser.add_argument('--gamma', required=True, type=float, help='Tolerance level in (0, 1)')
    bound_parser.add_argument('--rho0', required=True, type=float, help='Per-entry observation noise scale')
    bound_parser.add_argument('--s', required=True, type=int, help='Number of true non-missing ratings')
    bound_parser.add_argument('--m', required=True, type=int, help='Number of users')
    bound_parser.add_argument('--n', required=True, type=int, help='Number of items')

    # Experiment command
    experiment_parser = subparsers.add_parser('experiment', help='Run a coverage experiment')
    experiment_parser.add_argument('--config', type=Path, help='Run configuration YAML')
    experiment_parser.add_argument('--trials', type=int, help='Number of trials')
    experiment_parser.add_argument('--out', type=Path, help='Results CSV (default: output.results)')
    experiment_parser.add_argument('--mechanism', choices=list(MECHANISMS), help='Override mechanism')
    experiment_parser.add_argument('--epsilon', type=float, help='Override privacy budget')
    experiment_parser.add_argument('--gamma', type=float, help='Override tolerance level')
    experiment_parser.add_argument('--d', type=int, help='Override star scale')
    experiment_parser.add_argument('--seed', type=int, help='Override base seed')
    experiment_parser.add_argument('--no-recover', action='store_true', help='Skip the completion solve')
    experiment_parser.add_argument('--verbose', '-v', action='store_true', help='Print every trial')

    # Recover command
    recover_parser = subparsers.add_parser('recover', help='Recover a rating matrix')
    recover_parser.add_argument('--in', dest='input', required=True, type=Path, help='Privatized ratings CSV')
    recover_parser.add_argument('--rho', required=True, type=float, help='Constraint radius')
    recover_parser.add_argument('--out', dest='output', required=True, type=Path, help='Estimate CSV')
    recover_parser.add_argument('--d', type=int, help='Star scale of a randomized response file')
    recover_parser.add_argument('--max-iterations', type=int, default=config.DEFAULT_MAX_ITERATIONS)
    recover_parser.add_argument('--step-tolerance', type=float, default=config.DEFAULT_STEP_TOLERANCE)
    recover_parser.add_argument('--constraint-tolerance', type=float, default=config.DEFAULT_CONSTRAINT_TOLERANCE)
    recover_parser.add_argument('--bisection-steps', type=int, default=config.DEFAULT_BISECTION_STEPS)
    recover_parser.add_argument('--rank-cap', type=int, default=config.DEFAULT_RANK_CAP)

    return parser


def main(argv=None):
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    if getattr(args, 'mechanism', None) == RANDOMIZED_RESPONSE and args.command != 'experiment' and args.d is None:
        parser.error("--mechanism rr requires --d")
    if args.command == 'verify-dp' and args.samples is not None and args.samples < 1:
        parser.error("--samples must be positive")

    cli = LDPCLI()
    commands = {
        'privatize': cli.privatize,
        'verify-dp': cli.verify_dp,
        'bound': cli.bound,
        'experiment': cli.experiment,
        'recover': cli.recover,
    }

    # Execute command
    try:
        return commands[args.command](args)

    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user")
        return 130
    except ValueError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"\n❌ Error: {e}")
        import traceback
        traceback.print_exc()
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
