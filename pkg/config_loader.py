"""Run configuration loader for LDP rating experiments."""

import math
import yaml
from pathlib import Path
from typing import Dict, List, Optional, Any
from dataclasses import dataclass, field

import config
from scripts.completion import SolverConfig
from scripts.mechanisms import MECHANISMS, RANDOMIZED_RESPONSE
from scripts.utility import GroundTruthSpec


@dataclass
class ExperimentConfig:
    """Privacy and tolerance parameters."""
    mechanism: str = "mlaplace"
    epsilon: float = 1.0
    gamma: float = 0.1
    d: Optional[int] = None
    trials: int = 200
    seed: int = config.DEFAULT_SEED
    recover: bool = True


@dataclass
class GroundTruthConfig:
    """Synthetic rating matrix shape and noise."""
    m: int = 50
    n: int = 50
    r: int = 2
    p_obs: float = 0.5
    rho0: float = 0.05


@dataclass
class SolverSettings:
    """Completion solver settings."""
    max_iterations: int = config.DEFAULT_MAX_ITERATIONS
    step_tolerance: float = config.DEFAULT_STEP_TOLERANCE
    constraint_tolerance: float = config.DEFAULT_CONSTRAINT_TOLERANCE
    lambda_bisection_steps: int = config.DEFAULT_BISECTION_STEPS
    rank_cap: int = config.DEFAULT_RANK_CAP


@dataclass
class OutputConfig:
    """Where run artifacts go."""
    results: str = str(config.RESULTS_DIR / "results.csv")
    report: str = str(config.RESULTS_DIR / "report.csv")


EXPERIMENT_KEYS = {"mechanism", "epsilon", "gamma", "d", "trials", "seed", "recover"}
GROUND_TRUTH_KEYS = {"m", "n", "r", "p_obs", "rho0"}


@dataclass
class RunConfig:
    """Complete run configuration."""
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    ground_truth: GroundTruthConfig = field(default_factory=GroundTruthConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: OutputConfig = field(default_factory=OutputConfig)

    @classmethod
    def load(cls, config_path: Optional[Path] = None) -> 'RunConfig':
        """Load configuration from YAML file.

        Args:
            config_path: Path to a run YAML. If None, looks for run.yaml next to this file
                and falls back to defaults when it is absent

        Returns:
            RunConfig instance; missing keys keep their defaults

        Raises:
            ValueError: If an explicit config_path does not exist or is malformed
        """
        explicit = config_path is not None
        if config_path is None:
            config_path = Path(__file__).parent / "run.yaml"
        config_path = Path(config_path)

        if not config_path.exists():
            if explicit:
                raise ValueError(f"Configuration file not found: {config_path}")
            print("⚠️  No run configuration found. Using defaults.")
            print("💡 Copy config.template.yaml to run.yaml to customize.")
            return cls()

        with open(config_path, 'r') as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ValueError(f"{config_path}: not valid YAML: {e}")
        if not isinstance(data, dict):
            raise ValueError(f"{config_path}: expected a mapping of sections")

        # Flat files carry experiment/ground-truth keys at the top level
        experiment_data = {k: v for k, v in data.items() if k in EXPERIMENT_KEYS}
        experiment_data.update(data.get('experiment') or {})
        ground_truth_data = {k: v for k, v in data.items() if k in GROUND_TRUTH_KEYS}
        ground_truth_data.update(data.get('ground_truth') or {})

        return cls(
            experiment=cls._parse_experiment(experiment_data),
            ground_truth=cls._parse_ground_truth(ground_truth_data),
            solver=cls._parse_solver(data.get('solver') or {}),
            output=cls._parse_output(data.get('output') or {}),
        )

    @staticmethod
    def _parse_experiment(data: Dict[str, Any]) -> ExperimentConfig:
        """Parse experiment configuration."""
        defaults = ExperimentConfig()
        return ExperimentConfig(
            mechanism=data.get('mechanism', defaults.mechanism),
            epsilon=data.get('epsilon', defaults.epsilon),
            gamma=data.get('gamma', defaults.gamma),
            d=data.get('d', defaults.d),
            trials=data.get('trials', defaults.trials),
            seed=data.get('seed', defaults.seed),
            recover=data.get('recover', defaults.recover),
        )

    @staticmethod
    def _parse_ground_truth(data: Dict[str, Any]) -> GroundTruthConfig:
        """Parse ground truth configuration."""
        defaults = GroundTruthConfig()
        return GroundTruthConfig(
            m=data.get('m', defaults.m),
            n=data.get('n', defaults.n),
            r=data.get('r', defaults.r),
            p_obs=data.get('p_obs', defaults.p_obs),
            rho0=data.get('rho0', defaults.rho0),
        )

    @staticmethod
    def _parse_solver(data: Dict[str, Any]) -> SolverSettings:
        """Parse solver configuration."""
        defaults = SolverSettings()
        return SolverSettings(
            max_iterations=data.get('max_iterations', defaults.max_iterations),
            step_tolerance=data.get('step_tolerance', defaults.step_tolerance),
            constraint_tolerance=data.get('constraint_tolerance', defaults.constraint_tolerance),
            lambda_bisection_steps=data.get('lambda_bisection_steps', defaults.lambda_bisection_steps),
            rank_cap=data.get('rank_cap', defaults.rank_cap),
        )

    @staticmethod
    def _parse_output(data: Dict[str, Any]) -> OutputConfig:
        """Parse output configuration."""
        defaults = OutputConfig()
        return OutputConfig(
            results=data.get('results', defaults.results),
            report=data.get('report', defaults.report),
        )

    def validate(self) -> List[str]:
        """Validate configuration and return list of errors."""
        errors = []
        exp = self.experiment
        truth = self.ground_truth

        if exp.mechanism not in MECHANISMS:
            errors.append(f"Invalid mechanism: {exp.mechanism}. Valid: {list(MECHANISMS)}")
        if exp.mechanism == RANDOMIZED_RESPONSE and (not _is_int(exp.d) or exp.d < 1):
            errors.append("rr requires an integer d >= 1")
        if not _is_number(exp.epsilon) or not math.isfinite(exp.epsilon) or exp.epsilon <= 0:
            errors.append(f"epsilon must be finite and > 0, got {exp.epsilon!r}")
        if not _is_number(exp.gamma) or not 0 < exp.gamma < 1:
            errors.append(f"gamma must lie in (0, 1), got {exp.gamma!r}")
        if not _is_int(exp.trials) or exp.trials < 1:
            errors.append(f"trials must be >= 1, got {exp.trials!r}")
        if not _is_int(exp.seed) or exp.seed < 0:
            errors.append(f"seed must be a non-negative integer, got {exp.seed!r}")

        for name in ("m", "n", "r"):
            value = getattr(truth, name)
            if not _is_int(value) or value < 1:
                errors.append(f"{name} must be a positive integer, got {value!r}")
        if _is_int(truth.m) and _is_int(truth.n) and _is_int(truth.r) and truth.r >= min(truth.m, truth.n):
            errors.append(f"r={truth.r} must be below min(m, n)={min(truth.m, truth.n)}")
        if not _is_number(truth.p_obs) or not 0 < truth.p_obs <= 1:
            errors.append(f"p_obs must lie in (0, 1], got {truth.p_obs!r}")
        if not _is_number(truth.rho0) or truth.rho0 < 0:
            errors.append(f"rho0 must be >= 0, got {truth.rho0!r}")

        for name in ("max_iterations", "lambda_bisection_steps", "rank_cap"):
            value = getattr(self.solver, name)
            if not _is_int(value) or value < 1:
                errors.append(f"solver.{name} must be a positive integer, got {value!r}")
        for name in ("step_tolerance", "constraint_tolerance"):
            value = getattr(self.solver, name)
            if not _is_number(value) or not 0 < value < 1:
                errors.append(f"solver.{name} must lie in (0, 1), got {value!r}")

        return errors

    def ground_truth_spec(self) -> GroundTruthSpec:
        """GroundTruthSpec of this run; d only for randomized response."""
        truth = self.ground_truth
        d = self.experiment.d if self.experiment.mechanism == RANDOMIZED_RESPONSE else None
        return GroundTruthSpec(m=truth.m, n=truth.n, r=truth.r, p_obs=truth.p_obs, rho0=truth.rho0, d=d)

    def solver_config(self) -> SolverConfig:
        """SolverConfig of this run."""
        s = self.solver
        return SolverConfig(
            max_iterations=s.max_iterations,
            step_tolerance=s.step_tolerance,
            constraint_tolerance=s.constraint_tolerance,
            lambda_bisection_steps=s.lambda_bisection_steps,
            rank_cap=s.rank_cap,
        )


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def load_config(config_path: Optional[Path] = None) -> RunConfig:
    """Convenience function to load configuration.

    Args:
        config_path: Path to the run YAML

    Returns:
        RunConfig instance
    """
    run_config = RunConfig.load(config_path)

    # Validate configuration
    errors = run_config.validate()
    if errors:
        print("❌ Configuration errors:")
        for error in errors:
            print(f"   - {error}")
        raise ValueError("Invalid configuration")

    return run_config


if __name__ == "__main__":
    # Test configuration loading
    print("Testing configuration loader...")

    run_config = load_config(Path(__file__).parent / "config.template.yaml")
    print(f"\n✓ Configuration loaded:")
    print(f"  - Mechanism: {run_config.experiment.mechanism} (eps={run_config.experiment.epsilon})")
    print(f"  - Matrix: {run_config.ground_truth.m}x{run_config.ground_truth.n}, rank {run_config.ground_truth.r}")
    print(f"  - Trials: {run_config.experiment.trials}")
    print(f"  - Results: {run_config.output.results}")
