# Bench package
from .experiment import ExperimentRunner, ExperimentSpec, run_experiment

__all__ = ['ExperimentRunner', 'ExperimentSpec', 'run_experiment']
