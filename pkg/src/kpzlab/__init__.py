"""Last passage, polymer and edge-process simulation with exact and statistical identity checks."""

from .catalog import CATALOG, run_identity_test
from .stats import EmpiricalSample, TestReport, ks_two_sample, tw_reference
from .uc import Atom, Grid, GridFunction, KernelSample

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "CATALOG",
    "EmpiricalSample",
    "Grid",
    "GridFunction",
    "KernelSample",
    "TestReport",
    "ks_two_sample",
    "run_identity_test",
    "tw_reference",
]
