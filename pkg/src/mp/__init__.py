"""Finite-dimensional mathematical-programming checks."""

from src.mp.core import (
    MPProblem,
    MPReport,
    OracleRefusedError,
    audit_point,
    brute_force_optimum,
    critical_cone_sample,
    find_multipliers,
    second_order_check,
)
from src.mp.instances import MPInstanceKind, build_instance

__all__ = [
    "MPInstanceKind",
    "MPProblem",
    "MPReport",
    "OracleRefusedError",
    "audit_point",
    "brute_force_optimum",
    "build_instance",
    "critical_cone_sample",
    "find_multipliers",
    "second_order_check",
]
