"""Python bindings for the casewright CMMN engine."""

from ._core import (
    CasewrightError,
    Instance,
    Runtime,
    apply_transition,
    canonical_model,
    lifecycle_table,
    run_scenario,
    validate,
)

__all__ = [
    "CasewrightError",
    "Instance",
    "Runtime",
    "apply_transition",
    "canonical_model",
    "lifecycle_table",
    "run_scenario",
    "validate",
]
