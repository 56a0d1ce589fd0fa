"""Python bindings for the ridemarket C++ core."""

from ._core import (
    Instance,
    InvalidInstance,
    ParseError,
    PreconditionViolated,
    UnknownExperiment,
    __version__,
    check_incentives,
    dkw_check,
    example_network,
    experiments,
    load,
    negbin_relative_check,
    negbin_universal_check,
    parse,
    prices,
    resolve_demo,
    run_experiment,
    simulate,
    solve,
    trace_csv,
    validate,
)

__all__ = [
    "Instance",
    "InvalidInstance",
    "ParseError",
    "PreconditionViolated",
    "UnknownExperiment",
    "__version__",
    "check_incentives",
    "dkw_check",
    "example_network",
    "experiments",
    "load",
    "negbin_relative_check",
    "negbin_universal_check",
    "parse",
    "prices",
    "resolve_demo",
    "run_experiment",
    "simulate",
    "solve",
    "trace_csv",
    "validate",
]
