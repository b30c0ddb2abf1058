"""Python interface to the kinlub thin-film kinetic solver."""

from ._kinlub import (
    CoefficientTable,
    ConvergenceError,
    Density,
    DivergenceError,
    Error,
    Expansion,
    InvalidArgument,
    InvalidDomain,
    ModelViolation,
    RangeError,
    SlabSetup,
    SolvabilityError,
    __version__,
    build_expansion,
    convergence_study,
    solve_reynolds_1d,
    solve_reynolds_rectangle,
    tabulate,
)

__all__ = [
    "CoefficientTable",
    "ConvergenceError",
    "Density",
    "DivergenceError",
    "Error",
    "Expansion",
    "InvalidArgument",
    "InvalidDomain",
    "ModelViolation",
    "RangeError",
    "SlabSetup",
    "SolvabilityError",
    "__version__",
    "build_expansion",
    "convergence_study",
    "solve_reynolds_1d",
    "solve_reynolds_rectangle",
    "tabulate",
]
