"""Reference interpreter for the C subset.

The hot evaluation loop has two interchangeable backends: a Cython stepper
(``_vmcore``, built at install time) and a pure-Python fallback selected at
import when the extension is unavailable. ``benchmarks/bench_vm.py``
compares them.
"""

from .oracle import (
    Counterexample,
    Env,
    EquivalenceReport,
    available_backends,
    backend_name,
    equivalent,
    make_env,
    run,
    set_backend,
)

__all__ = [
    "Counterexample",
    "Env",
    "EquivalenceReport",
    "available_backends",
    "backend_name",
    "equivalent",
    "make_env",
    "run",
    "set_backend",
]
