"""Simulation lab for the one-dimensional voter model interface.

Forward Harris-construction engines, coalescing dual walks, exact
finite-interval solvers and a reproducible Monte Carlo harness for probing
when the interface between the all-ones and all-zeros phases stays tight
and when heavy-tailed steps blow it up.
"""

from vmint.kernels import KernelSpec, build_kernel, parse_kernel_spec

__version__ = "0.1.0"

__all__ = ["KernelSpec", "build_kernel", "parse_kernel_spec", "__version__"]
