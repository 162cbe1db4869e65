"""qsmlab: noise studies of the quantum sawtooth map.

Submodules: ``qstate`` (state and series types), ``sawtooth`` (noiseless map),
``circuitgen`` (gate-level circuits), ``lindblad`` (continuous decay),
``closedform`` (analytic decay curves), ``krausgate`` (gate-based relaxation),
``knoise`` (kick-strength noise), ``fitkit`` (fits) and ``cli``.
"""

__version__ = "0.1.0"
