"""Design and analysis models for nondegenerate SPDC photon-pair sources.

Modules: ``dispersion`` (crystal refractive indices), ``phasematch``
(triplets, tuning curves, poling periods), ``spectrum`` (linewidths),
``entanglement`` (fringes, visibility, CHSH, fidelity) and ``fiberlink``
(dispersion and link budgets). ``cli`` exposes them as subcommands.
"""

__version__ = "0.1.0"
