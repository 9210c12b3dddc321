"""Elastostatic Neumann–Poincaré spectra and anomalous localized resonance.

Submodules: ``core_types``, ``kernels``, ``discrete_np``,
``analytic_spectra``, ``resonance`` and ``cli``.
"""

__version__ = "0.1.0"
