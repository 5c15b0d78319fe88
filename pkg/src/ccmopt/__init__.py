"""Synthesis of 2D contact-aided compliant mechanisms by topology optimization.

Negative circular masks evolve over a honeycomb finite-element domain; a
large-deformation frictionless contact solve traces the output path, which a
Fourier-shape-descriptor objective compares against a user-supplied target.
Units are mm / N / MPa throughout.
"""

__version__ = "0.1.0"
