"""Minimal surfaces: Weierstrass generation, Plateau solving and numerical verification.

Modules:
    expr         complex expression parsing, evaluation and differentiation
    weierstrass  immersions from Weierstrass data, curvature, periods, tessellation
    mesh         triangle meshes and discrete differential geometry
    plateau      Douglas-Rado energy minimization for disk-type Plateau problems
    verify       checks of the classical identities and inequalities on meshes
    cli          the ``minsurf`` command
"""

from . import expr, mesh, plateau, verify, weierstrass

__version__ = "0.1.0"

__all__ = ["expr", "mesh", "plateau", "verify", "weierstrass", "__version__"]
