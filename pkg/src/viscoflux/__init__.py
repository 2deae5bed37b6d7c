"""viscoflux: a desk-scale laboratory for 2-D barotropic viscous flow.

Subpackages cover the constitutive laws (material), a vacuum-capable radial
finite-difference solver (radial), a spectral toolkit on the flat torus
(planar), Lagrangean path integration (flowmap), the diagnostics suite
(diagnostics), finite-time concentration functionals (blowup), and the
config-driven runner (runner, cli).
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, DomainError, IntegrityError, UnsupportedCombination
from .material import MaterialLaw

__all__ = [
    "ConfigurationError",
    "DomainError",
    "IntegrityError",
    "UnsupportedCombination",
    "MaterialLaw",
    "__version__",
]
