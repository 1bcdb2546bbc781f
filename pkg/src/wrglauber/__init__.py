"""Two-type Widom-Rowlinson Glauber dynamics with mutations.

Simulation, kinetic (mean-field) equations, regime checks and the finite
configuration algebra used to test them.
"""

__version__ = "0.1.0"

from .geometry import Domain, PotentialSet, PotentialSpec, TwoTypeConfiguration  # noqa: E402
from .regime import RuelleWeight  # noqa: E402

__all__ = ["Domain", "PotentialSet", "PotentialSpec", "TwoTypeConfiguration", "RuelleWeight", "__version__"]
