"""Few-photon transport through atom chains coupled to a one-dimensional waveguide."""
from .hilbert import (
    EIT,
    TWO_LEVEL,
    BasisTooLargeError,
    FewExcitationBasis,
    Geometry,
    LevelScheme,
    enumerate_basis,
    expectation_value,
    number_operator,
    transition_operator,
)

__version__ = "0.1.0"
