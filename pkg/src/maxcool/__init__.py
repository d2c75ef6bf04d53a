"""Numerical laboratory for the spatially homogeneous inelastic
Maxwell-Boltzmann model: collision kinematics, a Fourier-space spectral
solver for the isotropic characteristic function, real-space reconstruction
with entropy and Fisher-information functionals, a DSMC particle solver, and
a verification harness tying the routes together."""

__version__ = "0.1.0"

from . import kinematics
from . import spectral
from . import realspace
from . import dsmc
from . import harness
from . import cli

__all__ = ["kinematics", "spectral", "realspace", "dsmc", "harness", "cli",
           "__version__"]
