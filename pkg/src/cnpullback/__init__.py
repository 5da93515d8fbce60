"""Common-noise pullback attractors of gradient SDEs: particles, Fokker-Planck, contraction, oracles."""
from .density import Grid, GridDensity
from .noise import BrownianPath, NoiseStreamKey, StreamRole, sample_path
from .potentials import Potential
from .sde import ParticleEnsemble, SdeSpec

__version__ = "0.1.0"

__all__ = ["BrownianPath", "Grid", "GridDensity", "NoiseStreamKey", "ParticleEnsemble", "Potential",
           "SdeSpec", "StreamRole", "sample_path"]
