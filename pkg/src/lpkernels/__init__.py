"""Littlewood-Paley projection kernels of H = -Delta + V on R^3.

The kernel of phi(sqrt(H)/N) is computed by the Born series (small Kato
norm), by the resummed low- and medium-frequency series (large Kato norm),
and independently by a partial-wave spectral oracle for radial V.
"""
from .errors import (ConfigError, LPKernelError, NearResonanceError, NotKatoClassError,
                     RegimeError)
from .multiplier import make_bump
from .potential import kato_norm, make_potential

__all__ = ["ConfigError", "LPKernelError", "NearResonanceError", "NotKatoClassError",
           "RegimeError", "kato_norm", "make_bump", "make_potential"]
__version__ = "0.1.0"
