from .evolve import evolve
from .reconstruct import reconstruct
from .quantize import quantize
from .verify import verify

__all__ = ["evolve", "reconstruct", "quantize", "verify"]
