"""Keyed compressed sensing of images with joint sigma-delta quantization and diffusion."""

from .errors import (
    CollectionError,
    ConditioningError,
    FormatError,
    NoUsableMeasurementsError,
    QdcsError,
    SolverError,
)
from .keyrng import SecretKey, derive_streams
from .srm import RandomizerKind, SensingConfig, SensingOperator, TransformKind
from .formats import CipherPackage, read_package, read_pgm, write_package, write_pgm
from .pipeline import encode_image, measure
from .recon import BasisKind, SolverConfig, decode, psnr, reconstruct_image

__version__ = "0.1.0"
