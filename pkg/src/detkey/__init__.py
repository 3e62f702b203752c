"""Secret-key generation under the lower-triangular deterministic channel model."""

__version__ = "0.1.0"
