"""Frame-level bit prediction from block-DCT complexity features, and a
simulated two-pass rate controller driven by those predictions."""

__version__ = "0.1.0"
