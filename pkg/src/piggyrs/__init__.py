"""Reed-Solomon and Piggybacked-RS storage codes with repair-traffic simulation."""

__version__ = "0.1.0"
