"""Privacy-preserving ad-reward protocol on a simulated PoA sidechain."""

__version__ = "0.1.0"
