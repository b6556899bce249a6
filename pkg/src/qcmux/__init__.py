"""Monte Carlo toolkit for a fiber shared by an O-band single-photon channel and a C-band clock channel."""

__version__ = "0.1.0"
