"""Mesoscopic traffic simulation with peer-to-peer multi-hop ride matching."""

__version__ = "0.1.0"
