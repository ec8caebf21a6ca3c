"""Coexistence model for an O-band time-bin QKD link sharing fiber with C-band DWDM traffic."""

__version__ = "0.1.0"
