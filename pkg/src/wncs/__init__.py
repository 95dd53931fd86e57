"""Transmission-rate bounds and transmit-power design for multi-link wireless
networked control systems."""

__version__ = "0.1.0"
