"""Layered strongly nonlocal UPBs and entanglement-assisted LOCC discrimination."""

__version__ = "0.1.0"
