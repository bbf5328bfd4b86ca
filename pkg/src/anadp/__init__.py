"""Importance-weighted adaptive-noise DP-SGD, a Rényi accountant and canary exposure audits."""

__version__ = "0.1.0"
