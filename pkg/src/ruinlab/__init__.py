"""Numerics and simulation for the joint ruin of two correlated Brownian surplus processes under a cumulative sojourn requirement."""

__version__ = "0.1.0"
