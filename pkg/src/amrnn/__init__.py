"""Attention-based multi-hop recurrent network for multiple-choice comprehension."""

__version__ = "0.1.0"
