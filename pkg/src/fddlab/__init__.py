"""Simulation lab for limited-feedback multi-user downlink precoding.

Subpackages cover the pilot/observation front end, synthetic channel
generation, the learned feedback models and classical baselines, the
WMMSE-family precoders, and a Monte-Carlo evaluation harness with a CLI.
"""

__version__ = "0.1.0"
