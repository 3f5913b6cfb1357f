"""Unbalanced three-wire power flow: network model, five equivalent
formulations, solvers, lifted-space verification and SDP export."""

__version__ = "0.1.0"
