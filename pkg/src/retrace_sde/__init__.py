"""Temporal order recovery for linear SDE ensembles."""
