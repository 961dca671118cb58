"""Explosive birth processes and non-linear Polya urns."""
