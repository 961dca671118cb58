"""Simulation of birth processes and urns."""
