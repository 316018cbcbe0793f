"""Experiment orchestration, metrics, output files and the command line."""
