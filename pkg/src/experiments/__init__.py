"""Experiment configuration, Monte Carlo runner and figure reproduction."""
