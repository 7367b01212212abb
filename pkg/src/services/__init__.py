"""
Services package - numerical core: mixture model, losses, ERM solvers,
empirical observables, deterministic theory and classifier combination.
"""
