"""
Quick demo

Walks through the tools locally: theory predictions along λ, the
bias-fixed lower bound, and a one-shot simulation with the optimal
combination of two classifiers.
"""

import sys
from pathlib import Path

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.tools import create_theory_tool, create_simulation_tool
from src.utils.errors import ErmError

theory = create_theory_tool()
simulation = create_simulation_tool()

print("=" * 70)
print("Logistic loss, p=300, n=900, mu=sqrt(2/p)·1, C=I")
print("=" * 70)
for lam in (0.015625, 0.25, 4.0, 1024.0):
    result = theory.execute(action="predict", p=300, n=900, mu="ones:sqrt2", loss="logistic", lam=lam)
    print(f"  lambda={lam:<10g} theta={result['theta']:.4f}  eta={result['eta']:.4f}  "
          f"gamma={result['gamma']:.4f}  error={result['predicted_error']:.4f}")

print("\n" + "=" * 70)
print("Least squares and the bias-fixed lower bound")
print("=" * 70)
ls = theory.execute(action="predict", p=300, n=900, mu="ones:sqrt2", loss="square", lam=0.0)
bound = theory.execute(action="lower_bound", p=300, n=900, mu="ones:sqrt2", omega=0.0)
print(f"  least squares error: {ls['predicted_error']:.4f}")
print(f"  lower bound at omega=0: {bound['error_lower_bound']:.4f}")

print("\n" + "=" * 70)
print("One-shot simulation: logistic + exponential, lambda=0, n/p=8")
print("=" * 70)
try:
    result = simulation.execute(action="combine", p=100, n=800, losses=["logistic", "exponential"],
                                mu="ones:sqrt2", seed=1)
except ErmError as e:
    print(f"  ✗ Simulation failed: {e.message}")
else:
    for entry in result['classifiers']:
        print(f"  {entry['loss']:<12} error={entry['error']:.4f}  "
              f"predicted={entry['stochastic_prediction']:.4f}  loo={entry['loo_error']:.4f}")
    combination = result['combination']
    print(f"  combined     error={combination['error']:.4f}  predicted={combination['predicted_error']:.4f}")
    print(f"  weights: {[round(a, 4) for a in combination['weights']]}")
    print(f"  oracle error: {result['oracle_error']:.4f}")

print("\n✅ Demo completed")
