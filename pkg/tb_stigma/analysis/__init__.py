"""
Equilibria, optimal control and scenario runners.
"""
