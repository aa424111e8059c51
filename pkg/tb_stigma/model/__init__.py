"""
Model parameters, state, right-hand sides and fixed-step integration.
"""
