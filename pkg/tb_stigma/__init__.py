"""
Tuberculosis transmission model with exogenous reinfection and stigmatization.
"""
