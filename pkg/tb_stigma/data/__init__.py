"""
Scenario configuration and result output module
"""
