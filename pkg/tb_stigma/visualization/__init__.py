"""
Scenario result visualization package.
"""
