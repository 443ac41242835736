"""
Caching utilities for valuation services.
"""
