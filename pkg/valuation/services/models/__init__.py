"""
Data models package for valuation services.
"""
