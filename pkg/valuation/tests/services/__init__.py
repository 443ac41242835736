"""
Service-level tests for the valuation application.
"""
