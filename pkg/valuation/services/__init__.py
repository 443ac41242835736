"""
Services package for the valuation application.
Contains dataset ingestion, entropy and mutual-information estimation, and the
valuation, selection, monitoring and benchmark services built on top of them.
"""
