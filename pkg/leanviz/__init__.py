"""leanviz project package."""
