"""
Utility functions for the pruning framework.
"""
