"""
API utility functions and middleware.
"""
