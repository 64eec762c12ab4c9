"""
API routers for different endpoints.
"""
