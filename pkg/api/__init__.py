"""
EKG Pruning Service - API Layer

FastAPI application for submitting and monitoring pruning pipeline runs.
"""

__version__ = "1.0.0"
