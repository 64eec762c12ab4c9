"""
API Schemas
"""

from api.schemas.preset import PresetSchema

__all__ = ["PresetSchema"]
