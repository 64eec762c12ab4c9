"""Integration tests for full API workflows."""
