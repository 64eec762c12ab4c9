"""Unit tests for core library components."""
