"""Performance benchmarks and speed tests."""
