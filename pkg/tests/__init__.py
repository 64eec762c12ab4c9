"""
EKG Filter Pruning - Test Suite

Unit, integration, accuracy and performance tests for the pruning library,
the run harness and the API.
"""
