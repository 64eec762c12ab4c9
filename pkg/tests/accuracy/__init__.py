"""
Accuracy tests validating scores, search and landscape estimates against independent oracles.
"""
