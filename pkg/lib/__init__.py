"""
EKG Filter Pruning - Core Library

Structured filter pruning of CNNs: a greedy sub-network search guided by
ensemble knowledge of interim sub-networks, memory-bank distillation for
fine-tuning, loss-landscape analysis and a resumable run harness.
"""

__version__ = "1.0.0"
