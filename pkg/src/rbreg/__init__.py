"""Representation-based regression for object distance estimation.

Core package: feature datasets and splits, quantized representative
dictionaries with regularized least-squares proxies, classical sparse and
collaborative representation baselines, compact convolutional regressors
with joint proxy learning, evaluation metrics, and an experiment harness
exposed through a CLI and an HTTP service.
"""

__version__ = "0.1.0"
