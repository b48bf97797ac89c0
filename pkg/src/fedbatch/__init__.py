"""Latency-optimal batch-size control for synchronous federated learning."""
