"""Toy workloads that speak the progress-file protocol."""
