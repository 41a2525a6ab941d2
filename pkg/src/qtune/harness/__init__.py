"""Workload generation, benchmarking, reports and the ``tune`` CLI."""
