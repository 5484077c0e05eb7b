"""Experiment harness: CLI, benchmarks and self-check suites."""
