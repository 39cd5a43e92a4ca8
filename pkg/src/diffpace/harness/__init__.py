"""Experiment harness: configuration, orchestration, persistence, reporting."""
