"""Workflow orchestration for experiment runs."""
