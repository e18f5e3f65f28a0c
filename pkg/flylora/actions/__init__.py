"""Experiment steps composed by the workflows."""
