"""Quaternion knowledge-graph embeddings with relation-aware rotations."""
