"""Synthetic multi-modal point cloud segmentation pipeline."""

__version__ = "0.1.0"
