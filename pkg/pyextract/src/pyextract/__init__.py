"""Adapter from torch classifiers to DCTF training-dynamics artifacts."""

from .extract import ExtractConfig, ExtractionError, extract, find_classifier_head

__version__ = "0.1.0"
