"""Pancreas-CT grounding toolkit.

From raw CT volumes and label masks to preprocessed slice images, an
annotation catalog, cascaded instruction datasets, a model-agnostic serving
gateway, and an evaluation harness for grounded detection and yes/no
classification.
"""

__version__ = "0.1.0"
