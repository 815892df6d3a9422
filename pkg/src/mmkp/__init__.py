"""Unified cross-media keyphrase prediction.

Multi-modal memory banks (text / vision / attribute) fused by multi-head
co-attention feed a joint keyphrase classifier and a pointer-generator
decoder whose copy mechanism also draws from the classifier's top
predictions. Includes training, beam-search inference, and the stemmed
F1/MAP evaluation protocol.
"""

__version__ = "0.1.0"
