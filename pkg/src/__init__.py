"""
Multi-patch deblurring package

This package provides a small differentiable tensor core, the multi-patch
hierarchical deblurring networks with their stacked variants and a
multi-scale baseline, synthetic blur data, training, metrics and the
command runners.
"""

__version__ = "1.0.0"
