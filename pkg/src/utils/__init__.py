"""
Utilities module for the deblurring toolkit

This subpackage provides the helpers shared by the command runners.
"""
