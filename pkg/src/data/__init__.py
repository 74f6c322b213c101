"""
Data module for deblurring

This subpackage provides image I/O, synthetic blur and paired datasets.
"""
