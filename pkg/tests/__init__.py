"""
Test package for retinakit.
"""
