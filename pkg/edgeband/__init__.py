"""
Edgeband - jump curve estimation with confidence bands for noisy images
"""
__version__ = "1.0.0"
