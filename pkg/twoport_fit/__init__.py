"""
Two-port linear analog circuit design from a target power spectrum.
"""

__version__ = '1.0.0'
