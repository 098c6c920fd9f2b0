"""
TrajForge: trajectory preprocessing, adaptive resampling, masking and
masked-reconstruction pretraining.
"""
__version__ = "0.4.0"
