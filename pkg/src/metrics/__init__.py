"""
Image quality metrics.
"""

from src.metrics.quality import denormalize, psnr, ssim

__all__ = ["denormalize", "psnr", "ssim"]
