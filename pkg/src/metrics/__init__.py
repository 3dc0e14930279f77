"""
Metrics Module

Frame and flow quality: evaluation crop, PSNR, SSIM, AEPE, and the
per-frame report written by the evaluate command.

Modules:
    - quality: crop_eval_region, psnr, ssim, aepe, composite_flow_to_pixels
    - report: EvalReport with CSV / JSON output, directory evaluation
"""

__all__ = ["quality", "report"]
