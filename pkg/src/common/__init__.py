"""
Common Module

Shared plumbing for every stage of the engine.

Modules:
    - console: stage-tagged progress reporting for orchestration code
    - errors: exception hierarchy
    - rawio: struct-packed raw array files and PFM
    - keyvalue: flat key-value configuration files
"""

__all__ = ["console", "errors", "rawio", "keyvalue"]
