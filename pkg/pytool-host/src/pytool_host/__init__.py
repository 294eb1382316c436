"""Reference tool host: loads a plain Python module, introspects its public
functions into tool schemas, and serves them over newline-delimited JSON on
standard streams."""

from .introspect import ImportFailure, introspect_module, load_module
from .serve import serve_stdio

__all__ = ["ImportFailure", "introspect_module", "load_module", "serve_stdio"]
