"""ADL 1.0: a YAML-conformant declarative language for multi-agent
customer-service chatbots — parser, validator, runtime, analyzer, and bench."""

from .model import Diagnostic, Program
from .parser import load_program, load_program_file, parse_condition, parse_program, validate_program

__version__ = "1.0.0"

__all__ = [
    "Diagnostic",
    "Program",
    "__version__",
    "load_program",
    "load_program_file",
    "parse_condition",
    "parse_program",
    "validate_program",
]
