"""stmlforge: annotation-guided source-to-source transformation for a C subset."""

from .cparse import parse
from .cprint import print_program

__all__ = ["parse", "print_program"]
__version__ = "0.1.0"
