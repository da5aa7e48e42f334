__version__ = "0.1"

from .core import *
