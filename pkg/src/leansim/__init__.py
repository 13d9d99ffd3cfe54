"""State partisan lean regression and Electoral College simulation."""

__version__ = "0.1.0"
