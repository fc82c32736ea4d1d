"""Question, answer and summary generation for robot episode traces."""

__version__ = "0.1.0"
# bumped whenever a file schema changes
FORMAT_VERSION = 1
