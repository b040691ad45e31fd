"""Command-line front end."""
from .main import build_parser, main, read_estimate_csv  # noqa: F401
