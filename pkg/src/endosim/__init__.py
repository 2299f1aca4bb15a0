"""Virtual imaging trial toolkit for expandable fiber-probe microendoscopy."""

from .image import Image, load_pgm, save_pgm

__all__ = ["Image", "load_pgm", "save_pgm"]
__version__ = "0.1.0"
