"""Version information for retinakit."""

VERSION = "0.1.0"
