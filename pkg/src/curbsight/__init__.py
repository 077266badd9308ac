"""Roadside object geolocation and measurement from dashcam sightings."""

from .errors import InputError

__version__ = "0.1.0"

__all__ = ["InputError", "__version__"]
