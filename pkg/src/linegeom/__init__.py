"""Line geometry: Plücker coordinates, ray systems, quadratic complexes and the
quartic surfaces they produce."""

__version__ = "0.1.0"
