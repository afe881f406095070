"""Moving-object detection for event cameras by k-means over spatiotemporal event samples."""

__version__ = "0.1.0"
