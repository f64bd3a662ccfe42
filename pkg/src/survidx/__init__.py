"""survidx: moving-object detection, description, and concept/event indexing
for surveillance video."""

__version__ = "0.1.0"
