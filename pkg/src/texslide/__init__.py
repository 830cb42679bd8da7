"""texslide: per-camera texture-coordinate sliding for wrinkle recovery.

An over-smoothed "inferred" cloth mesh is made to visually match a
wrinkled ground-truth mesh per camera by sliding its texture coordinates;
the sliding fields are generated by ray projection, extrapolated across
occlusions, learned by a small decoder network, interpolated across
views, and triangulated back into 3D geometry.
"""

__version__ = "0.1.0"
