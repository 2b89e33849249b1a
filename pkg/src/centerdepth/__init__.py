"""Center-point object depth: projection, heatmap decoding, star-CRF refinement,
binned depth metrics and BEV planning on synthetic driving scenes."""

__version__ = "0.1.0"
