"""Goal-conditioned heatmap trajectory prediction on synthetic intersections."""

__version__ = "0.1.0"
