"""esgrid: a desk-scale data grid for gridded climate-style datasets."""

__version__ = "0.1.0"
