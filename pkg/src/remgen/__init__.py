"""remgen: LTE RSRP prediction and radio environmental maps from geodata.

An analytical urban-macro link budget provides the baseline; a learned
convolutional correction trained on direct-path features and rendered
receiver-environment images refines it. REMs and multi-MNO best-server
maps are generated from either predictor.
"""

__version__ = "0.1.0"

from . import channels, features, geo, imaging, raypath, rem  # noqa: F401
