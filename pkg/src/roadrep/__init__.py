"""Road-network representation learning on line graphs.

Primal road graphs are cleaned, turned into line graphs whose nodes are road
segments, featurized, and fed to two-hop neighborhood encoders trained with
a small numpy autodiff engine.
"""

__version__ = "0.1.0"
