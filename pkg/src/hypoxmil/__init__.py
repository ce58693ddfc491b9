"""Weakly supervised hypoxia classification of H&E tiles with attention MIL.

Subpackages and modules:

- :mod:`hypoxmil.ndnum` - numpy reverse-mode autodiff
- :mod:`hypoxmil.slideio` - tiling and tile manifests
- :mod:`hypoxmil.sigstrat` - gene-signature weak labels
- :mod:`hypoxmil.milnet` - the MIL network, training and inference
- :mod:`hypoxmil.texfeat` - GLCM texture features
- :mod:`hypoxmil.morpho` - region shape descriptors
- :mod:`hypoxmil.evalstat` - splits, AUC, rank tests
- :mod:`hypoxmil.protocol` - the train/evaluate/compare experiment chains
"""

__version__ = "0.1.0"
