"""Desk-scale image-classification benchmark harness and attribution toolkit.

Subsystems:

- ``imaging``    image decoding, the resize/crop/normalize chain, affine augmentation
- ``dataset``    class-folder corpus scanning, seeded stratified splits, batching
- ``nnet``       a small numpy network with explicit tapes and true gradients
- ``gateway``    one black-box classifier interface over native and remote backends
- ``explain``    LIME, Kernel SHAP (with an exact enumeration oracle) and Grad-CAM
- ``evalbench``  confusion-matrix metrics and the experiment grids
- ``cli``        the ``xplain`` command-line entry point
"""

__version__ = "0.1.0"
