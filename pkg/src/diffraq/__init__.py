"""diffraq: wave-optics ground truth and neural compression for diffractive
surface reflectance.

The library generates spectrally integrated diffraction reflectance datasets
from nanostructure height-fields, compresses them into small funneled MLPs
with sinusoidal input encodings, and renders/validates BRDF slices against
the ground truth.
"""

__version__ = "0.1.0"

FORMAT_VERSIONS = {
    "heightfield": "DFRQHF1",
    "dataset": "DFRQDS1",
    "model": "DFRQNN1",
    "slice": "DFRQIM1",
}
