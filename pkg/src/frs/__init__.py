"""Defense toolkit for I/Q modulation classifiers.

Combines zero-phase low-pass filtering with randomized-smoothing
certification.  Submodules: spectral (FFT and energy metrics), filters
(Butterworth frequency response), model (small CNN with hand-written
gradients), attacks (FGSM/PGD), smoothing (certified radii), dataset
(synthetic I/Q data and the FRSD container), harness (experiments).
"""

__version__ = "0.1.0"
