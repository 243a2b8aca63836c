"""Invisible-watermark embedding as a black-box adversarial attack.

Frequency-domain watermark embedders (multilevel Haar wavelet and full
frame DCT), a JSON classifier-oracle protocol with a builtin linear
model, host/watermark selection, and an attack harness with CSV/JSON
reporting.
"""

__version__ = "0.1.0"
