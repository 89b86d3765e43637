"""Quantitative phase imaging of pollen grains from off-axis holograms.

Modules
-------
field     grids, complex fields, phase maps, wrapping
holosim   phantoms, reference waves, sensor model, synthetic populations
fourier   carrier detection and Fourier-filter demodulation
sparse    TV-regularised full-resolution recovery
unwrap    least-squares phase unwrapping
features  segmentation, per-grain features, class statistics
io        on-disk formats
pipeline  batch stages used by the command line
"""

__version__ = "0.1.0"
