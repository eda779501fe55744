"""Desk-scale simulator of Airy-beam synthesis, propagation and photon-pair counting."""

from .field import Field, Grid, new_field, read_field, total_power, write_field
from .modes import AiryParams, airy_mode, fiber_mode, fwhm, gaussian_mode
from .propagation import apply_block, apply_circular_aperture, apply_lens, propagate
from .masks import design_for_airy, render, validate_sampling
from .bench import load_bench, parse_bench, run_bench

__version__ = "0.1.0"
