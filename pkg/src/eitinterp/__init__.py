"""Difference EIT on the unit disk: interpolating voltages on current-driven
electrodes and locating inclusions with the monotonicity indicator."""
from .forward import ConductivityField, MeasurementMatrix, difference_measurement, measure
from .geometry import ElectrodeLayout, Mesh, PixelPartition, build_disk_mesh, build_pixel_partition, support_bound
from .interpolate import geometric_interpolate, linear_interpolate, mask_current_driven
from .reconstruct import add_noise, beta_indicator
from .sensitivity import assemble_sensitivity, bound_matrix

__all__ = [
    "ConductivityField",
    "ElectrodeLayout",
    "MeasurementMatrix",
    "Mesh",
    "PixelPartition",
    "add_noise",
    "assemble_sensitivity",
    "beta_indicator",
    "bound_matrix",
    "build_disk_mesh",
    "build_pixel_partition",
    "difference_measurement",
    "geometric_interpolate",
    "linear_interpolate",
    "mask_current_driven",
    "measure",
    "support_bound",
]
