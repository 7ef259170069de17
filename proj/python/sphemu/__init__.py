from ._sphemu import (
    Emulator,
    __version__,
    forward_sht,
    inverse_sht,
    make_spd_matrix,
    max_band_limit,
    read_sphf,
    resolution_summary,
    tiled_cholesky,
    wigner_d_half_pi,
    write_sphf,
)

__all__ = [
    "Emulator",
    "__version__",
    "forward_sht",
    "inverse_sht",
    "make_spd_matrix",
    "max_band_limit",
    "read_sphf",
    "resolution_summary",
    "tiled_cholesky",
    "wigner_d_half_pi",
    "write_sphf",
]
