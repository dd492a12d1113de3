"""Design and analysis toolkit for fibre photon-pair sources."""
