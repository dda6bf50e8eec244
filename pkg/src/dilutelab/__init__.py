"""Low-density random Schroedinger operators: spectra, IDS, Green functions."""
