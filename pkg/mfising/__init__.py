# mfising - mean-field Ising fluctuation toolkit
__version__ = "1.0.0"
