"""Finite-key simulation of hashing-based entanglement key agreement.

Submodules:

* :mod:`tuhqkd.f2core` packed GF(2) vectors and matrices
* :mod:`tuhqkd.hashball` entropy, Hamming balls and the ball decoders
* :mod:`tuhqkd.pauli` dense statevector oracle for Pauli measurements
* :mod:`tuhqkd.protocol` protocol runs, batches and transcripts
* :mod:`tuhqkd.rates` finite-key rate formulas and optimizer
"""

__version__ = "0.1.0"
