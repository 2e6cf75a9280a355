"""Fuzzy-commitment biometric template protection and its attack chain.

The package has two halves.  The defender half builds a face-verification
system: a synthetic feature extractor, random-projection binarization, and a
fuzzy commitment over an error-correcting code (BCH codeword-offset or
PinSketch syndromes).  The attacker half unlocks protected accounts by
guessing with unrelated templates, recovers the enrolled binary template
exactly, inverts it back to a feature vector with a pair of jointly trained
networks, and maps that vector to a reconstructed identity which is then
replayed against same/different systems.
"""

__version__ = "0.1.0"
