"""tunekit: Auto-Tune simulation and detection toolkit.

Synthesis side: PYIN pitch tracking, nearest-MIDI quantization and
TD-PSOLA resynthesis.  Detection side: log-mel features, a compact CNN
embedder trained with semi-hard triplet loss, a small binary classifier,
and song-level evaluation with a robustness harness.
"""

__version__ = "0.1.0"
