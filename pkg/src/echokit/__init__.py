"""echokit: acoustic echolocation mapping toolkit.

Simulates a robot probing reverberant rooms with a loudspeaker and a
circular microphone array, estimates echo delays and bearings, filters
spurious estimates with a learned classifier, and assembles 2-D reflector
maps.
"""

__version__ = "0.1.0"
