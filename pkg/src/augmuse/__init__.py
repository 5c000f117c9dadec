"""augmuse: functional evaluation of class-conditional music generators.

The framework measures whether generated music carries usable class
information by (a) augmenting a tagging classifier's training data with
generated audio and tracking the change in test performance, and (b)
classifying generated samples with a real-data classifier.
"""

__version__ = "0.1.0"
