"""Tappability modeling toolkit.

Trains a small convolutional model of human-perceived tappability for mobile
UI elements, analyzes the signifiers behind those perceptions, measures
rater consistency, and serves predictions over HTTP for interactive
diagnosis of tappability mismatches.
"""

__version__ = "0.1.0"
