"""harlab: transfer learning for wearable activity recognition.

User clustering by activity-pattern distance, per-cluster CNN training,
CCA-based representational distance between trained networks, and
layer-frozen fine-tuning for new user clusters.
"""

__version__ = "0.1.0"
