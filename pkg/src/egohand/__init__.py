"""Egocentric hand-pose detection on depth images.

Pipeline: synthesize labeled depth data under egocentric pose and
viewpoint priors (synth), extract depth-gradient descriptors (features),
quantize poses into a class hierarchy (pose_tree), train and run
hierarchical rejector cascades (cascade), scan frames sparsely (detect),
and score the results (evaluate). The cli module ties the stages
together.
"""

__version__ = "0.1.0"
