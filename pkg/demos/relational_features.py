#!/usr/bin/env python3
"""Poke at the relational pose feature: its layout and its invariances."""

import numpy as np

from poseboot.features import relational_feature
from poseboot.skeleton import JointId, Skeleton
from poseboot.synth import action_template

DIST, ORI, ANG = slice(0, 91), slice(91, 182), slice(182, 1274)

skel = action_template(0)
f = relational_feature(skel)
print(f"feature length: {f.shape[0]} = 91 distances + 91 orientations + 1092 angles")
print(f"distance range: [{f[DIST].min():.1f}, {f[DIST].max():.1f}] px")
print(f"orientation range: [{f[ORI].min():.2f}, {f[ORI].max():.2f}] rad")
print(f"inner-angle range: [{f[ANG].min():.2f}, {f[ANG].max():.2f}] rad")

# translation: nothing moves
shifted = relational_feature(Skeleton(skel.keypoints + (40.0, -15.0)))
print(f"\nmax change under translation: {np.abs(shifted - f).max():.2e}")

# uniform scaling: distances scale, everything else stays put
scaled = relational_feature(Skeleton(skel.keypoints * 2.0))
print(f"distance ratio under 2x scaling: {np.median(scaled[DIST] / f[DIST]):.3f}")
print(f"max angle change under scaling: {np.abs(scaled[ANG] - f[ANG]).max():.2e}")

# rotation: distances and inner angles hold, orientations shift by the angle
theta = 0.5
rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
turned = relational_feature(Skeleton(skel.keypoints @ rot.T))
ori_shift = np.angle(np.exp(1j * (turned[ORI] - f[ORI])))
print(f"rotation by {theta} rad shifts orientations by {np.median(ori_shift):.3f} rad")
print(f"max angle change under rotation: {np.abs(turned[ANG] - f[ANG]).max():.2e}")

# torso normalization makes the distances person-size independent
small = relational_feature(Skeleton(skel.keypoints * 0.5), normalize=True)
large = relational_feature(Skeleton(skel.keypoints * 3.0), normalize=True)
print(f"\nnormalized distance gap across a 6x size change: "
      f"{np.abs(small[DIST] - large[DIST]).max():.2e}")

# two different action templates are far apart in feature space
other = relational_feature(action_template(3))
gap = np.linalg.norm(relational_feature(action_template(0)) - other)
print(f"feature distance between two action templates: {gap:.1f}")
print(f"head sits at {skel.joint(JointId.HEAD).round(1)}, "
      f"neck at {skel.joint(JointId.NECK).round(1)}")
