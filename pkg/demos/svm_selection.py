#!/usr/bin/env python3
"""Train a correct-pose selector and let it pick through noisy candidates.

Positives are jittered copies of a handful of annotations; negatives are
junk poses of the kind background images produce. The margin knob trades
recall for precision.
"""

import numpy as np

from poseboot.features import relational_feature
from poseboot.skeleton import CandidatePose, Skeleton
from poseboot.svm import TrainSet, select, synthesize_positives, train
from poseboot.synth import action_template

rng = np.random.default_rng(42)

annotations = [
    Skeleton(action_template(0).keypoints + rng.normal(0, 2.0, (14, 2)))
    for _ in range(6)
]
positives = []
for skel in annotations:
    positives.append(relational_feature(skel, normalize=True))
    for jittered in synthesize_positives(skel, 10, 0.7, rng):
        positives.append(relational_feature(jittered, normalize=True))
negatives = [
    relational_feature(Skeleton(rng.uniform(10, 150, (14, 2))), normalize=True)
    for _ in range(40)
]
model = train(TrainSet.from_parts(positives, negatives), tol=1e-5)
print(f"trained on {len(positives)} positives / {len(negatives)} negatives, "
      f"{len(model.objective_history)} epochs, "
      f"objective {model.objective_history[-1]:.4f}")

# a fresh "image": one good pose hidden among junk candidates
truth = Skeleton(action_template(0).keypoints + rng.normal(0, 2.0, (14, 2)))
cands = [CandidatePose(skeleton=truth, score=0.8, image_id="img")]
for k in range(4):
    junk = Skeleton(rng.uniform(10, 150, (14, 2)))
    cands.append(CandidatePose(skeleton=junk, score=0.9, image_id="img"))
feats = [relational_feature(c.skeleton, normalize=True) for c in cands]

scored = [float(model.decision(f)) for f in feats]
print("\ndecision values (candidate 0 is the true pose):")
for i, s in enumerate(scored):
    print(f"  candidate {i}: {s:+.3f}")

for margin in (0.0, 0.5, 2.0, 8.0):
    pick = select(model, list(zip(cands, feats)), margin=margin)
    verdict = "abstains" if pick is None else f"picks candidate {cands.index(pick)}"
    print(f"margin {margin:>4}: selector {verdict}")
