"""Reference verdicts written straight from the rule text, one branch per sentence."""

from dynremoval.core import GroundLabel, PointClass
from dynremoval.detector import Reason


def prose_verdict(neighbors, back, rule="reconciled", min_neighbors=5, nonground_ratio=0.30, ground_cutoff=0.70):
    labels = [lbl for _, lbl in neighbors]
    n = len(labels)
    if n < min_neighbors:
        # too few neighbors: near points are dynamic, far points wait
        if back:
            return PointClass.UNDETERMINED, Reason.BACK_NO_NEIGHBORS
        return PointClass.DYNAMIC, Reason.NO_NEIGHBORS
    nonground = labels.count(GroundLabel.NON_GROUND)
    ground = labels.count(GroundLabel.GROUND)
    if rule == "literal":
        # static when the non-ground share is less than 30 %; 30 % itself is dynamic
        if nonground * 100 < nonground_ratio * 100 * n:
            return PointClass.STATIC, Reason.RATIO_LOW
        return PointClass.DYNAMIC, Reason.RATIO_HIGH
    # dynamic when ground neighbors exceed 70 % of the voxel
    if ground * 100 > ground_cutoff * 100 * n:
        return PointClass.DYNAMIC, Reason.RATIO_HIGH
    return PointClass.STATIC, Reason.RATIO_LOW
