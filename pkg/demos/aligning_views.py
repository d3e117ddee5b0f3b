"""
Putting views on a common clock
===============================

"""

# Audio comes twice as fast as video here; both end up on the video frames.
import numpy as np
from affectfusion.align import FeatureSequence, align_views, interp_linear, pool_align

t_audio = np.arange(16) * 0.125
audio = FeatureSequence(np.c_[np.sin(t_audio), t_audio], 0.125, modality_tag="audio")
video = FeatureSequence(np.ones((8, 3)), 0.25, modality_tag="visual")

pooled = pool_align(audio, 8)
print("pooled audio\n", pooled.features.round(3))

# Interpolation works in either direction and carries invalid frames along.
audio.valid[5] = False
stretched = interp_linear(audio, 24)
print("invalid after stretch:", np.flatnonzero(~stretched.valid))

aligned, valid = align_views([video, audio], anchor=0, method="pool")
print("lengths", [v.T for v in aligned], "joint mask", valid.astype(int))
