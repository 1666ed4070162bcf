import hypothesis
import numpy as np

# Oracle-heavy property tests can be slow on shared CI boxes; the default
# deadline produces flaky failures there without catching anything real.
hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=60, derandomize=True
)
hypothesis.settings.load_profile("default")

np.seterr(all="warn")
