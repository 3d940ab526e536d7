"""Validation-free generalization gauges for few-shot classifiers.

The package works on pre-extracted, nonnegative feature vectors (real
backbone exports or synthetic stand-ins) and provides:

* ``feature_store``  -- FSF1/CSV feature files, validation, synthesis
* ``episodes``       -- N-way K-shot Q-query task sampling protocols
* ``simgraph``       -- cosine similarity graphs, diffusion, Laplacian spectra
* ``learners``       -- logistic regression (Adam), N-means, ARI
* ``gauges``         -- the five per-task generalization gauges
* ``confusion``      -- community-detection based class-overlap scores
* ``harness``        -- experiment protocols (correlation studies, ROC, sweeps)
* ``cli``            -- command-line entry point
"""

__version__ = "0.1.0"
