"""State-aware forecasting for multivariate time series with hidden regimes.

Stage one learns, per variable, a multi-head emission network and a PPO
policy that picks one head (a hard state) at every step.  Stage two
refines those choices jointly across variables with a graph-attention
policy.  Submodules:

* ``simgen``: regime-switching simulator and CSV dataset I/O
* ``ndcompute``: reverse-mode autodiff, Adam, checkpoints, gradient checks
* ``emission``: multi-head emission network and reference predictor
* ``policy_rl``: policy/value networks, GAE, clipped PPO
* ``stage1`` / ``stage2``: the two training stages
* ``hmm_baseline``: Gaussian HMM (Baum-Welch, Viterbi) baseline
* ``evalkit``: alignment, metrics, Welch's t-test, sensitivity sweeps
* ``pipeline`` / ``cli``: end-to-end training, evaluation and the command line
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
