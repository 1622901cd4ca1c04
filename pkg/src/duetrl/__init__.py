"""Batched two-agent assistive-robotics RL engine.

Subpackages:
    simcore   minimal articulated-body simulation (chains, capsules, contacts)
    envs      the three assistive tasks as two-agent shared-reward environments
    vecenv    batched stepping with auto-reset
    neural    from-scratch MLPs, exact gradients, Adam, Gaussian policy heads
    algos     IPPO / MAPPO / ISAC / MASAC and their single-learner variants
    zsc       partner populations, zero-shot-coordination training, cross-play
    metrics   IQM, stratified bootstrap CIs, AUC
    bench     steps-per-second throughput measurement
    cli       command-line entry point
"""

__version__ = "0.1.0"
