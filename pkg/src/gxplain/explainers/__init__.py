"""Generative explainers minimizing attribution loss plus an information
constraint, with saliency and random controls."""

from .common import ExplainerConfig, ExplanationMask, gumbel_sample
from .maskgen import MaskGenerator, TrainLog, explain_maskgen, train_maskgen
from .vgae import VgaeExplainer, explain_vgae, gaussian_kl, train_vgae
from .rl import (FlowNetwork, PolicyAgent, episode_return, explain_flow,
                 explain_rl_mdp, flow_matching_loss, sample_flow_trajectory,
                 train_flow_dag, train_rl_mdp)
from .counterfactual import explain_counterfactual, runner_up, train_counterfactual
from .model_level import ModelLevelExplanation, model_level_generate
from .baselines import explain_random, explain_saliency

__all__ = [
    "ExplainerConfig", "ExplanationMask", "gumbel_sample",
    "MaskGenerator", "TrainLog", "train_maskgen", "explain_maskgen",
    "VgaeExplainer", "train_vgae", "explain_vgae", "gaussian_kl",
    "PolicyAgent", "FlowNetwork", "train_rl_mdp", "explain_rl_mdp",
    "train_flow_dag", "explain_flow", "flow_matching_loss",
    "sample_flow_trajectory", "episode_return",
    "train_counterfactual", "explain_counterfactual", "runner_up",
    "ModelLevelExplanation", "model_level_generate",
    "explain_saliency", "explain_random",
]
