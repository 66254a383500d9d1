"""Reinforcement-learning explainers that grow a subgraph edge by edge.

Two trainers share the episode machinery: a REINFORCE policy whose reward
is the probability gain of each added edge, and a flow network trained so
every state's inflow matches its outflow (or terminal reward), which makes
terminal subgraphs sample proportionally to reward.

States are canonicalized as (start node, sorted edge-index tuple) so inflow
and outflow aggregation is well defined when trajectories merge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..constraints import budget
from ..errors import DomainError
from ..gnn import GnnModel, predict
from ..graphs import Dataset, Graph, edges_connected
from ..optim import AdamState, adam_step
from ..tensor import Tensor
from .common import ExplainerConfig, ExplanationMask, encoder_forward, encoder_init
from .maskgen import TrainLog, _NamedGrads, _grad_accumulate

State = tuple[int, ...]  # sorted edge indices; start node kept alongside


def state_nodes(graph: Graph, state: State, start: int) -> set[int]:
    nodes = {start}
    for i in state:
        u, v = graph.edges[i]
        nodes.add(u)
        nodes.add(v)
    return nodes


def frontier(graph: Graph, state: State, start: int) -> list[int]:
    """Edges adjacent to the current subgraph and not yet chosen."""
    nodes = state_nodes(graph, state, start)
    chosen = set(state)
    out: list[int] = []
    for n in nodes:
        for e in graph.incident[n]:
            if e not in chosen:
                out.append(e)
    return sorted(set(out))


def parents(graph: Graph, state: State, start: int) -> list[tuple[State, int]]:
    """All (predecessor state, action) pairs that lead into ``state``."""
    result: list[tuple[State, int]] = []
    for e in state:
        rest = tuple(i for i in state if i != e)
        if not rest:
            u, v = graph.edges[e]
            if start in (u, v):
                result.append(((), e))
            continue
        rest_edges = [graph.edges[i] for i in rest]
        if not edges_connected(rest_edges):
            continue
        nodes = state_nodes(graph, rest, start)
        if start not in nodes:
            continue
        u, v = graph.edges[e]
        if u in nodes or v in nodes:
            result.append((rest, e))
    return result


def random_start(graph: Graph, rng: np.random.Generator) -> int:
    edge = graph.edges[int(rng.integers(graph.num_edges))]
    return int(edge[int(rng.integers(2))])


def subgraph_probability(model: GnnModel, graph: Graph, state: State, target: int) -> float:
    w = np.zeros(graph.num_edges)
    w[list(state)] = 1.0
    _, probs = predict(model, graph, w)
    return float(probs[target])


# ---------------------------------------------------------------------------
# shared scoring network
# ---------------------------------------------------------------------------

def _net_init(d_n: int, cfg: ExplainerConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    h = cfg.hidden_dim
    params = encoder_init(d_n, h, cfg.encoder_layers, rng)
    params["score.ws"] = T.glorot((h, h), rng)
    params["score.wa"] = T.glorot((h, h), rng)
    params["score.b1"] = T.zeros_param((1, h))
    params["score.w2"] = T.glorot((h, 1), rng)
    params["score.b2"] = T.zeros_param((1, 1))
    return params


def _action_scores(params: dict[str, Tensor], h: Tensor, graph: Graph,
                   state: State, start: int, actions: list[int]) -> Tensor:
    """Raw scores (one per candidate action) for the current state."""
    nodes = sorted(state_nodes(graph, state, start))
    state_emb = T.reshape(T.tmean(T.take_rows(h, np.asarray(nodes)), axis=0), (1, h.shape[1]))
    pairs = graph.pairs[actions]
    act_emb = T.mul(T.add(T.take_rows(h, pairs[:, 0]), T.take_rows(h, pairs[:, 1])), 0.5)
    rows = Tensor(np.ones((len(actions), 1)))
    z = T.add(T.add(T.matmul(act_emb, params["score.wa"]),
                    T.matmul(T.matmul(rows, state_emb), params["score.ws"])),
              T.matmul(rows, params["score.b1"]))
    z = T.relu(z)
    s = T.add(T.matmul(z, params["score.w2"]), T.matmul(rows, params["score.b2"]))
    return T.reshape(s, (len(actions),))


def _log_softmax_vec(scores: Tensor) -> Tensor:
    shift = T.sub(scores, T.tmax(scores))
    return T.sub(shift, T.log(T.tsum(T.exp(shift))))


# ---------------------------------------------------------------------------
# REINFORCE on the step-wise probability gain
# ---------------------------------------------------------------------------

@dataclass
class PolicyAgent:
    params: dict[str, Tensor]
    config: ExplainerConfig

    def action_distribution(self, graph: Graph, state: State, start: int,
                            actions: list[int]) -> np.ndarray:
        h = encoder_forward(self.params, graph, self.config.encoder_layers)
        scores = _action_scores(self.params, h, graph, state, start, actions).data
        z = scores - scores.max()
        e = np.exp(z)
        return e / e.sum()


def _run_episode(agent: PolicyAgent, model: GnnModel, graph: Graph, target: int,
                 start: int, rng: np.random.Generator,
                 greedy: bool = False) -> tuple[list[tuple[State, int]], list[float]]:
    """Sample one trajectory; returns (state, action) steps and step rewards."""
    state: State = ()
    steps: list[tuple[State, int]] = []
    rewards: list[float] = []
    prev = subgraph_probability(model, graph, state, target)
    for _ in range(agent.config.max_steps):
        acts = frontier(graph, state, start)
        if not acts:
            break
        dist = agent.action_distribution(graph, state, start, acts)
        pick = int(np.argmax(dist)) if greedy else int(rng.choice(len(acts), p=dist))
        action = acts[pick]
        steps.append((state, action))
        state = tuple(sorted(state + (action,)))
        cur = subgraph_probability(model, graph, state, target)
        rewards.append(cur - prev)
        prev = cur
    return steps, rewards


def episode_return(agent: PolicyAgent, model: GnnModel, graph: Graph,
                   seed: int = 0, episodes: int = 8) -> float:
    """Mean episode return under the current policy (evaluation only)."""
    rng = np.random.default_rng(seed)
    target, _ = predict(model, graph)
    total = 0.0
    for _ in range(episodes):
        _, rewards = _run_episode(agent, model, graph, target, random_start(graph, rng), rng)
        total += sum(rewards)
    return total / episodes


def train_rl_mdp(
    model: GnnModel,
    dataset: Dataset,
    cfg: ExplainerConfig,
) -> tuple[PolicyAgent, TrainLog]:
    """REINFORCE over episodes that add one frontier edge per step."""
    train_idx = dataset.indices("train")
    if not train_idx:
        raise DomainError("dataset has no train split")
    rng = np.random.default_rng(cfg.seed)
    d_n = dataset.graphs[train_idx[0]].node_features.shape[1]
    agent = PolicyAgent(_net_init(d_n, cfg, rng), cfg)
    state = AdamState()
    targets = {i: predict(model, dataset.graphs[i])[0] for i in train_idx}

    log = TrainLog([], [])
    for _epoch in range(cfg.epochs):
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        loss_sum = 0.0
        for s0 in range(0, len(order), cfg.batch_size):
            batch = order[s0:s0 + cfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in batch:
                g = dataset.graphs[i]
                start = random_start(g, rng)
                steps, rewards = _run_episode(agent, model, g, targets[i], start, rng)
                if not steps:
                    continue
                with T.Tape() as tape:
                    h = encoder_forward(agent.params, g, cfg.encoder_layers)
                    terms = []
                    for (st, action), r in zip(steps, rewards):
                        acts = frontier(g, st, start)
                        logp = _log_softmax_vec(_action_scores(agent.params, h, g, st, start, acts))
                        onehot = np.zeros(len(acts))
                        onehot[acts.index(action)] = 1.0
                        terms.append(T.mul(T.tsum(T.mul(logp, Tensor(onehot))), float(r)))
                    total = terms[0]
                    for t in terms[1:]:
                        total = T.add(total, t)
                    loss = T.neg(T.mul(total, 1.0 / len(steps)))
                grads = T.backward(tape, loss)
                _grad_accumulate(acc, agent.params, grads)
                loss_sum += loss.item()
            if acc:
                adam_step(agent.params, _NamedGrads(acc, agent.params, 1.0 / len(batch)), state, lr=cfg.lr)
        log.attr.append(loss_sum / len(order))
        log.info.append(0.0)
    return agent, log


def _mask_from_selection(graph: Graph, chosen: list[int], target: int, k: int) -> ExplanationMask:
    # Graded weights preserve selection order so top-k extraction recovers it.
    weights = np.zeros(graph.num_edges)
    for rank, e in enumerate(chosen):
        weights[e] = 1.0 - rank / (2.0 * max(len(chosen), 1))
    mask = ExplanationMask(weights, target)
    return mask.with_hard(min(k, len(chosen))) if chosen else mask


def explain_rl_mdp(agent: PolicyAgent, model: GnnModel, graph: Graph, k: int) -> ExplanationMask:
    """Deterministic greedy rollout from the lowest-index node of the best edge."""
    target, _ = predict(model, graph)
    rng = np.random.default_rng(0)
    start = graph.edges[0][0]
    steps, _ = _run_episode(agent, model, graph, target, start, rng, greedy=True)
    chosen = [a for _, a in steps]
    return _mask_from_selection(graph, chosen, target, budget(agent.config.constraint, graph, k))


# ---------------------------------------------------------------------------
# flow matching
# ---------------------------------------------------------------------------

@dataclass
class FlowNetwork:
    params: dict[str, Tensor]
    config: ExplainerConfig

    def flows(self, h: Tensor, graph: Graph, state: State, start: int,
              actions: list[int]) -> Tensor:
        """Non-negative flow per action, via an exponential output head."""
        scores = _action_scores(self.params, h, graph, state, start, actions)
        return T.exp(T.clamp(scores, -20.0, 20.0))

    def flow_values(self, graph: Graph, state: State, start: int, actions: list[int]) -> np.ndarray:
        h = encoder_forward(self.params, graph, self.config.encoder_layers)
        return self.flows(h, graph, state, start, actions).data


def _is_terminal(graph: Graph, state: State, start: int, max_steps: int) -> bool:
    return len(state) >= max_steps or not frontier(graph, state, start)


def flow_matching_loss(
    net: FlowNetwork,
    graph: Graph,
    trajectories: list[tuple[int, list[State]]],
    reward_fn,
) -> Tensor:
    """Squared inflow/outflow (or inflow/reward) residual over visited states.

    ``trajectories`` holds (start node, [s_1, ..., s_K]) with the empty root
    omitted; duplicate states across a batch contribute once per visit, so
    the loss is invariant to trajectory order.
    """
    h = encoder_forward(net.params, graph, net.config.encoder_layers)
    terms: list[Tensor] = []
    for start, states in trajectories:
        for st in states:
            par = parents(graph, st, start)
            inflow: Tensor | None = None
            for p_state, p_action in par:
                f = net.flows(h, graph, p_state, start, [p_action])
                val = T.reshape(f, (1,))
                inflow = val if inflow is None else T.add(inflow, val)
            if inflow is None:
                raise DomainError("state with no parents in flow loss")
            if _is_terminal(graph, st, start, net.config.max_steps):
                resid = T.sub(inflow, float(reward_fn(graph, st)))
            else:
                acts = frontier(graph, st, start)
                outflow = T.reshape(T.tsum(net.flows(h, graph, st, start, acts)), (1,))
                resid = T.sub(inflow, outflow)
            terms.append(T.mul(resid, resid))
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.reshape(total, ())


def sample_flow_trajectory(net: FlowNetwork, graph: Graph, start: int,
                           rng: np.random.Generator, explore: float = 0.0) -> list[State]:
    """Roll out sampling each action proportionally to its flow."""
    state: State = ()
    visited: list[State] = []
    h = encoder_forward(net.params, graph, net.config.encoder_layers)
    for _ in range(net.config.max_steps):
        acts = frontier(graph, state, start)
        if not acts:
            break
        f = net.flows(h, graph, state, start, acts).data
        probs = f / f.sum()
        if explore > 0:
            probs = (1.0 - explore) * probs + explore / len(acts)
            probs = probs / probs.sum()
        action = acts[int(rng.choice(len(acts), p=probs))]
        state = tuple(sorted(state + (action,)))
        visited.append(state)
    return visited


def train_flow_dag(
    model: GnnModel,
    dataset: Dataset,
    cfg: ExplainerConfig,
    reward_fn=None,
    start_fn=None,
    reward_eps: float = 1e-3,
) -> tuple[FlowNetwork, TrainLog]:
    """Fit flows so terminal subgraphs sample proportionally to reward.

    The default reward of a terminal state is the frozen model's probability
    of the factual target plus ``reward_eps`` to keep flows positive.
    """
    train_idx = dataset.indices("train")
    if not train_idx:
        raise DomainError("dataset has no train split")
    rng = np.random.default_rng(cfg.seed)
    d_n = dataset.graphs[train_idx[0]].node_features.shape[1]
    net = FlowNetwork(_net_init(d_n, cfg, rng), cfg)
    state = AdamState()
    targets = {i: predict(model, dataset.graphs[i])[0] for i in train_idx}

    def default_reward(graph: Graph, st: State, idx: int) -> float:
        return subgraph_probability(model, graph, st, targets[idx]) + reward_eps

    log = TrainLog([], [])
    for _epoch in range(cfg.epochs):
        order = [train_idx[i] for i in rng.permutation(len(train_idx))]
        loss_sum = 0.0
        for s0 in range(0, len(order), cfg.batch_size):
            batch = order[s0:s0 + cfg.batch_size]
            acc: dict[str, np.ndarray] = {}
            for i in batch:
                g = dataset.graphs[i]
                start = start_fn(g, rng) if start_fn else random_start(g, rng)
                states = sample_flow_trajectory(net, g, start, rng, explore=0.2)
                if not states:
                    continue
                rfn = (lambda graph, st: reward_fn(graph, st)) if reward_fn else \
                      (lambda graph, st, idx=i: default_reward(graph, st, idx))
                with T.Tape() as tape:
                    loss = flow_matching_loss(net, g, [(start, states)], rfn)
                grads = T.backward(tape, loss)
                _grad_accumulate(acc, net.params, grads)
                loss_sum += loss.item()
            if acc:
                adam_step(net.params, _NamedGrads(acc, net.params, 1.0 / len(batch)), state, lr=cfg.lr)
        log.attr.append(loss_sum / len(order))
        log.info.append(0.0)
    return net, log


def explain_flow(net: FlowNetwork, model: GnnModel, graph: Graph, k: int) -> ExplanationMask:
    """Deterministic rollout taking the highest-flow action each step."""
    target, _ = predict(model, graph)
    start = graph.edges[0][0]
    state: State = ()
    chosen: list[int] = []
    h = encoder_forward(net.params, graph, net.config.encoder_layers)
    for _ in range(net.config.max_steps):
        acts = frontier(graph, state, start)
        if not acts:
            break
        f = net.flows(h, graph, state, start, acts).data
        action = acts[int(np.argmax(f))]
        chosen.append(action)
        state = tuple(sorted(state + (action,)))
    return _mask_from_selection(graph, chosen, target, budget(net.config.constraint, graph, k))
