"""Message-passing policy network mapping scene graphs to vehicle controls.

Graph layout: nodes are vehicles followed by obstacles; every vehicle has an
incoming edge from every other node, obstacles have none.  Node features are
8-vectors ``[x, y, theta, v, x_tgt, y_tgt, theta_tgt, flag]`` where ``flag``
is 0 for vehicles and the radius for obstacles.

Forward pass (all weights shared across nodes):

* encoder: ``h0 = tanh(W_in @ enc(z) + b_in)`` where ``enc`` is a fixed
  featurisation (recentred, scaled, angles as cos/sin, goal in body frame);
* per layer: messages ``m_ij = tanh(W2 tanh(W1 [h_i, h_j, r_ij] + b1) + b2)``
  with ``r_ij`` the source pose in the destination's body frame, mean
  aggregation, and a residual update ``h_i += tanh(Wu [h_i, agg_i] + bu)`` on
  vehicle nodes only (obstacles are static sources);
* head: ``[pedal, steer] = [pedal_max, phi_max] * tanh(Wo h_i + bo)``.

Gradients are hand-derived reverse mode.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .costs import Scenario
from .errors import DimensionError, NonFiniteError, TrainingDivergedError
from .kinematics import KinematicParams, step

N_NODE_FEAT = 8
N_ENC = 15
N_REL = 7
POS_SCALE = 10.0
VEL_SCALE = 2.0


@dataclass
class Snapshot:
    """Scene at one instant: current vehicle states, targets and obstacles."""

    states: np.ndarray  # (N, 4)
    targets: np.ndarray  # (N, 3)
    obstacles: np.ndarray  # (M, 3)

    @classmethod
    def of(cls, scenario: Scenario, states=None):
        return cls(np.asarray(scenario.starts if states is None else states, dtype=float),
                   scenario.targets, scenario.obstacles)


@dataclass
class SceneGraph:
    features: np.ndarray  # (V + O, 8)
    is_vehicle: np.ndarray  # (V + O,) bool
    src: np.ndarray  # (E,) int, sorted by dst
    dst: np.ndarray  # (E,) int
    n_vehicles: int
    n_obstacles: int

    @property
    def n_nodes(self):
        return self.n_vehicles + self.n_obstacles

    def in_degree(self):
        return np.bincount(self.dst, minlength=self.n_nodes)


@dataclass
class LabeledSample:
    snapshot: Snapshot
    labels: np.ndarray  # (N, 2) [pedal, steer]
    scenario_id: int = 0
    timestep: int = 0


def node_features(snapshot: Snapshot):
    st, tg, obs = snapshot.states, snapshot.targets, snapshot.obstacles
    n, m = st.shape[0], obs.shape[0]
    z = np.zeros((n + m, N_NODE_FEAT))
    z[:n, :4] = st
    z[:n, 4:7] = tg
    z[n:, 0:2] = obs[:, :2]
    z[n:, 4:6] = obs[:, :2]
    z[n:, 7] = obs[:, 2]
    return z


def build_graph(snapshot, states=None) -> SceneGraph:
    """Build the scene graph; accepts a :class:`Snapshot` or ``(scenario, states)``."""
    if isinstance(snapshot, Scenario):
        snapshot = Snapshot.of(snapshot, states)
    n, m = snapshot.states.shape[0], snapshot.obstacles.shape[0]
    if snapshot.targets.shape != (n, 3):
        raise DimensionError("targets must be (N, 3)")
    total = n + m
    dst = np.repeat(np.arange(n), total - 1)
    src = np.array([j for i in range(n) for j in range(total) if j != i], dtype=int)
    is_vehicle = np.zeros(total, dtype=bool)
    is_vehicle[:n] = True
    return SceneGraph(node_features(snapshot), is_vehicle, src.reshape(-1), dst.astype(int), n, m)


def encode_nodes(z, recenter=True):
    """Fixed featurisation of raw node features, ``(n, 8) -> (n, 15)``."""
    z = np.asarray(z, dtype=float)
    pos = z[:, 0:2]
    tgt = z[:, 4:6]
    if recenter and len(z):
        c = pos.mean(axis=0)
        pos = pos - c
        tgt = tgt - c
    th, tth = z[:, 2], z[:, 6]
    d = z[:, 4:6] - z[:, 0:2]
    cs, sn = np.cos(th), np.sin(th)
    e = np.empty((len(z), N_ENC))
    e[:, 0:2] = pos / POS_SCALE
    e[:, 2] = cs
    e[:, 3] = sn
    e[:, 4] = z[:, 3] / VEL_SCALE
    e[:, 5:7] = tgt / POS_SCALE
    e[:, 7] = np.cos(tth)
    e[:, 8] = np.sin(tth)
    e[:, 9] = z[:, 7]
    e[:, 10] = (cs * d[:, 0] + sn * d[:, 1]) / POS_SCALE
    e[:, 11] = (-sn * d[:, 0] + cs * d[:, 1]) / POS_SCALE
    e[:, 12] = np.hypot(d[:, 0], d[:, 1]) / POS_SCALE
    e[:, 13] = np.cos(tth - th)
    e[:, 14] = np.sin(tth - th)
    return e


def encode_edges(z, src, dst):
    """Source pose in the destination's body frame, ``(E, 7)``."""
    zi, zj = z[dst], z[src]
    dx, dy = zj[:, 0] - zi[:, 0], zj[:, 1] - zi[:, 1]
    cs, sn = np.cos(zi[:, 2]), np.sin(zi[:, 2])
    r = np.empty((len(src), N_REL))
    r[:, 0] = (cs * dx + sn * dy) / POS_SCALE
    r[:, 1] = (-sn * dx + cs * dy) / POS_SCALE
    r[:, 2] = np.hypot(dx, dy) / POS_SCALE
    r[:, 3] = np.cos(zj[:, 2] - zi[:, 2])
    r[:, 4] = np.sin(zj[:, 2] - zi[:, 2])
    r[:, 5] = zj[:, 3] / VEL_SCALE
    r[:, 6] = zj[:, 7]
    return r


@dataclass
class GraphBatch:
    """Disjoint union of encoded graphs, ready for the network."""

    enc: np.ndarray
    rel: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    is_vehicle: np.ndarray
    vehicle_index: np.ndarray  # node ids of vehicles, in graph order
    n_nodes: int
    graph_sizes: list = field(default_factory=list)  # vehicles per graph

    @property
    def n_vehicles(self):
        return len(self.vehicle_index)


@dataclass
class EncodedGraph:
    enc: np.ndarray
    rel: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    is_vehicle: np.ndarray


def encode_graph(graph: SceneGraph, recenter=True) -> EncodedGraph:
    return EncodedGraph(encode_nodes(graph.features, recenter), encode_edges(graph.features, graph.src, graph.dst),
                        graph.src, graph.dst, graph.is_vehicle)


def collate(encoded) -> GraphBatch:
    encs, rels, srcs, dsts, vehs, vidx, sizes = [], [], [], [], [], [], []
    off = 0
    for g in encoded:
        n = len(g.enc)
        encs.append(g.enc)
        rels.append(g.rel)
        srcs.append(g.src + off)
        dsts.append(g.dst + off)
        vehs.append(g.is_vehicle)
        vidx.append(np.flatnonzero(g.is_vehicle) + off)
        sizes.append(int(g.is_vehicle.sum()))
        off += n
    return GraphBatch(np.concatenate(encs), np.concatenate(rels).reshape(-1, N_REL),
                      np.concatenate(srcs).astype(int), np.concatenate(dsts).astype(int),
                      np.concatenate(vehs), np.concatenate(vidx).astype(int), off, sizes)


def _segment_mean(values, dst, n_nodes):
    """Mean of edge values per destination node; returns ``(agg, deg)``."""
    deg = np.bincount(dst, minlength=n_nodes).astype(float)
    agg = np.zeros((n_nodes, values.shape[1]))
    if len(dst):
        # edges are grouped by destination
        starts = np.flatnonzero(np.r_[True, dst[1:] != dst[:-1]])
        agg[dst[starts]] = np.add.reduceat(values, starts, axis=0)
    safe = np.maximum(deg, 1.0)
    return agg / safe[:, None], safe


class GnnModel:
    """Shared-weight message-passing policy.

    ``params`` maps names to float64 arrays; ``hyper`` records the
    architecture.  Instances are cheap to copy with :meth:`copy`.
    """

    ACTIVATION = "tanh"

    def __init__(self, n_layers=3, hidden=64, msg_hidden=None, seed=0, recenter=True,
                 pedal_max=1.0, phi_max=math.pi / 4, params=None):
        self.hyper = dict(n_layers=int(n_layers), hidden=int(hidden),
                          msg_hidden=int(msg_hidden or hidden), recenter=bool(recenter),
                          pedal_max=float(pedal_max), phi_max=float(phi_max), activation=self.ACTIVATION)
        if params is None:
            params = self._init_params(np.random.default_rng(seed))
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    @property
    def n_layers(self):
        return self.hyper["n_layers"]

    @property
    def hidden(self):
        return self.hyper["hidden"]

    @property
    def out_scale(self):
        return np.array([self.hyper["pedal_max"], self.hyper["phi_max"]])

    def _init_params(self, rng):
        D, Dm = self.hyper["hidden"], self.hyper["msg_hidden"]

        def glorot(a, b):
            return rng.normal(0.0, math.sqrt(2.0 / (a + b)), size=(a, b))

        p = {"W_in": glorot(N_ENC, D), "b_in": np.zeros(D)}
        for l in range(self.hyper["n_layers"]):
            p[f"W1_{l}"] = glorot(2 * D + N_REL, Dm)
            p[f"b1_{l}"] = np.zeros(Dm)
            p[f"W2_{l}"] = glorot(Dm, D)
            p[f"b2_{l}"] = np.zeros(D)
            p[f"Wu_{l}"] = glorot(2 * D, D) * 0.5
            p[f"bu_{l}"] = np.zeros(D)
        p["W_out"] = glorot(D, 2) * 0.5
        p["b_out"] = np.zeros(2)
        return p

    def copy(self):
        return GnnModel(params={k: v.copy() for k, v in self.params.items()}, **{
            k: v for k, v in self.hyper.items() if k != "activation"})

    def n_params(self):
        return int(sum(v.size for v in self.params.values()))

    # -- forward / backward ---------------------------------------------------
    def _forward(self, batch: GraphBatch, keep=False):
        p = self.params
        veh = batch.is_vehicle[:, None]
        cache = {}
        h = np.tanh(batch.enc @ p["W_in"] + p["b_in"])
        if keep:
            cache["h0"] = h
        for l in range(self.n_layers):
            X = np.concatenate([h[batch.dst], h[batch.src], batch.rel], axis=1)
            z1 = np.tanh(X @ p[f"W1_{l}"] + p[f"b1_{l}"])
            m = np.tanh(z1 @ p[f"W2_{l}"] + p[f"b2_{l}"])
            agg, deg = _segment_mean(m, batch.dst, batch.n_nodes)
            U = np.concatenate([h, agg], axis=1)
            u = np.tanh(U @ p[f"Wu_{l}"] + p[f"bu_{l}"])
            h_new = np.where(veh, h + u, h)
            if not np.all(np.isfinite(h_new)):
                raise NonFiniteError(f"non-finite activation in layer {l}")
            if keep:
                cache[l] = (h, X, z1, m, deg, U, u)
            h = h_new
        hv = h[batch.vehicle_index]
        a = np.tanh(hv @ p["W_out"] + p["b_out"])
        if keep:
            cache["hv"] = hv
            cache["a"] = a
        return a * self.out_scale, cache

    def forward_batch(self, batch: GraphBatch):
        """Controls for every vehicle in the batch, ``(n_vehicles, 2)`` as ``[pedal, steer]``."""
        return self._forward(batch)[0]

    def forward(self, graph: SceneGraph):
        return self.forward_batch(collate([encode_graph(graph, self.hyper["recenter"])]))

    def __call__(self, scenario, states):
        """Controller interface for closed-loop simulation."""
        return self.forward(build_graph(scenario, states))

    def loss_and_grad(self, batch: GraphBatch, labels):
        """MSE against ``labels`` and its gradient for every parameter."""
        p = self.params
        pred, cache = self._forward(batch, keep=True)
        diff = pred - labels
        loss = float(np.mean(diff ** 2))
        g = {}
        dpred = 2.0 * diff / diff.size
        da = dpred * self.out_scale * (1.0 - cache["a"] ** 2)
        g["W_out"] = cache["hv"].T @ da
        g["b_out"] = da.sum(0)
        dh = np.zeros((batch.n_nodes, self.hidden))
        dh[batch.vehicle_index] = da @ p["W_out"].T
        veh = batch.is_vehicle[:, None]
        D = self.hidden
        for l in reversed(range(self.n_layers)):
            h, X, z1, m, deg, U, u = cache[l]
            # h_new = h + u (vehicles), h (obstacles)
            du = np.where(veh, dh, 0.0) * (1.0 - u ** 2)
            g[f"Wu_{l}"] = U.T @ du
            g[f"bu_{l}"] = du.sum(0)
            dU = du @ p[f"Wu_{l}"].T
            dh_prev = dh + dU[:, :D]
            dagg = dU[:, D:]
            dm = dagg[batch.dst] / deg[batch.dst, None]
            da2 = dm * (1.0 - m ** 2)
            g[f"W2_{l}"] = z1.T @ da2
            g[f"b2_{l}"] = da2.sum(0)
            dz1 = da2 @ p[f"W2_{l}"].T
            da1 = dz1 * (1.0 - z1 ** 2)
            g[f"W1_{l}"] = X.T @ da1
            g[f"b1_{l}"] = da1.sum(0)
            dX = da1 @ p[f"W1_{l}"].T
            np.add.at(dh_prev, batch.dst, dX[:, :D])
            np.add.at(dh_prev, batch.src, dX[:, D:2 * D])
            dh = dh_prev
        da0 = dh * (1.0 - cache["h0"] ** 2)
        g["W_in"] = batch.enc.T @ da0
        g["b_in"] = da0.sum(0)
        return loss, g


def mse_loss(pred, label):
    pred = np.asarray(pred, dtype=float)
    label = np.asarray(label, dtype=float)
    if pred.shape != label.shape:
        raise DimensionError(f"prediction {pred.shape} vs label {label.shape}")
    return float(np.mean((pred - label) ** 2))


def predict_plan(model: GnnModel, scenario: Scenario, states, horizon, params=KinematicParams()):
    """Roll the policy forward ``horizon`` steps and collect its controls, ``(H, N, 2)``."""
    s = np.asarray(states, dtype=float)
    plan = np.empty((horizon, s.shape[0], 2))
    for t in range(horizon):
        u = np.clip(model(scenario, s), params.lower, params.upper)
        plan[t] = u
        s = step(s, u, params)
    return plan


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    val_split: float = 0.1
    patience: int = 15
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class TrainResult:
    model: GnnModel
    train_loss: list
    val_loss: list
    best_epoch: int
    initial_val_loss: float


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params, grads):
        if self.lr == 0:
            return
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def encode_samples(samples, recenter=True):
    enc, labels = [], []
    for s in samples:
        enc.append(encode_graph(build_graph(s.snapshot), recenter))
        labels.append(np.asarray(s.labels, dtype=float))
    return enc, labels


def _evaluate(model, enc, labels, batch_size=512):
    if not enc:
        return float("nan")
    total, count = 0.0, 0
    for k in range(0, len(enc), batch_size):
        b = collate(enc[k:k + batch_size])
        lab = np.concatenate(labels[k:k + batch_size])
        pred = model.forward_batch(b)
        total += float(((pred - lab) ** 2).sum())
        count += lab.size
    return total / count


def train(model: GnnModel, dataset, config: TrainConfig = TrainConfig(), log=None) -> TrainResult:
    """Mini-batch Adam on the MSE imitation loss with early stopping.

    The returned model holds the weights of the best validation epoch (the
    initial weights count as epoch 0).
    """
    if not len(dataset):
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(config.seed)
    model = model.copy()
    enc, labels = encode_samples(dataset, model.hyper["recenter"])
    order = rng.permutation(len(enc))
    n_val = int(round(config.val_split * len(enc)))
    if len(enc) > 1:
        n_val = min(max(n_val, 1 if config.val_split > 0 else 0), len(enc) - 1)
    else:
        n_val = 0
    val_idx, tr_idx = order[:n_val], order[n_val:]
    tr_enc, tr_lab = [enc[i] for i in tr_idx], [labels[i] for i in tr_idx]
    va_enc, va_lab = [enc[i] for i in val_idx], [labels[i] for i in val_idx]
    monitor = (va_enc, va_lab) if va_enc else (tr_enc, tr_lab)

    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.adam_eps)
    init_val = _evaluate(model, *monitor)
    best, best_epoch, best_params = init_val, 0, copy.deepcopy(model.params)
    train_curve, val_curve = [], []
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(len(tr_enc))
        tot, cnt = 0.0, 0
        for k in range(0, len(perm), config.batch_size):
            ids = perm[k:k + config.batch_size]
            b = collate([tr_enc[i] for i in ids])
            lab = np.concatenate([tr_lab[i] for i in ids])
            loss, grads = model.loss_and_grad(b, lab)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            opt.update(model.params, grads)
            tot += loss * lab.size
            cnt += lab.size
        train_curve.append(tot / max(cnt, 1))
        v = _evaluate(model, *monitor)
        if not math.isfinite(v):
            raise TrainingDivergedError(epoch, v)
        val_curve.append(v)
        if log:
            log(f"epoch {epoch}: train {train_curve[-1]:.5f} val {v:.5f}")
        if v < best:
            best, best_epoch, best_params = v, epoch, copy.deepcopy(model.params)
        elif config.patience and epoch - best_epoch >= config.patience:
            break
    model.params = best_params
    return TrainResult(model, train_curve, val_curve, best_epoch, init_val)
