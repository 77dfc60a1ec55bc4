"""Trainable ordering generator and critic.

Variables are embedded from their per-batch sample vectors, refined by a
single-head graph-attention layer over their candidate parents, mixed between
the complete-recipe and incomplete-recipe paths, and decoded one variable at a
time by a masked pointer-style scorer.

Every forward function accepts a dict of parameter ``Tensor`` objects (see
``NetworkParams.tensors``) so the same code serves inference and training.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .core import Ordering
from .errors import DataFormatError, NumericalError

BN_EPS = 1e-5
LEAKY_SLOPE = 0.2
CHECKPOINT_FORMAT = "coke-params"
CHECKPOINT_VERSION = 1


def _param_shapes(n_batch: int, hidden: int) -> dict[str, tuple]:
    h = hidden
    return {
        "in_W": (n_batch, h),
        "in_b": (h,),
        "att_Wq": (h, h),
        "att_Wk": (h, h),
        "att_Wv": (h, h),
        "att_a": (h,),
        "theta_full": (),
        "theta_miss": (),
        "dec_Wc": (h, h),
        "dec_Wz": (h, h),
        "dec_b": (h,),
        "dec_w": (h,),
        "crit_W": (h, h),
        "crit_b": (h,),
        "crit_w": (h,),
        "crit_c": (),
    }


class NetworkParams:
    """Named float64 arrays holding every trainable weight."""

    def __init__(self, arrays: dict):
        self.arrays = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
        if not self.arrays:
            raise ValueError("empty parameter set")

    @classmethod
    def initialize(cls, n_batch: int, hidden: int = 64, seed: int = 0) -> "NetworkParams":
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 101])
        arrays = {}
        for name, shape in _param_shapes(n_batch, hidden).items():
            if name.startswith("theta"):
                arrays[name] = np.array(0.5)
                continue
            fan_in = n_batch if name.startswith("in_") else hidden
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        return cls(arrays)

    @property
    def n_batch(self) -> int:
        return self.arrays["in_W"].shape[0]

    @property
    def hidden(self) -> int:
        return self.arrays["in_W"].shape[1]

    def names(self) -> list[str]:
        return list(self.arrays)

    def tensors(self) -> dict[str, Tensor]:
        return {k: ad.param(v, name=k) for k, v in self.arrays.items()}

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.arrays.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def __getitem__(self, name):
        return self.arrays[name]

    # -- checkpoint IO -------------------------------------------------------------
    def to_json(self) -> str:
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "tensors": {
                k: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
                for k, v in self.arrays.items()
            },
        }
        return json.dumps(payload, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NetworkParams":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"checkpoint is not valid JSON at byte {exc.pos}: {exc.msg}") from exc
        if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
            raise DataFormatError("not a parameter checkpoint")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise DataFormatError(f"unsupported checkpoint version {payload.get('version')!r}")
        arrays = {}
        tensors = payload.get("tensors")
        if not isinstance(tensors, dict):
            raise DataFormatError("checkpoint has no tensor table")
        for name, spec in tensors.items():
            try:
                data = np.asarray(spec["data"], dtype=np.float64)
                shape = tuple(int(s) for s in spec["shape"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"tensor {name!r}: malformed entry ({exc})") from exc
            if data.size != int(np.prod(shape, dtype=np.int64)):
                raise DataFormatError(f"tensor {name!r}: {data.size} values for shape {shape}")
            arrays[name] = data.reshape(shape)
        return cls(arrays)


def batch_norm_columns(batch: np.ndarray) -> np.ndarray:
    """Standardize each column over the batch (population moments).

    The denominator is ``max(std, BN_EPS)``, so constant columns map to zeros
    and non-degenerate columns come out with unit variance.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("batch normalization needs at least 2 rows")
    xc = x - x.mean(axis=0)
    sd = np.sqrt((xc * xc).mean(axis=0))
    return xc / np.maximum(sd, BN_EPS)


def attention_masks(g_k: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """``allowed[r, j, l]``: may variable ``j`` attend to ``l`` in recipe ``r``.

    Each variable always attends to itself; ``l != j`` is allowed when ``l -> j``
    is in ``g_k`` and both are observed in the recipe.
    """
    observed = np.atleast_2d(np.asarray(observed, dtype=bool))
    d = g_k.shape[0]
    parents_of = np.asarray(g_k, dtype=bool).T  # [j, l] = l -> j
    allowed = parents_of[None, :, :] & observed[:, None, :] & observed[:, :, None]
    allowed[:, np.arange(d), np.arange(d)] = True
    return allowed


def _attend(x3: np.ndarray, allowed: np.ndarray, T: dict):
    """Projection + masked GAT layer for a stack of recipes.

    ``x3`` is ``(R, n, d)`` normalized data (unobserved columns zero);
    returns ``(Z, weights)`` with ``Z`` a ``(R, d, h)`` Tensor.
    """
    r, _, d = x3.shape
    h = T["in_W"].shape[1]
    proj = Tensor(np.ascontiguousarray(x3.transpose(0, 2, 1))) @ T["in_W"] + T["in_b"]
    q = (proj @ T["att_Wq"]).reshape(r, d, 1, h)
    k = (proj @ T["att_Wk"]).reshape(r, 1, d, h)
    # score(j, l) = a . LeakyReLU(Wq p_j + Wk p_l), so weights depend on the query
    scores = ad.leaky_relu(q + k, LEAKY_SLOPE) @ T["att_a"]
    weights = ad.masked_softmax(scores, allowed, axis=-1)
    values = proj @ T["att_Wv"]
    return weights @ values, weights


def _parent_mask_from_sets(parent_sets: Sequence, d: int) -> np.ndarray:
    g = np.zeros((d, d), dtype=bool)
    for j, parents in enumerate(parent_sets):
        for l in parents:
            if l != j:
                g[l, j] = True
    return g


def attend_parents(normalized: np.ndarray, parent_sets: Sequence, params, return_weights=False):
    """Embed ``d`` variables from an ``n x d`` normalized batch.

    ``parent_sets[j]`` lists the variables ``j`` may attend to besides itself.
    """
    T = params.tensors() if isinstance(params, NetworkParams) else params
    x = np.asarray(normalized, dtype=np.float64)
    d = x.shape[1]
    g = _parent_mask_from_sets(parent_sets, d)
    allowed = attention_masks(g, np.ones((1, d), dtype=bool))
    z, w = _attend(x[None], allowed, T)
    z = z[0]
    if return_weights:
        return z, w.data[0]
    return z


@dataclass
class RecipeBatch:
    """One recipe's sampled rows: ``values`` is ``n x d`` with NaN where unobserved."""

    values: np.ndarray
    observed: np.ndarray  # (d,) bool
    recipe_id: str = ""

    def normalized(self) -> np.ndarray:
        out = np.zeros(self.values.shape)
        cols = np.flatnonzero(self.observed)
        if cols.size:
            out[:, cols] = batch_norm_columns(self.values[:, cols])
        return out


def complete_path(r_full_batch: np.ndarray, g_k: np.ndarray, params) -> Tensor:
    if r_full_batch is None:
        raise ValueError("no complete recipe available; enable miss-only mode to embed without it")
    T = params.tensors() if isinstance(params, NetworkParams) else params
    x = batch_norm_columns(r_full_batch)
    d = x.shape[1]
    allowed = attention_masks(g_k, np.ones((1, d), dtype=bool))
    z, _ = _attend(x[None], allowed, T)
    return z[0]


def _stack_miss(batches: Sequence[RecipeBatch]):
    x3 = np.stack([b.normalized() for b in batches])
    obs = np.stack([np.asarray(b.observed, dtype=bool) for b in batches])
    return x3, obs


def _mean_over_recipes(z3: Tensor, obs: np.ndarray):
    counts = obs.sum(axis=0)
    masked = z3 * obs[:, :, None].astype(np.float64)
    z = masked.sum(axis=0) * (1.0 / np.maximum(counts, 1))[:, None]
    return z, counts


def incomplete_path(recipe_batches: Sequence[RecipeBatch], g_k: np.ndarray, params):
    """Average, per variable, its embeddings over the recipes observing it.

    Within a recipe a variable only attends to observed parents. Variables
    observed in no recipe get the zero vector and count 0.
    """
    T = params.tensors() if isinstance(params, NetworkParams) else params
    d = g_k.shape[0]
    h = T["in_W"].shape[1]
    if not recipe_batches:
        return Tensor(np.zeros((d, h))), np.zeros(d, dtype=np.int64)
    x3, obs = _stack_miss(recipe_batches)
    z3, _ = _attend(x3, attention_masks(g_k, obs), T)
    return _mean_over_recipes(z3, obs)


def combine(z_full, z_miss, params) -> Tensor:
    T = params.tensors() if isinstance(params, NetworkParams) else params
    return T["theta_full"] * ad.lift(z_full) + T["theta_miss"] * ad.lift(z_miss)


@dataclass
class Embedding:
    z: Tensor
    source: tuple
    miss_counts: np.ndarray


def embed(
    full_batch: Optional[np.ndarray],
    miss_batches: Sequence[RecipeBatch],
    g_k: np.ndarray,
    T: dict,
    use_incomplete: bool = True,
) -> Embedding:
    """Complete and incomplete paths in one stacked attention pass, then mix."""
    d = g_k.shape[0]
    miss = [b for b in miss_batches if np.any(b.observed)] if use_incomplete else []
    stacks, obs_rows = [], []
    if full_batch is not None:
        stacks.append(batch_norm_columns(full_batch))
        obs_rows.append(np.ones(d, dtype=bool))
    for b in miss:
        stacks.append(b.normalized())
        obs_rows.append(np.asarray(b.observed, dtype=bool))
    if not stacks:
        raise ValueError("nothing to embed: no complete batch and no usable incomplete batches")
    x3 = np.stack(stacks)
    obs = np.stack(obs_rows)
    z3, _ = _attend(x3, attention_masks(g_k, obs), T)
    off = 0
    z = None
    counts = np.zeros(d, dtype=np.int64)
    if full_batch is not None:
        z = T["theta_full"] * z3[0]
        off = 1
    if miss:
        z_miss, counts = _mean_over_recipes(z3[off:], obs[off:])
        zm = T["theta_miss"] * z_miss
        z = zm if z is None else z + zm
    source = tuple(
        "combined" if (full_batch is not None and c > 0) else ("full" if full_batch is not None else "miss")
        for c in counts
    )
    return Embedding(z, source, counts)


# -- ordering generation --------------------------------------------------------


@dataclass(frozen=True)
class State:
    embeddings: np.ndarray
    selected: tuple = ()

    @classmethod
    def initial(cls, z) -> "State":
        z = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
        return cls(z.copy(), ())

    def unselected_mask(self) -> np.ndarray:
        mask = np.ones(self.embeddings.shape[0], dtype=bool)
        mask[list(self.selected)] = False
        return mask


def mask_state(state: State, chosen: int) -> State:
    if chosen in state.selected:
        raise ValueError(f"variable {chosen} already selected")
    emb = state.embeddings.copy()
    emb[chosen] = 0.0
    return State(emb, state.selected + (int(chosen),))


def _decoder_logits_np(state: State, A: dict) -> np.ndarray:
    mask = state.unselected_mask()
    ctx = state.embeddings[mask].mean(axis=0)
    a = ctx @ A["dec_Wc"]
    b = state.embeddings @ A["dec_Wz"]
    logits = np.tanh(a[None, :] + b + A["dec_b"]) @ A["dec_w"]
    return np.where(mask, logits, -np.inf)


def _log_softmax_np(logits: np.ndarray) -> np.ndarray:
    m = logits.max()
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum())


def decode_step(state: State, params, mode: str = "sample", rng=None):
    """Pick the next variable. Returns ``(index, logprob, logits)``."""
    A = params.arrays if isinstance(params, NetworkParams) else params
    if len(state.selected) >= state.embeddings.shape[0]:
        raise ValueError("all variables already selected")
    logits = _decoder_logits_np(state, A)
    if not np.all(np.isfinite(logits[state.unselected_mask()])):
        raise NumericalError("non-finite decoder logits")
    logp = _log_softmax_np(logits)
    if mode == "greedy":
        idx = int(np.argmax(logp))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        prob = np.exp(logp)
        cdf = np.cumsum(prob)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(prob) - 1)
        while not np.isfinite(logp[idx]):
            idx -= 1
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return idx, float(min(logp[idx], 0.0)), logits


def generate_ordering(z, params, mode: str = "sample", rng=None) -> Ordering:
    state = State.initial(z)
    perm, lps, logits = [], [], []
    for _ in range(state.embeddings.shape[0]):
        idx, lp, lg = decode_step(state, params, mode, rng)
        perm.append(idx)
        lps.append(lp)
        logits.append(lg)
        state = mask_state(state, idx)
    return Ordering(tuple(perm), tuple(lps), tuple(logits))


def ordering_log_prob(z: Tensor, perm: Sequence[int], T: dict, entropy: bool = False):
    """Differentiable log-probability of ``perm`` (all steps evaluated at once).

    With ``entropy=True`` also returns the summed per-step policy entropy.
    """
    z = ad.lift(z)
    d, h = z.shape
    perm = np.asarray(perm, dtype=np.int64)
    pos = np.empty(d, dtype=np.int64)
    pos[perm] = np.arange(d)
    steps = np.arange(d)
    mask = pos[None, :] >= steps[:, None]  # [t, i]: i still available at step t
    counts = (d - steps).astype(np.float64)
    ctx = (Tensor(mask.astype(np.float64)) @ z) * (1.0 / counts)[:, None]
    a = ctx @ T["dec_Wc"]
    b = z @ T["dec_Wz"]
    hidden = ad.tanh(a.reshape(d, 1, h) + b.reshape(1, d, h) + T["dec_b"])
    logits = hidden @ T["dec_w"]
    logp = ad.masked_log_softmax(logits, mask, axis=1)
    total = logp[steps, perm].sum()
    if not entropy:
        return total
    p = np.where(mask, np.exp(np.where(mask, logp.data, 0.0)), 0.0)
    # d/dlogp of -sum p*logp restricted to the mask
    safe = np.where(mask, logp.data, 0.0)
    ent_val = float(-(p * safe).sum())
    ent = Tensor(np.asarray(ent_val), (logp,), lambda g: logp._accum(np.where(mask, -g * p * (safe + 1.0), 0.0)))
    return total, ent


def critic_value(state, params) -> Tensor:
    """Scalar value of the initial (unmasked) state from its mean embedding."""
    T = params.tensors() if isinstance(params, NetworkParams) else params
    emb = state.embeddings if isinstance(state, State) else state
    m = ad.lift(emb).mean(axis=0)
    u = ad.tanh(m @ T["crit_W"] + T["crit_b"])
    return u @ T["crit_w"] + T["crit_c"]


def attention_weights(normalized: np.ndarray, g_k: np.ndarray, observed, params) -> np.ndarray:
    T = params.tensors() if isinstance(params, NetworkParams) else params
    x = np.asarray(normalized, dtype=np.float64)
    _, w = _attend(x[None], attention_masks(g_k, np.asarray(observed)[None]), T)
    return w.data[0]


def gradients(loss: Tensor, T: dict) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of a scalar ``loss`` for every parameter in ``T``.

    Parameters the loss does not depend on get zeros.
    """
    if loss.data.size != 1:
        raise ValueError("loss must be a scalar")
    for t in T.values():
        t.grad = None
    loss.backward()
    return {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in T.items()}


backward = gradients
