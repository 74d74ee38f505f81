"""Simulated federated training: round loop, local DP updates, aggregation.

A round selects ``clients_per_round`` clients, each of which copies the
global parameters, runs ``local_steps`` (optionally DP) Adam updates on its
own shard, and reports back; the server then combines the reported parameter
vectors with FedAvg or an adaptive server optimizer (FedAdam/FedYogi).
FedProx is FedAvg aggregation plus a proximal gradient term on the client.

All randomness derives from one training seed: the selection stream for
round r is seeded with [seed, 0, r] and client c's local stream with
[seed, 1 + c, r], so any round can be replayed without replaying history —
that is what makes checkpoint resume bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import NoiseSchedule, make_training_example
from .dp import DpConfig, RdpAccountant, calibrate_sigma, privatize
from .errors import DivergenceError, PrivacyBudgetError, ValidationError
from .nn import AdamState, DenoiserParams, GradientVector, TrainingSample, adam_step, per_sample_grads

STRATEGIES = ("fedavg", "fedadam", "fedprox", "fedyogi")
DEFAULT_BATCH_SIZE = 16


@dataclass(frozen=True)
class FedConfig:
    """Orchestration knobs for one federated run."""

    n_clients: int = 5
    rounds: int = 3000
    local_steps: int = 100
    clients_per_round: int = 1
    strategy: str = "fedavg"
    prox_mu: float = 0.01
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = 1e-3
    server_lr: float = 1.0
    server_beta1: float = 0.9
    server_beta2: float = 0.999
    server_eps: float = 1e-8
    literal_weighting: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValidationError(
                f"unknown strategy {self.strategy!r}; pick one of {STRATEGIES}")
        if self.rounds < 1 or self.local_steps < 1:
            raise ValidationError("rounds and local_steps must be >= 1")
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ValidationError("need 1 <= clients_per_round <= n_clients")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.learning_rate <= 0 or self.server_lr <= 0:
            raise ValidationError("learning rates must be positive")


@dataclass(frozen=True)
class ClientDataset:
    """One client's encoded shard: numeric block plus embedding row indices."""

    numeric: np.ndarray
    cat_rows: np.ndarray

    def __post_init__(self):
        numeric = np.atleast_2d(np.asarray(self.numeric, dtype=np.float64))
        cat_rows = np.asarray(self.cat_rows, dtype=np.int64)
        if cat_rows.ndim != 2:
            cat_rows = cat_rows.reshape(numeric.shape[0], -1)
        if numeric.shape[0] != cat_rows.shape[0]:
            raise ValidationError("numeric and categorical row counts differ")
        if numeric.shape[0] == 0:
            raise ValidationError("client shard is empty")
        object.__setattr__(self, "numeric", numeric)
        object.__setattr__(self, "cat_rows", cat_rows)

    @property
    def n_samples(self) -> int:
        return self.numeric.shape[0]


def make_client_datasets(pipeline, table, partitions) -> list:
    """Slice an encoded table into per-client shards following a partition."""
    numeric = pipeline.encode_numeric(table)
    cat_rows = pipeline.category_indices(table)
    return [ClientDataset(numeric[p.indices], cat_rows[p.indices])
            for p in partitions]


@dataclass
class ClientState:
    """Mutable per-client training state that persists across rounds."""

    client_id: int
    adam: AdamState
    accountant: RdpAccountant | None
    sigma: float | None
    delta: float | None
    n_samples: int

    def current_epsilon(self) -> float | None:
        if self.accountant is None or self.accountant.steps == 0:
            return None
        return self.accountant.to_epsilon(self.delta)[0]


@dataclass
class FederatedState:
    """Everything needed to continue training from round ``round``."""

    global_flat: np.ndarray
    manifest: dict
    clients: list
    server_m: np.ndarray
    server_v: np.ndarray
    server_updates: int = 0
    round: int = 0
    stopped_early: bool = False

    @property
    def params(self) -> DenoiserParams:
        return DenoiserParams.from_flat(self.global_flat, self.manifest)


@dataclass
class TrainResult:
    params: DenoiserParams
    audit: list
    rounds_completed: int
    epsilons: dict
    stopped_early: bool


# ---------------------------------------------------------------------------
# Aggregation


def fedavg_aggregate(updates: list, total_weight: float | None = None) -> np.ndarray:
    """Sample-count-weighted mean of client parameter vectors.

    ``updates`` is a list of (flat params, sample count). By default weights
    normalize over the participating clients; passing ``total_weight`` (e.g.
    the full federation size) reproduces the literal global normalization,
    which shrinks the result toward zero under partial participation.
    """
    if not updates:
        raise ValidationError("nothing to aggregate")
    length = updates[0][0].size
    weight_sum = 0.0
    total = np.zeros(length)
    for vec, weight in updates:
        if vec.size != length:
            raise ValidationError("client parameter vectors differ in length")
        total += float(weight) * vec
        weight_sum += float(weight)
    denom = weight_sum if total_weight is None else float(total_weight)
    if denom <= 0.0:
        raise ValidationError("aggregation weights must sum to a positive value")
    return total / denom


@dataclass
class ServerOptState:
    """Adaptive server-optimizer moments (FedAdam / FedYogi)."""

    m: np.ndarray
    v: np.ndarray
    updates: int = 0


def server_opt_aggregate(global_flat: np.ndarray, updates: list,
                         state: ServerOptState, cfg: FedConfig,
                         total_weight: float | None = None) -> np.ndarray:
    """One adaptive server step on the pseudo-gradient.

    Delta = current global minus the FedAvg of client params. The first
    moment is bias-corrected; the second is not (standard federated-optimizer
    convention). FedYogi's sign-controlled second moment matches FedAdam on
    the first update from zero moments.
    """
    if cfg.strategy not in ("fedadam", "fedyogi"):
        raise ValidationError(f"server optimizer got strategy {cfg.strategy!r}")
    if state.m.shape != global_flat.shape or state.v.shape != global_flat.shape:
        raise ValidationError("server optimizer state shape mismatch")
    target = fedavg_aggregate(updates, total_weight)
    delta = global_flat - target
    d2 = delta * delta
    state.updates += 1
    state.m = cfg.server_beta1 * state.m + (1.0 - cfg.server_beta1) * delta
    if cfg.strategy == "fedadam":
        state.v = cfg.server_beta2 * state.v + (1.0 - cfg.server_beta2) * d2
    else:
        state.v = state.v - (1.0 - cfg.server_beta2) * d2 * np.sign(state.v - d2)
    m_hat = state.m / (1.0 - cfg.server_beta1 ** state.updates)
    return global_flat - cfg.server_lr * m_hat / (np.sqrt(state.v) + cfg.server_eps)


# ---------------------------------------------------------------------------
# Local training


def _assemble_x0(params: DenoiserParams, data: ClientDataset, i: int) -> np.ndarray:
    parts = [data.numeric[i]]
    for j in range(data.cat_rows.shape[1]):
        parts.append(params.embeddings[j][data.cat_rows[i, j]])
    return np.concatenate(parts)


def client_local_update(global_flat: np.ndarray, manifest: dict,
                        client: ClientState, data: ClientDataset,
                        schedule: NoiseSchedule, fed_cfg: FedConfig,
                        dp_cfg: DpConfig, rng) -> tuple:
    """Run ``local_steps`` optimizer steps from the current global params.

    Returns (updated flat params, stats dict). The RNG is consumed in a fixed
    order per step — batch draw, then per-sample (t, noise), then DP noise —
    so one seeded generator fully determines the client's round.
    """
    params = DenoiserParams.from_flat(global_flat, manifest)
    flat = global_flat.copy()
    anchor = global_flat
    n = data.n_samples
    mechanism = dp_cfg.mechanism_active
    q = min(1.0, fed_cfg.batch_size / n)
    losses: list = []
    pre_norms: list = []
    post_norms: list = []
    for step in range(fed_cfg.local_steps):
        if mechanism:
            idx = np.flatnonzero(rng.random(n) < q)
        else:
            idx = rng.choice(n, size=min(fed_cfg.batch_size, n), replace=False)
        if client.accountant is not None:
            client.accountant.account_step(q, client.sigma)
        if idx.size == 0:
            continue
        batch = []
        for i in idx:
            x0 = _assemble_x0(params, data, int(i))
            x_t, t, eps_vec = make_training_example(x0, rng, schedule)
            emb_rows = data.cat_rows[int(i)] if data.cat_rows.shape[1] else None
            batch.append(TrainingSample(x_t, t, eps_vec, emb_rows=emb_rows,
                                        emb_coeff=math.sqrt(schedule.alpha_bar(t))))
        try:
            grads, loss = per_sample_grads(params, batch)
        except DivergenceError as exc:
            raise DivergenceError(
                f"client {client.client_id}, local step {step}: {exc}") from exc
        pre_norms.extend(g.norm for g in grads)
        if mechanism:
            grad = privatize(grads, dp_cfg.clip_norm, client.sigma, rng,
                             dp_cfg.literal_noise_placement)
            post_norms.extend(min(g.norm, dp_cfg.clip_norm) for g in grads)
        else:
            grad = GradientVector(
                np.mean(np.stack([g.values for g in grads]), axis=0))
            post_norms.extend(g.norm for g in grads)
        if fed_cfg.strategy == "fedprox" and fed_cfg.prox_mu != 0.0:
            grad = GradientVector(grad.values + fed_cfg.prox_mu * (flat - anchor))
        flat = adam_step(flat, client.adam, grad)
        if not np.all(np.isfinite(flat)):
            raise DivergenceError(
                f"client {client.client_id} diverged at local step {step}")
        params = DenoiserParams.from_flat(flat, manifest)
        losses.append(loss)
    stats = {
        "loss": float(np.mean(losses)) if losses else None,
        "grad_norm_pre": float(np.mean(pre_norms)) if pre_norms else None,
        "grad_norm_post": float(np.mean(post_norms)) if post_norms else None,
        "steps": fed_cfg.local_steps,
        "q": q,
        "sigma": client.sigma,
    }
    return flat, stats


# ---------------------------------------------------------------------------
# Round loop


def _budget_allows(client: ClientState, fed_cfg: FedConfig, dp_cfg: DpConfig,
                   q: float) -> bool:
    if client.accountant is None:
        return True
    projected = client.accountant.projected_epsilon(
        client.delta, q, client.sigma, fed_cfg.local_steps)
    return projected <= dp_cfg.epsilon


def run_round(state: FederatedState, datasets: list, schedule: NoiseSchedule,
              fed_cfg: FedConfig, dp_cfg: DpConfig, seed: int) -> list | None:
    """Execute one communication round in place.

    Returns the audit records for the round, or None when every client's
    remaining budget is too small for another local pass (early stop).
    """
    r = state.round
    qs = {c.client_id: min(1.0, fed_cfg.batch_size / c.n_samples)
          for c in state.clients}
    eligible = [c.client_id for c in state.clients
                if _budget_allows(c, fed_cfg, dp_cfg, qs[c.client_id])]
    if not eligible:
        state.stopped_early = True
        return None
    take = min(fed_cfg.clients_per_round, len(eligible))
    selection_rng = np.random.default_rng([seed, 0, r])
    chosen = sorted(selection_rng.choice(np.asarray(eligible), size=take,
                                         replace=False).tolist())

    updates = []
    audit = []
    for cid in chosen:
        client = state.clients[cid]
        rng = np.random.default_rng([seed, 1 + cid, r])
        flat, stats = client_local_update(state.global_flat, state.manifest,
                                          client, datasets[cid], schedule,
                                          fed_cfg, dp_cfg, rng)
        updates.append((flat, client.n_samples))
        audit.append({"round": r + 1, "client": cid,
                      "epsilon": client.current_epsilon(), **stats})

    total = None
    if fed_cfg.literal_weighting:
        total = float(sum(c.n_samples for c in state.clients))
    if fed_cfg.strategy in ("fedadam", "fedyogi"):
        opt_state = ServerOptState(state.server_m, state.server_v, state.server_updates)
        state.global_flat = server_opt_aggregate(state.global_flat, updates,
                                                 opt_state, fed_cfg, total)
        state.server_m, state.server_v = opt_state.m, opt_state.v
        state.server_updates = opt_state.updates
    else:
        state.global_flat = fedavg_aggregate(updates, total)
    state.round += 1
    return audit


def init_state(init_params: DenoiserParams, datasets: list, fed_cfg: FedConfig,
               dp_cfg: DpConfig) -> FederatedState:
    """Fresh training state: zero moments, calibrated per-client noise."""
    if not datasets:
        raise ValidationError("train needs at least one client shard")
    flat = init_params.flatten()
    clients = []
    for cid, data in enumerate(datasets):
        sigma = dp_cfg.noise_multiplier
        delta = None
        accountant = None
        if dp_cfg.accounting_active:
            delta = dp_cfg.delta if dp_cfg.delta is not None else 1.0 / data.n_samples
            q = min(1.0, fed_cfg.batch_size / data.n_samples)
            if sigma is None:
                planned = fed_cfg.local_steps * fed_cfg.rounds
                sigma = calibrate_sigma(dp_cfg.epsilon, delta, q, planned)
            accountant = RdpAccountant()
        clients.append(ClientState(cid, AdamState.zeros(flat.size, fed_cfg.learning_rate),
                                   accountant, sigma, delta, data.n_samples))
    return FederatedState(flat, init_params.manifest(), clients,
                          np.zeros(flat.size), np.zeros(flat.size))


def train(datasets: list, init_params: DenoiserParams, schedule: NoiseSchedule,
          fed_cfg: FedConfig, dp_cfg: DpConfig, seed: int,
          state: FederatedState | None = None,
          stop_after_round: int | None = None,
          round_callback=None) -> tuple:
    """Run the federated loop; returns (TrainResult, FederatedState).

    Pass a previously saved ``state`` to resume; ``stop_after_round`` halts
    the session once that many total rounds are complete (for interruption
    tests and staged runs). ``round_callback(state, audit_lines)`` fires after
    every round, e.g. to write periodic checkpoints.
    """
    if state is None:
        state = init_state(init_params, datasets, fed_cfg, dp_cfg)
        if dp_cfg.accounting_active:
            qs = {c.client_id: min(1.0, fed_cfg.batch_size / c.n_samples)
                  for c in state.clients}
            if not any(_budget_allows(c, fed_cfg, dp_cfg, qs[c.client_id])
                       for c in state.clients):
                raise PrivacyBudgetError(
                    f"epsilon target {dp_cfg.epsilon} cannot cover even one "
                    f"round of {fed_cfg.local_steps} local steps")
    audit: list = []
    limit = fed_cfg.rounds if stop_after_round is None else min(
        fed_cfg.rounds, stop_after_round)
    while state.round < limit:
        lines = run_round(state, datasets, schedule, fed_cfg, dp_cfg, seed)
        if lines is None:
            break
        audit.extend(lines)
        if round_callback is not None:
            round_callback(state, lines)
    epsilons = {c.client_id: c.current_epsilon() for c in state.clients
                if c.accountant is not None}
    result = TrainResult(state.params, audit, state.round,
                         epsilons, state.stopped_early)
    return result, state
