"""Policy representation and training for option and flat baselines.

The reference learner is an entropy-regularized actor-critic (twin critics,
target networks, squashed-Gaussian actor, replay buffer) written directly on
the package's Mlp; a cross-entropy-method learner exists behind the same
interface for cheap smoke runs. Policies emit a waypoint displacement in
[-1, 1]^2 which the kinematics adapter turns into a bounded world action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .abstraction import Region, RegionVoronoi
from .errors import DivergedTraining
from .mlp import Adam, Mlp, init_mlp, mlp_backward, mlp_forward, mlp_forward_cached
from .options import OptionGuide, pseudo_reward
from .seeding import spawn
from .world import (Configuration, Kinematics, OccupancyWorld, collision,
                    steer_toward, step)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    """Training protocol knobs; defaults mirror the reference protocol."""

    max_steps: int = 150_000
    eval_every: int = 10_000
    eval_episodes: int = 20
    stop_avg_reward: float = 500.0
    discount: float = 0.99
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    batch_size: int = 128
    replay_capacity: int = 100_000
    entropy_coef: float = 0.05
    episode_limit: int = 200
    hidden: tuple = (256, 256)
    reward_scale: float = 0.01
    tau: float = 0.01
    start_steps: int = 500
    update_every: int = 2
    updates_per_round: int = 1  # gradient updates per round; 0 = match update_every
    learner: str = "sac"
    cem_population: int = 8
    cem_iters: int = 4
    cem_elite_frac: float = 0.25
    cem_episodes: int = 1
    cem_sigma: float = 0.5
    cem_hidden: tuple = (8, 8)

    def __post_init__(self):
        for name in ("max_steps", "eval_every", "eval_episodes", "batch_size",
                     "replay_capacity", "episode_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class TrainStats:
    steps: int = 0
    final_eval_return: float = float("nan")
    success_fraction: float = 0.0
    final_success_steps: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (step, mean_return, success_rate)
    stopped_early: bool = False
    diverged: bool = False


# -- observations and actions ---------------------------------------------------


def build_observation(world: OccupancyWorld, guide: OptionGuide,
                      c: Configuration) -> np.ndarray:
    """Normalized configuration, vector to the nearest guide point, and the
    vector from that point to the guide's end."""
    ex, ey = world.extent
    hx, hy = ex / 2.0, ey / 2.0
    xy = guide.point_array()
    d2 = (xy[:, 0] - c.x) ** 2 + (xy[:, 1] - c.y) ** 2
    i = int(np.argmin(d2))
    px, py = xy[i]
    gx, gy = xy[-1]
    parts = [c.x / hx - 1.0, c.y / hy - 1.0]
    if world.kinematics is Kinematics.UNICYCLE:
        theta = c.theta if c.theta is not None else 0.0
        parts.extend([math.cos(theta), math.sin(theta)])
    parts.extend([(px - c.x) / hx, (py - c.y) / hy,
                  (gx - px) / hx, (gy - py) / hy])
    return np.array(parts)


def observation_dim(world: OccupancyWorld) -> int:
    return 8 if world.kinematics is Kinematics.UNICYCLE else 6


def displacement_scale(world: OccupancyWorld) -> float:
    if world.kinematics is Kinematics.UNICYCLE:
        return 2.0 * world.v_max
    return world.max_step


def action_from_displacement(world: OccupancyWorld, c: Configuration,
                             u: np.ndarray, scale: float):
    """Turn a normalized displacement command into a bounded world action."""
    target = (c.x + float(u[0]) * scale, c.y + float(u[1]) * scale)
    return steer_toward(world, c, target)


# -- policy ----------------------------------------------------------------------


@dataclass
class Policy:
    """Squashed-Gaussian actor bound to the guide that defines its inputs."""

    actor: Mlp
    guide: OptionGuide
    extent: tuple
    unicycle: bool
    act_scale: float

    def _heads(self, obs: np.ndarray):
        out = mlp_forward(self.actor, obs)
        a = self.actor.n_out // 2
        return out[:a], out[a:]

    def greedy_displacement(self, obs: np.ndarray) -> np.ndarray:
        mu, _ = self._heads(obs)
        return np.tanh(mu)

    def sample_displacement(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu, raw = self._heads(obs)
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)
        return np.tanh(mu + np.exp(log_std) * rng.standard_normal(mu.shape))

    def act(self, world: OccupancyWorld, c: Configuration, greedy: bool = True,
            rng: np.random.Generator | None = None):
        obs = build_observation(world, self.guide, c)
        u = (self.greedy_displacement(obs) if greedy
             else self.sample_displacement(obs, rng))
        return action_from_displacement(world, c, u, self.act_scale)


class ScriptedPolicy:
    """Oracle policy that tracks a fixed waypoint list; used as a test double."""

    def __init__(self, waypoints, tol=0.5):
        self.waypoints = list(waypoints)
        self.tol = tol
        self._next = 0

    def reset(self):
        self._next = 0

    def act(self, world, c, greedy=True, rng=None):
        while (self._next < len(self.waypoints) - 1
               and c.distance_to(self.waypoints[self._next]) <= self.tol):
            self._next += 1
        return steer_toward(world, c, self.waypoints[self._next].xy)


# -- environments -----------------------------------------------------------------


def _sample_in_region(world: OccupancyWorld, region: Region,
                      rng: np.random.Generator) -> Configuration:
    cells = sorted(region.cells)
    ix, iy = cells[int(rng.integers(len(cells)))]
    jx, jy = rng.uniform(0.0, 1.0, size=2)
    theta = None
    if world.kinematics is Kinematics.UNICYCLE:
        theta = float(rng.uniform(-math.pi, math.pi))
    return Configuration((ix + jx) * world.cell_size, (iy + jy) * world.cell_size, theta)


class OptionEnv:
    """Rollout environment for one option guide with the dense pseudo-reward.

    Episodes start uniformly inside the initiation region and terminate on
    entering the termination region (success), leaving the allowed states
    (failure), or at the step limit (truncation, not a terminal for
    bootstrapping purposes).
    """

    def __init__(self, world: OccupancyWorld, rbvd: RegionVoronoi,
                 guide: OptionGuide, episode_limit: int):
        self.world = world
        self.rbvd = rbvd
        self.guide = guide
        self.episode_limit = episode_limit
        self.scale = displacement_scale(world)
        self.c: Configuration | None = None
        self.t = 0

    def _terminal(self, c: Configuration) -> bool:
        return self.world.cell_of(c.x, c.y) in self.guide.termination.cells

    def reset(self, rng: np.random.Generator):
        """Returns (obs, done, success); done=True means the start is terminal."""
        self.c = _sample_in_region(self.world, self.guide.initiation, rng)
        self.t = 0
        done = self._terminal(self.c)
        return build_observation(self.world, self.guide, self.c), done, done

    def step(self, u: np.ndarray, rng: np.random.Generator):
        a = action_from_displacement(self.world, self.c, u, self.scale)
        self.c = step(self.world, self.c, a, rng)
        self.t += 1
        r = pseudo_reward(self.guide, self.rbvd, self.c)
        success = self._terminal(self.c)
        failed = (not success and r == self.guide.penalty_reward)
        done = success or failed
        truncated = not done and self.t >= self.episode_limit
        obs = build_observation(self.world, self.guide, self.c)
        return obs, r, done, truncated, success


class GoalEnv:
    """Flat single-task environment: fixed start, terminal bonus at the goal."""

    def __init__(self, world: OccupancyWorld, x_i: Configuration, x_g: Configuration,
                 episode_limit: int, goal_tol: float | None = None,
                 terminal_reward: float = 1000.0, step_reward: float = -1.0):
        self.world = world
        self.x_i = x_i
        self.x_g = x_g
        self.goal_tol = goal_tol if goal_tol is not None else world.cell_size
        self.terminal_reward = terminal_reward
        self.step_reward = step_reward
        self.episode_limit = episode_limit
        self.scale = displacement_scale(world)
        goal_cells = frozenset(
            c for c in map(tuple, world.free_cells())
            if x_g.distance_to(world.cell_center(c)) < self.goal_tol)
        self.guide = OptionGuide(
            option_id="goal", initiation=Region(frozenset([world.cell_of(x_i.x, x_i.y)]),
                                                x_i),
            termination=Region(goal_cells or frozenset([world.cell_of(x_g.x, x_g.y)]),
                               x_g),
            points=[x_g], allowed_states=frozenset())
        self.c: Configuration | None = None
        self.t = 0

    def reset(self, rng: np.random.Generator):
        self.c = self.x_i
        self.t = 0
        done = self.c.distance_to(self.x_g) <= self.goal_tol
        return build_observation(self.world, self.guide, self.c), done, done

    def step(self, u: np.ndarray, rng: np.random.Generator):
        a = action_from_displacement(self.world, self.c, u, self.scale)
        self.c = step(self.world, self.c, a, rng)
        self.t += 1
        success = self.c.distance_to(self.x_g) <= self.goal_tol
        r = self.terminal_reward if success else self.step_reward
        done = success
        truncated = not done and self.t >= self.episode_limit
        obs = build_observation(self.world, self.guide, self.c)
        return obs, r, done, truncated, success


# -- replay buffer -----------------------------------------------------------------


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.obs2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.ptr = 0

    def add(self, obs, act, rew, obs2, done):
        fields = (obs, act, (rew,), obs2, (float(done),))
        if not all(np.all(np.isfinite(f)) for f in fields):
            raise DivergedTraining("non-finite transition")
        i = self.ptr
        self.obs[i] = obs
        self.act[i] = act
        self.rew[i] = rew
        self.obs2[i] = obs2
        self.done[i] = float(done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch)
        return (self.obs[idx], self.act[idx], self.rew[idx], self.obs2[idx],
                self.done[idx])


# -- actor-critic learner ------------------------------------------------------------


class SacLearner:
    """Twin-critic entropy-regularized actor-critic over the package Mlp."""

    def __init__(self, obs_dim: int, act_dim: int, cfg: TrainConfig,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.act_dim = act_dim
        self.actor = init_mlp(obs_dim, cfg.hidden, 2 * act_dim, rng)
        self.q1 = init_mlp(obs_dim + act_dim, cfg.hidden, 1, rng)
        self.q2 = init_mlp(obs_dim + act_dim, cfg.hidden, 1, rng)
        self.t1 = self.q1.copy()
        self.t2 = self.q2.copy()
        self.opt_actor = Adam(lr=cfg.actor_lr)
        self.opt_q1 = Adam(lr=cfg.critic_lr)
        self.opt_q2 = Adam(lr=cfg.critic_lr)

    def _policy_terms(self, out: np.ndarray, eps: np.ndarray):
        a = self.act_dim
        mu, raw = out[:, :a], out[:, a:]
        tanh_raw = np.tanh(raw)
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (tanh_raw + 1.0)
        std = np.exp(log_std)
        u = mu + std * eps
        t = np.tanh(u)
        logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI
                      - np.log(1.0 - t * t + 1e-6), axis=1)
        return mu, tanh_raw, log_std, std, u, t, logp

    def sample_action(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = mlp_forward(self.actor, obs[None, :])
        eps = rng.standard_normal((1, self.act_dim))
        *_, t, _ = self._policy_terms(out, eps)
        return t[0]

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> None:
        cfg = self.cfg
        obs, act, rew, obs2, done = buffer.sample(cfg.batch_size, rng)
        B = len(obs)
        alpha = cfg.entropy_coef
        rew = rew * cfg.reward_scale

        # critic targets from the current actor on the next state
        out2 = mlp_forward(self.actor, obs2)
        eps2 = rng.standard_normal((B, self.act_dim))
        *_, a2, logp2 = self._policy_terms(out2, eps2)
        xin2 = np.concatenate([obs2, a2], axis=1)
        qt = np.minimum(mlp_forward(self.t1, xin2)[:, 0],
                        mlp_forward(self.t2, xin2)[:, 0])
        y = rew + cfg.discount * (1.0 - done) * (qt - alpha * logp2)

        xin = np.concatenate([obs, act], axis=1)
        for net, opt in ((self.q1, self.opt_q1), (self.q2, self.opt_q2)):
            q, cache = mlp_forward_cached(net, xin)
            diff = q[:, 0] - y
            loss = float(np.mean(diff * diff))
            if not math.isfinite(loss):
                raise DivergedTraining("critic loss is not finite")
            grads, _ = mlp_backward(net, cache, (2.0 * diff / B)[:, None])
            opt.step(net, grads)

        # actor: minimize alpha*logp - min(Q1, Q2) under reparameterized actions
        out, cache_a = mlp_forward_cached(self.actor, obs)
        eps = rng.standard_normal((B, self.act_dim))
        mu, tanh_raw, log_std, std, u, t, logp = self._policy_terms(out, eps)
        xa = np.concatenate([obs, t], axis=1)
        q1v, cache1 = mlp_forward_cached(self.q1, xa)
        q2v, cache2 = mlp_forward_cached(self.q2, xa)
        q1v, q2v = q1v[:, 0], q2v[:, 0]
        use1 = q1v <= q2v
        actor_loss = float(np.mean(alpha * logp - np.where(use1, q1v, q2v)))
        if not math.isfinite(actor_loss):
            raise DivergedTraining("actor loss is not finite")
        up1 = np.where(use1, -1.0 / B, 0.0)[:, None]
        up2 = np.where(use1, 0.0, -1.0 / B)[:, None]
        _, din1 = mlp_backward(self.q1, cache1, up1)
        _, din2 = mlp_backward(self.q2, cache2, up2)
        dl_da = din1[:, obs.shape[1]:] + din2[:, obs.shape[1]:]

        one_m_t2 = 1.0 - t * t
        dlogp_du = 2.0 * t * one_m_t2 / (one_m_t2 + 1e-6)
        dl_du = (alpha / B) * dlogp_du + dl_da * one_m_t2
        dl_dmu = dl_du
        dl_dlogstd = dl_du * (u - mu) - (alpha / B)
        dl_draw = dl_dlogstd * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - tanh_raw ** 2)
        grads_a, _ = mlp_backward(self.actor, cache_a,
                                  np.concatenate([dl_dmu, dl_draw], axis=1))
        self.opt_actor.step(self.actor, grads_a)

        # polyak-averaged target networks
        for src, dst in ((self.q1, self.t1), (self.q2, self.t2)):
            for ps, pd in zip(src.parameters(), dst.parameters()):
                pd *= 1.0 - cfg.tau
                pd += cfg.tau * ps


def _make_policy(world: OccupancyWorld, actor: Mlp, guide: OptionGuide) -> Policy:
    return Policy(actor=actor, guide=guide, extent=world.extent,
                  unicycle=world.kinematics is Kinematics.UNICYCLE,
                  act_scale=displacement_scale(world))


def _greedy_eval(env, policy: Policy, episodes: int, rng: np.random.Generator):
    """Greedy rollouts; returns (mean_return, success_rate, success_steps)."""
    returns = []
    successes = 0
    success_steps = []
    for _ in range(episodes):
        obs, done, succ = env.reset(rng)
        if done:
            returns.append(env.guide.terminal_reward if succ else 0.0)
            successes += succ
            if succ:
                success_steps.append(0)
            continue
        total = 0.0
        steps = 0
        while True:
            u = policy.greedy_displacement(obs)
            obs, r, done, truncated, succ = env.step(u, rng)
            total += r
            steps += 1
            if done or truncated:
                break
        returns.append(total)
        if succ:
            successes += 1
            success_steps.append(steps)
    return float(np.mean(returns)), successes / episodes, success_steps


def _train_sac(env, cfg: TrainConfig, rng: np.random.Generator):
    world = env.world
    obs_dim = observation_dim(world)
    learner = SacLearner(obs_dim, 2, cfg, spawn(rng))
    buffer = ReplayBuffer(cfg.replay_capacity, obs_dim, 2)
    policy = _make_policy(world, learner.actor, env.guide)
    stats = TrainStats()

    def gate(step_count: int) -> bool:
        mean_ret, succ, succ_steps = _greedy_eval(env, policy, cfg.eval_episodes,
                                                  spawn(rng))
        stats.evals.append((step_count, mean_ret, succ))
        stats.final_eval_return = mean_ret
        stats.success_fraction = succ
        stats.final_success_steps = succ_steps
        return mean_ret >= cfg.stop_avg_reward

    if gate(0):
        stats.stopped_early = True
        return policy, stats

    obs, done, _ = env.reset(rng)
    while done:  # skip starts that are already terminal
        obs, done, _ = env.reset(rng)
    steps = 0
    try:
        while steps < cfg.max_steps:
            if steps < cfg.start_steps:
                u = rng.uniform(-1.0, 1.0, size=2)
            else:
                u = learner.sample_action(obs, rng)
            obs2, r, done, truncated, _ = env.step(u, rng)
            buffer.add(obs, u, r, obs2, done)
            steps += 1
            obs = obs2
            if done or truncated:
                obs, done, _ = env.reset(rng)
                while done:
                    obs, done, _ = env.reset(rng)
            if steps >= cfg.start_steps and steps % cfg.update_every == 0:
                rounds = cfg.updates_per_round or cfg.update_every
                for _ in range(rounds):
                    learner.update(buffer, rng)
            if steps % cfg.eval_every == 0:
                if gate(steps):
                    stats.stopped_early = True
                    break
    except DivergedTraining:
        stats.diverged = True
    stats.steps = steps
    if not stats.evals or stats.evals[-1][0] != steps:
        gate(steps)
    return policy, stats


def _train_cem(env, cfg: TrainConfig, rng: np.random.Generator):
    """Cross-entropy search over actor parameters; smoke-test fallback."""
    world = env.world
    obs_dim = observation_dim(world)
    template = init_mlp(obs_dim, cfg.cem_hidden, 4, spawn(rng))
    mean = template.flat()
    sigma = np.full(mean.shape, cfg.cem_sigma)
    stats = TrainStats()
    policy = _make_policy(world, template, env.guide)
    steps = 0
    n_elite = max(1, int(cfg.cem_population * cfg.cem_elite_frac))

    def run_candidate(vec) -> tuple[float, int]:
        net = template.copy()
        net.set_flat(vec)
        cand = _make_policy(world, net, env.guide)
        total = 0.0
        used = 0
        for _ in range(cfg.cem_episodes):
            obs, done, succ = env.reset(rng)
            if done:
                total += env.guide.terminal_reward if succ else 0.0
                continue
            while True:
                u = cand.greedy_displacement(obs)
                obs, r, done, truncated, _ = env.step(u, rng)
                total += r
                used += 1
                if done or truncated:
                    break
        return total / cfg.cem_episodes, used

    for _ in range(cfg.cem_iters):
        if steps >= cfg.max_steps:
            break
        pop = mean[None, :] + sigma[None, :] * rng.standard_normal(
            (cfg.cem_population, mean.size))
        scores = np.empty(cfg.cem_population)
        for i in range(cfg.cem_population):
            scores[i], used = run_candidate(pop[i])
            steps += used
        elite = pop[np.argsort(-scores)[:n_elite]]
        mean = elite.mean(axis=0)
        sigma = elite.std(axis=0) + 1e-3

    template.set_flat(mean)
    stats.steps = steps
    mean_ret, succ, succ_steps = _greedy_eval(env, policy, cfg.eval_episodes,
                                              spawn(rng))
    stats.evals.append((steps, mean_ret, succ))
    stats.final_eval_return = mean_ret
    stats.success_fraction = succ
    stats.final_success_steps = succ_steps
    stats.stopped_early = mean_ret >= cfg.stop_avg_reward
    return policy, stats


def _train(env, cfg: TrainConfig, rng: np.random.Generator):
    if cfg.learner == "sac":
        return _train_sac(env, cfg, rng)
    if cfg.learner == "cem":
        return _train_cem(env, cfg, rng)
    raise ValueError(f"unknown learner {cfg.learner!r}")


def train_option_policy(world: OccupancyWorld, guide: OptionGuide,
                        rbvd: RegionVoronoi, cfg: TrainConfig,
                        rng: np.random.Generator):
    """Train a policy for one option guide; returns (Policy, TrainStats)."""
    env = OptionEnv(world, rbvd, guide, cfg.episode_limit)
    return _train(env, cfg, rng)


def train_monolithic_policy(world: OccupancyWorld, x_i: Configuration,
                            x_g: Configuration, cfg: TrainConfig,
                            rng: np.random.Generator,
                            goal_tol: float | None = None):
    """Flat baseline: one policy from x_i to x_g with terminal +1000, step -1."""
    if collision(world, x_i) or collision(world, x_g):
        raise ValueError("endpoints must be collision-free")
    env = GoalEnv(world, x_i, x_g, cfg.episode_limit, goal_tol=goal_tol)
    return _train(env, cfg, rng)


def evaluate_policy(world: OccupancyWorld, policy, start, stop_predicate,
                    episodes: int, step_limit: int, rng: np.random.Generator):
    """Greedy rollouts from a Region or fixed Configuration until the stop
    predicate holds; returns {"success_rate", "mean_steps"}."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    successes = 0
    steps_taken = []
    for _ in range(episodes):
        if isinstance(start, Region):
            c = _sample_in_region(world, start, rng)
        else:
            c = start
        if hasattr(policy, "reset"):
            policy.reset()
        steps = 0
        ok = stop_predicate(c)
        while not ok and steps < step_limit:
            a = policy.act(world, c, greedy=True)
            c = step(world, c, a, rng)
            steps += 1
            ok = stop_predicate(c)
        successes += ok
        steps_taken.append(steps)
    return {"success_rate": successes / episodes,
            "mean_steps": float(np.mean(steps_taken))}
