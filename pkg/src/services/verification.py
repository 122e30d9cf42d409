import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from src.core.config import settings
from src.core.exceptions import SimulationException
from src.models.markov import Generator
from src.models.problem import ProblemSpec
from src.models.simulation import RegimePath, SimConfig, SimulationReport
from src.models.solution import SolutionField, StoppingRule
from src.services.hjb_solver import central_gradient
from src.services.problem_model import ambiguity_penalty, clamp_control

logger = logging.getLogger(__name__)


def batch_generator(seed: int, batch_index: int) -> np.random.Generator:
    """Поток PCG64 для пачки путей batch_index"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(batch_index,))))


def sample_regime_path(chain: Generator, i0: int, horizon: float,
                       rng: np.random.Generator) -> RegimePath:
    """
    Траектория цепи на [0, T]: экспоненциальные времена пребывания
    с интенсивностью −λ_ii, переход в j ≠ i с вероятностью λ_ij/(−λ_ii).
    """
    if horizon <= 0:
        raise SimulationException(f"horizon must be positive, got {horizon}")
    if not 0 <= i0 < chain.m:
        raise SimulationException(f"initial regime {i0 + 1} outside 1..{chain.m}")

    times, states = [0.0], [i0]
    t, state = 0.0, i0
    while True:
        rate = chain.exit_rate(state)
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= horizon:
            break
        probs = np.clip(chain.rates[state], 0.0, None)
        probs[state] = 0.0
        state = int(rng.choice(chain.m, p=probs / probs.sum()))
        times.append(t)
        states.append(state)
    return RegimePath(jump_times=np.asarray(times), states=np.asarray(states, dtype=int), horizon=horizon)


def shift_thresholds(rule: StoppingRule, delta: float) -> StoppingRule:
    """Пороговое правило со сдвигом всех порогов на delta (для проверки неоптимальности)"""
    x = rule.grid.nodes
    thresholds = tuple(None if level is None else level + delta for level in rule.thresholds)
    masks = rule.masks.copy()
    for i, level in enumerate(thresholds):
        if level is not None:
            masks[:, i] = x < level - 1e-12
    masks.setflags(write=False)
    return StoppingRule(tol_region=rule.tol_region, masks=masks, thresholds=thresholds, grid=rule.grid)


@dataclass
class _BatchResult:
    rewards: np.ndarray
    stop_times: np.ndarray
    stopped: np.ndarray
    escapes: int


class _PathEngine:
    """
    Схема Эйлера–Маруямы для (X, α) под мерой ℚ с остановкой по правилу.

    Все данные только для чтения, пачки путей считаются независимо.
    """

    def __init__(self, spec: ProblemSpec, sol: SolutionField, rule: StoppingRule, cfg: SimConfig):
        self.spec = spec
        self.rule = rule
        self.cfg = cfg
        self.m = spec.m
        self.x_min = sol.grid.x_min
        self.x_max = sol.grid.x_max
        self.h = sol.grid.h
        self.nodes = sol.grid.nodes
        self.dv = central_gradient(sol.values, sol.grid.h)
        self.horizon = cfg.resolved_horizon(spec.r)
        self.n_steps = int(np.ceil(self.horizon / cfg.dt - 1e-12))

        rates = spec.chain.rates
        self.exit_rates = -np.diag(rates).copy()
        jump = np.clip(rates, 0.0, None)
        np.fill_diagonal(jump, 0.0)
        cumulative = np.cumsum(jump, axis=1)
        totals = cumulative[:, -1:].copy()
        totals[totals == 0.0] = 1.0
        self.jump_cdf = cumulative / totals

    # --- правило остановки ---

    def continuation(self, x: np.ndarray, regime: np.ndarray) -> np.ndarray:
        result = np.zeros(x.shape[0], dtype=bool)
        for i in range(self.m):
            sel = regime == i
            if not sel.any():
                continue
            level = self.rule.thresholds[i]
            if level is not None:
                result[sel] = x[sel] < level
            else:
                node = np.clip(np.rint((x[sel] - self.x_min) / self.h).astype(int), 0, self.nodes.shape[0] - 1)
                result[sel] = self.rule.masks[node, i]
        return result

    # --- коэффициенты по смешанным режимам ---

    def _per_regime(self, fn: Callable, x: np.ndarray, regime: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        for i in range(self.m):
            sel = regime == i
            if sel.any():
                out[sel] = fn(x[sel], i)
        return out

    def control(self, x: np.ndarray, regime: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        policy = self.cfg.q_policy
        if policy == "zero":
            return np.zeros_like(x)
        if policy == "constant":
            return np.full_like(x, self.cfg.q_constant)
        dv = np.empty_like(x)
        for i in range(self.m):
            sel = regime == i
            if sel.any():
                dv[sel] = np.interp(x[sel], self.nodes, self.dv[:, i])
        return clamp_control(-self.spec.theta * sigma * dv, self.spec.q_max)

    def _advance(self, x, regime, t, seg, running, rng):
        """Один подшаг длины seg (массив) для живых путей"""
        spec = self.spec
        b = self._per_regime(spec.coeffs.drift, x, regime)
        sigma = self._per_regime(spec.coeffs.volatility, x, regime)
        f = self._per_regime(spec.rewards.running, x, regime)
        q = self.control(x, regime, sigma)

        running += np.exp(-spec.r * t) * (f + ambiguity_penalty(spec.theta, q)) * seg
        z = rng.standard_normal(x.shape[0])
        x += (b + sigma * q) * seg + sigma * np.sqrt(seg) * z

    def _draw_holding(self, regime: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        rates = self.exit_rates[regime]
        holding = np.full(regime.shape[0], np.inf)
        active = rates > 0.0
        holding[active] = rng.exponential(1.0, size=int(active.sum())) / rates[active]
        return holding

    def _jump(self, regime: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(regime.shape[0])
        return np.argmax(u[:, None] < self.jump_cdf[regime], axis=1)

    def run_batch(self, n_paths: int, rng: np.random.Generator) -> _BatchResult:
        spec, cfg = self.spec, self.cfg
        dt = cfg.dt

        x = np.full(n_paths, cfg.x0, dtype=float)
        regime = np.full(n_paths, cfg.i0, dtype=int)
        running = np.zeros(n_paths)
        payoff = np.zeros(n_paths)
        stop_times = np.full(n_paths, self.horizon)
        stopped = np.zeros(n_paths, dtype=bool)
        escapes = 0

        next_jump = self._draw_holding(regime, rng)
        alive = self.continuation(x, regime)
        if not alive.all():
            idx = np.flatnonzero(~alive)
            payoff[idx] = self._obstacle(x[idx], regime[idx])
            stop_times[idx] = 0.0
            stopped[idx] = True

        for k in range(self.n_steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            t0 = k * dt
            t1 = min((k + 1) * dt, self.horizon)

            xs, rs, run, nj = x[idx], regime[idx], running[idx], next_jump[idx]
            cur = np.full(idx.size, t0)
            # Шаг дробится в моменты скачков цепи
            while True:
                seg_end = np.minimum(nj, t1)
                self._advance(xs, rs, cur, seg_end - cur, run, rng)
                jumped = nj < t1
                if not jumped.any():
                    break
                j = np.flatnonzero(jumped)
                rs[j] = self._jump(rs[j], rng)
                nj[j] = nj[j] + self._draw_holding(rs[j], rng)
                cur = seg_end

            x[idx], regime[idx], running[idx], next_jump[idx] = xs, rs, run, nj

            escaped = (xs < self.x_min) | (xs > self.x_max)
            if escaped.any():
                escapes += int(escaped.sum())
                xs = np.clip(xs, self.x_min, self.x_max)
                x[idx] = xs
            if t1 >= self.horizon:
                # Живые на горизонте пути дают только накопленный интеграл
                break
            stop = escaped | ~self.continuation(xs, rs)
            if stop.any():
                s = idx[stop]
                payoff[s] = np.exp(-spec.r * t1) * self._obstacle(x[s], regime[s])
                stop_times[s] = t1
                stopped[s] = True
                alive[s] = False

        return _BatchResult(rewards=running + payoff, stop_times=stop_times, stopped=stopped, escapes=escapes)

    def _obstacle(self, x: np.ndarray, regime: np.ndarray) -> np.ndarray:
        return self._per_regime(self.spec.rewards.terminal, x, regime)


def _validate(spec: ProblemSpec, sol: SolutionField, rule: StoppingRule, cfg: SimConfig):
    if not sol.grid.x_min - 1e-12 <= cfg.x0 <= sol.grid.x_max + 1e-12:
        raise SimulationException(f"x0={cfg.x0} outside [{sol.grid.x_min}, {sol.grid.x_max}]")
    if not 0 <= cfg.i0 < spec.m:
        raise SimulationException(f"initial regime {cfg.i0 + 1} outside 1..{spec.m}")
    if rule.m != spec.m or sol.m != spec.m:
        raise SimulationException(f"rule/solution regimes ({rule.m}/{sol.m}) differ from problem m={spec.m}")


def _batches(cfg: SimConfig) -> List[int]:
    full, rest = divmod(cfg.n_paths, cfg.batch_size)
    return [cfg.batch_size] * full + ([rest] if rest else [])


def _reduce(cfg: SimConfig, results: List[_BatchResult], horizon: float) -> SimulationReport:
    rewards = np.concatenate([r.rewards for r in results])
    stop_times = np.concatenate([r.stop_times for r in results])
    stopped = np.concatenate([r.stopped for r in results])
    escapes = sum(r.escapes for r in results)

    n = rewards.shape[0]
    std_error = float(rewards.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    if escapes:
        logger.warning(f"DomainEscape: {escapes} of {n} paths left the domain before stopping")
    return SimulationReport(
        x0=cfg.x0,
        i0=cfg.i0,
        policy=cfg.policy_label,
        estimate=float(rewards.mean()),
        std_error=std_error,
        n_paths=n,
        fraction_stopped_before_T=float(stopped.mean()),
        mean_stop_time=float(np.minimum(stop_times, horizon).mean()),
        domain_escapes=escapes,
    )


def simulate_reward(spec: ProblemSpec, sol: SolutionField, rule: StoppingRule,
                    cfg: SimConfig) -> SimulationReport:
    """
    Оценка J(x0, i0; τ, q) методом Монте-Карло под ℚ-динамикой.

    Пачки по cfg.batch_size путей, у каждой свой поток RNG;
    результат не зависит от числа потоков.
    """
    _validate(spec, sol, rule, cfg)
    engine = _PathEngine(spec, sol, rule, cfg)
    start = time.perf_counter()
    results = [
        engine.run_batch(size, batch_generator(cfg.seed, b)) for b, size in enumerate(_batches(cfg))
    ]
    report = _reduce(cfg, results, engine.horizon)
    logger.info(
        f"Simulated {report.n_paths} paths from x0={cfg.x0}, regime {cfg.i0 + 1}: "
        f"{report.estimate:.6f} ± {report.std_error:.6f} in {time.perf_counter() - start:.2f}s"
    )
    return report


async def simulate_reward_async(spec: ProblemSpec, sol: SolutionField, rule: StoppingRule,
                                cfg: SimConfig, threads: Optional[int] = None) -> SimulationReport:
    """То же, что simulate_reward, пачки выполняются в пуле потоков"""
    _validate(spec, sol, rule, cfg)
    engine = _PathEngine(spec, sol, rule, cfg)
    sizes = _batches(cfg)

    loop = asyncio.get_running_loop()
    workers = min(threads or settings.threads, len(sizes))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tasks = [
            loop.run_in_executor(pool, engine.run_batch, size, batch_generator(cfg.seed, b))
            for b, size in enumerate(sizes)
        ]
        results = await asyncio.gather(*tasks)
    return _reduce(cfg, list(results), engine.horizon)
