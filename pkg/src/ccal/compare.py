"""Train the three heads side by side over several seeds and tabulate retrieval.

Every model shares the data split, tower architecture and training settings;
seeds change weight initialization and minibatch order only.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import data, net, retrieval, train

log = logging.getLogger(__name__)

MODEL_HEADS = {"dcca": "tno", "learned": "learned-rank", "ccal": "ccal-rank"}


@dataclass(frozen=True)
class CompareConfig:
    train_cfg: train.TrainConfig
    hidden: Tuple[int, ...] = (64,)
    k: int = 16
    seeds: Tuple[int, ...] = (0, 1, 2)
    models: Tuple[str, ...] = ("dcca", "learned", "ccal")
    train_fraction: float = 1.0
    subsample_seed: int = 0


@dataclass
class SeedResult:
    model: str
    seed: int
    reports: Dict[str, retrieval.RetrievalReport]
    profile: np.ndarray
    best_epoch: int
    epochs_run: int

    @property
    def mean_mrr(self):
        return 0.5 * (self.reports["x2y"].mrr + self.reports["y2x"].mrr)


@dataclass
class CompareResult:
    config: CompareConfig
    runs: List[SeedResult] = field(default_factory=list)

    def by_model(self, model):
        return [r for r in self.runs if r.model == model]


def run_one(model_name, seed, train_data, val_data, test_data, cfg):
    head = MODEL_HEADS[model_name]
    tcfg = replace(cfg.train_cfg, seed=seed)
    spec_f = net.TowerSpec((train_data.dx,) + tuple(cfg.hidden) + (cfg.k,))
    spec_g = net.TowerSpec((train_data.dy,) + tuple(cfg.hidden) + (cfg.k,))
    model = net.DualNet.init(spec_f, spec_g, head, seed)
    model, tlog = train.train(model, train_data, val_data, tcfg)
    if head == "tno":
        train.refit(model, train_data, tcfg.reg)
    reports = {d: retrieval.evaluate(model, test_data, d) for d in retrieval.DIRECTIONS}
    profile = retrieval.correlation_profile(model, test_data, tcfg.reg)
    return SeedResult(model_name, seed, reports, profile, tlog.best_epoch, len(tlog.epochs))


def run_compare(train_data, val_data, test_data, cfg, progress=None):
    if cfg.train_fraction < 1.0:
        train_data = data.subsample(train_data, cfg.train_fraction, cfg.subsample_seed)
    result = CompareResult(cfg)
    for seed in cfg.seeds:
        for name in cfg.models:
            res = run_one(name, seed, train_data, val_data, test_data, cfg)
            result.runs.append(res)
            log.info("%s seed %d: mean MRR %.2f (best epoch %d)", name, seed, res.mean_mrr, res.best_epoch)
            if progress:
                progress(res)
    return result


def _fmt(values, digits=2):
    values = np.asarray(values, dtype=np.float64)
    sd = values.std(ddof=1) if values.size > 1 else 0.0
    return f"{values.mean():.{digits}f}±{sd:.{digits}f}"


def format_report(result, title=""):
    cfg = result.config
    lines = [f"# compare {title}".rstrip(),
             f"# train_fraction={cfg.train_fraction:g} seeds={','.join(map(str, cfg.seeds))} "
             f"k={cfg.k} hidden={','.join(map(str, cfg.hidden))}",
             "model\tdirection\t" + "\t".join(retrieval.REPORT_FIELDS)]
    for name in cfg.models:
        runs = result.by_model(name)
        for direction in retrieval.DIRECTIONS:
            cols = np.array([r.reports[direction].values() for r in runs], dtype=np.float64)
            lines.append("\t".join([name, direction] + [_fmt(cols[:, j]) for j in range(cols.shape[1])]))
    lines.append("# correlation profile (test set, topmost tower outputs)")
    lines.append("model\tsum\tcoefficients")
    for name in cfg.models:
        profiles = np.array([r.profile for r in result.by_model(name)])
        coeffs = " ".join(f"{c:.3f}" for c in profiles.mean(axis=0))
        lines.append(f"{name}\t{_fmt(profiles.sum(axis=1), 3)}\t{coeffs}")
    lines.append("# per-seed mean MRR")
    for r in result.runs:
        lines.append(f"{r.model}\tseed={r.seed}\t{r.mean_mrr:.4f}\tprofile_sum={r.profile.sum():.4f}"
                     f"\tbest_epoch={r.best_epoch}")
    return "\n".join(lines) + "\n"
