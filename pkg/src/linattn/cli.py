"""Config-driven experiment runner.

Every pipeline is a subcommand reading a strict JSON config (unknown keys
are rejected) and writing machine-readable artifacts into the output
directory: report.json with the fully resolved config plus per-stage
results, CSV tables for anything tabular, and a separate timings.json
(excluded from the byte-reproducibility contract, which every other output
honors). Exit codes: 0 success, 1 config/validation error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, networks
from .attacks import AttackConfig, make_gradient_provider, run_attack
from .attention import attention_kernel, gram, polynomial_kernel
from .datasets import LabeledDataset, check_incoherence, load_dataset
from .exceptions import IllConditioned, TrainingDiverged
from .experiments import (
    DESK_LAMBDA,
    ExperimentData,
    desk_fig1,
    desk_table2,
    desk_table4,
    influence_scores,
    make_synthetic,
    malleability_experiment,
)
from .influence import stability_check
from .malleability import run_intervention, select_high_influence
from .ntk import empirical_ntk, infinite_relu_ntk, sequential_ntk
from .reports import save_dataset_csv, save_matrix_csv, save_records_csv, write_json
from .spectral import verify_cubic_conditioning, verify_spectral_transfer
from .train import (
    TrainConfig,
    encode_targets,
    init_network,
    loss_landscape,
    ntk_distance_sweep,
    train,
)

SUBCOMMANDS = (
    "gen-data", "kernel", "spectral-check", "ntk-sweep", "influence",
    "attack", "malleability", "intervene", "train", "landscape",
)
FIGURES = ("fig1", "table2-desk", "table4-desk")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _check_keys(block: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


DATASET_KEYS = {
    "source", "n", "d", "seed", "kappa", "singular_values", "coord_scale",
    "n_test", "path", "labels_path", "format", "class_filter", "max_per_class",
    "mean", "std", "test_fraction",
}
TRAIN_KEYS = {
    "learning_rate", "epochs", "batch_size", "l2_lambda", "optimizer",
    "seed", "plateau_tol", "width", "adversarial",
}
ATTACK_KEYS = {"eps", "alpha", "iters", "decay", "kind"}
MALLEABILITY_KEYS = {"tau", "mu_trials", "simultaneous"}
SPECTRAL_KEYS = {"layers", "transfer_powers"}
LANDSCAPE_KEYS = {"radius", "grid", "seed"}
INTERVENTION_KEYS = {"kind"}
KERNEL_KEYS = {"kind", "degree", "normalize"}
TOP_KEYS = {
    "dataset", "architecture", "widths", "train", "attack", "malleability",
    "spectral", "landscape", "intervention", "kernel", "lambda", "output_dir",
}


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(cfg, TOP_KEYS, set(), "config")
    return cfg


def _build_dataset(cfg: dict, seed_override: int | None) -> tuple[ExperimentData, dict]:
    block = dict(cfg.get("dataset") or {})
    _check_keys(block, DATASET_KEYS, {"source"}, "dataset")
    if seed_override is not None:
        block["seed"] = seed_override
    source = block["source"]
    seed = int(block.get("seed", 0))
    if source in ("sphere", "spectrum"):
        n = int(block.get("n", 32))
        d = int(block.get("d", 64))
        n_test = int(block.get("n_test", max(1, n // 4)))
        sv = block.get("singular_values")
        data = make_synthetic(
            source, n, n_test, d, seed,
            kappa=block.get("kappa"),
            singular_values=None if sv is None else [float(v) for v in sv],
        )
        coord = block.get("coord_scale")
        if coord is not None:
            # rescale rows so a typical coordinate is coord (breaks unit
            # norms deliberately; attack budgets are absolute)
            factor_train = coord * np.sqrt(d) / np.mean(np.linalg.norm(data.train.X, axis=1))
            factor_test = coord * np.sqrt(d) / np.mean(np.linalg.norm(data.test.X, axis=1))
            data = ExperimentData(
                train=LabeledDataset(
                    X=data.train.X * factor_train, y=data.train.y,
                    num_classes=data.train.num_classes,
                ),
                test=LabeledDataset(
                    X=data.test.X * factor_test, y=data.test.y,
                    num_classes=data.test.num_classes,
                ),
                kappa_G=data.kappa_G,
                tag=data.tag,
            )
    elif source in ("csv", "idx"):
        if "path" not in block:
            raise ConfigError("file-backed dataset needs 'path'")
        ds = load_dataset(
            block["path"],
            format=block.get("format", source),
            class_filter=block.get("class_filter"),
            max_per_class=block.get("max_per_class"),
            mean=block.get("mean"),
            std=block.get("std"),
            labels_path=block.get("labels_path"),
        )
        frac = float(block.get("test_fraction", 0.25))
        rng = np.random.default_rng(seed)
        order = rng.permutation(ds.n)
        n_test = max(1, int(round(frac * ds.n)))
        test_idx, train_idx = order[:n_test], order[n_test:]
        if train_idx.size == 0:
            raise ConfigError("test_fraction leaves no training data")
        data = ExperimentData(
            train=LabeledDataset(X=ds.X[train_idx], y=ds.y[train_idx],
                                 num_classes=ds.num_classes),
            test=LabeledDataset(X=ds.X[test_idx], y=ds.y[test_idx],
                                num_classes=ds.num_classes),
            kappa_G=float(np.linalg.cond(ds.X[train_idx] @ ds.X[train_idx].T)),
            tag=source,
        )
    else:
        raise ConfigError(f"unknown dataset source {source!r}")
    return data, block


def _build_train_config(cfg: dict, seed_override: int | None) -> tuple[TrainConfig, int]:
    block = dict(cfg.get("train") or {})
    _check_keys(block, TRAIN_KEYS, set(), "train")
    width = int(block.pop("width", 64))
    adv = block.pop("adversarial", None)
    if adv is not None:
        if adv is True:
            adv = _build_attack(cfg)
        else:
            _check_keys(adv, ATTACK_KEYS, set(), "train.adversarial")
            adv = AttackConfig(**adv)
    if seed_override is not None:
        block["seed"] = seed_override
    try:
        tc = TrainConfig(adversarial=adv, **block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc
    return tc, width


def _build_attack(cfg: dict) -> AttackConfig:
    block = dict(cfg.get("attack") or {})
    _check_keys(block, ATTACK_KEYS, set(), "attack")
    try:
        return AttackConfig(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad attack config: {exc}") from exc


def _architecture(cfg: dict) -> str:
    arch = cfg.get("architecture", "relu2l")
    if arch not in networks.ARCHITECTURES:
        raise ConfigError(f"architecture must be one of {networks.ARCHITECTURES}")
    return arch


def _lambda(cfg: dict) -> float:
    lam = float(cfg.get("lambda", DESK_LAMBDA))
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    return lam


class Runner:
    """One CLI invocation: resolved config in, artifact files out."""

    def __init__(self, cfg: dict, out_dir: Path, seed_override: int | None):
        self.cfg = cfg
        self.out = out_dir
        self.seed_override = seed_override
        self.stages: dict = {}
        self.timings: dict = {}

    def _timed(self, stage: str, fn):
        t0 = time.perf_counter()
        result = fn()
        self.timings[stage] = time.perf_counter() - t0
        return result

    def finish(self) -> None:
        config_bytes = json.dumps(self.cfg, sort_keys=True).encode()
        report = {
            "artifact_version": __version__,
            "config": self.cfg,
            "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
            "stages": self.stages,
            "timings_file": "timings.json",
        }
        write_json(self.out / "report.json", report)
        write_json(self.out / "timings.json", self.timings)

    # -- subcommand bodies ---------------------------------------------------

    def gen_data(self) -> None:
        data, block = self._timed("gen_data", lambda: _build_dataset(self.cfg, self.seed_override))
        save_dataset_csv(self.out / "train.csv", data.train.X, data.train.y)
        save_dataset_csv(self.out / "test.csv", data.test.X, data.test.y)
        norms = np.linalg.norm(data.train.X, axis=1)
        stage = {"n": data.train.n, "d": data.train.d, "n_test": data.test.n,
                 "kappa_G": data.kappa_G, "dataset": block}
        if np.allclose(norms, 1.0, atol=1e-10):
            stage["incoherence"] = check_incoherence(data.train.X)
        self.stages["gen_data"] = stage

    def kernel(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        block = dict(self.cfg.get("kernel") or {})
        _check_keys(block, KERNEL_KEYS, {"kind"}, "kernel")
        kind = block["kind"]
        X = data.train.X

        def build():
            if kind == "gram":
                return gram(X)
            if kind == "attention":
                return attention_kernel(X)
            if kind == "polynomial":
                return polynomial_kernel(X, int(block.get("degree", 3)))
            if kind == "arccos":
                return infinite_relu_ntk(X)
            if kind == "sequential":
                return sequential_ntk(X, normalize=bool(block.get("normalize", True)))
            raise ConfigError(f"unknown kernel kind {kind!r}")

        K = self._timed("kernel", build)
        save_matrix_csv(self.out / "kernel.csv", K)
        report = stability_check(K, _lambda(self.cfg))
        self.stages["kernel"] = {"kind": kind, "shape": list(K.shape),
                                 "stability": report}
        if not report.passed:
            raise IllConditioned(f"kernel stability checks failed: {report.to_dict()}")

    def spectral_check(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        block = dict(self.cfg.get("spectral") or {})
        _check_keys(block, SPECTRAL_KEYS, set(), "spectral")
        layers = int(block.get("layers", 1))
        powers = [int(k) for k in block.get("transfer_powers", [0, 1, 2, 3])]
        X = data.train.X

        def run():
            cond = verify_cubic_conditioning(X, layers=layers)
            norm_G = float(np.linalg.norm(X @ X.T, 2))
            transfer = {
                str(k): {
                    "residual": verify_spectral_transfer(X, k),
                    "allowance": 1e-9 * norm_G ** (k + 1),
                }
                for k in powers
            }
            return cond, transfer

        cond, transfer = self._timed("spectral_check", run)
        self.stages["spectral_check"] = {"conditioning": cond, "transfer": transfer}

    def ntk_sweep(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        widths = self.cfg.get("widths")
        if not isinstance(widths, list) or not widths:
            raise ConfigError("ntk-sweep needs a non-empty 'widths' list")
        tc, _ = _build_train_config(self.cfg, self.seed_override)
        curve = self._timed(
            "ntk_sweep",
            lambda: ntk_distance_sweep(
                data.train, [int(w) for w in widths], arch, tc, _lambda(self.cfg),
                test_data=data.test, dataset_tag=data.tag,
            ),
        )
        write_json(self.out / "curve.json", curve.to_records())
        save_records_csv(
            self.out / "curve.csv", curve.to_records(),
            ["width", "distance", "architecture", "dataset", "seed"],
        )
        self.stages["ntk_sweep"] = {"widths": curve.widths, "distances": curve.distances,
                                    "architecture": arch}

    def _trained_model(self, data: ExperimentData, arch: str):
        tc, width = _build_train_config(self.cfg, self.seed_override)
        outputs = 1 if data.train.num_classes <= 2 else data.train.num_classes
        net = init_network(width, data.train.d, init_scale=0.01, seed=tc.seed,
                           outputs=outputs)
        return train(net, data.train, arch, tc), tc, width

    def influence(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        model, tc, width = self._trained_model(data, arch)
        lam = _lambda(self.cfg)
        scores = self._timed(
            "influence", lambda: influence_scores(model, data.train, data.test, lam)
        )
        save_records_csv(
            self.out / "influence.csv",
            [{"index": i, "score": float(s)} for i, s in enumerate(scores)],
            ["index", "score"],
        )
        F = networks.network_features(arch, data.train.X, data.train.X)
        K = empirical_ntk(model.params, F)
        self.stages["influence"] = {
            "architecture": arch, "width": width, "lam": lam,
            "stability": stability_check(K, lam),
            "score_range": [float(scores.min()), float(scores.max())],
        }

    def attack(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        model, tc, width = self._trained_model(data, arch)
        atk = _build_attack(self.cfg)
        targets, _ = encode_targets(data.train.y, data.train.num_classes)

        def run():
            X_adv = data.train.X.copy()
            for i in range(data.train.n):
                provider = make_gradient_provider(
                    model.params, arch, data.train.X, index=i, loss=model.loss
                )
                X_adv[i] = run_attack(provider, data.train.X[i], targets[i], atk)
            return X_adv

        X_adv = self._timed("attack", run)
        save_dataset_csv(self.out / "attacked.csv", X_adv, data.train.y)
        worst = float(np.max(np.abs(X_adv - data.train.X)))
        self.stages["attack"] = {"kind": atk.kind, "eps": atk.eps,
                                 "max_linf_change": worst,
                                 "budget_respected": bool(worst <= atk.eps + 1e-12)}

    def malleability(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        block = dict(self.cfg.get("malleability") or {})
        _check_keys(block, MALLEABILITY_KEYS, set(), "malleability")
        tc, width = _build_train_config(self.cfg, self.seed_override)
        atk = _build_attack(self.cfg)
        result = self._timed(
            "malleability",
            lambda: malleability_experiment(
                data, arch, width, tc, atk,
                tau=float(block.get("tau", 0.1)),
                lam=_lambda(self.cfg),
                mu_trials=int(block.get("mu_trials", 0)),
                mu_seed=tc.seed,
                simultaneous=bool(block.get("simultaneous", True)),
            ),
        )
        write_json(self.out / "malleability.json", result.report)
        save_records_csv(
            self.out / "flips.csv", result.table,
            ["index", "I_orig", "I_adv", "selected", "flipped"],
        )
        self.stages["malleability"] = result.report

    def intervene(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        block = dict(self.cfg.get("intervention") or {})
        _check_keys(block, INTERVENTION_KEYS, {"kind"}, "intervention")
        mall = dict(self.cfg.get("malleability") or {})
        _check_keys(mall, MALLEABILITY_KEYS, set(), "malleability")
        model, tc, width = self._trained_model(data, arch)
        lam = _lambda(self.cfg)
        atk = _build_attack(self.cfg)
        targets, _ = encode_targets(data.train.y, data.train.num_classes)

        def run():
            scores = influence_scores(model, data.train, data.test, lam)
            out = run_intervention(
                data.train, scores, block["kind"], atk,
                tau=float(mall.get("tau", 0.1)),
                grad_factory=lambda i: make_gradient_provider(
                    model.params, arch, data.train.X, index=i, loss=model.loss
                ),
                targets=targets,
            )
            return scores, out

        scores, intervened = self._timed("intervene", run)
        save_dataset_csv(self.out / "intervened.csv", intervened.X, intervened.y)
        self.stages["intervene"] = {
            "kind": block["kind"], "n_before": data.train.n, "n_after": intervened.n,
            "n_selected": len(select_high_influence(scores, float(mall.get("tau", 0.1)))),
        }

    def train_cmd(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        model, tc, width = self._timed("train", lambda: self._trained_model(data, arch))
        save_records_csv(
            self.out / "loss_history.csv",
            [{"epoch": i + 1, "loss": v} for i, v in enumerate(model.loss_history)],
            ["epoch", "loss"],
        )
        self.stages["train"] = {
            "architecture": arch, "width": width, "epochs_run": len(model.loss_history),
            "final_loss": model.loss_history[-1] if model.loss_history else None,
            "loss_kind": model.loss,
        }

    def landscape(self) -> None:
        data, _ = _build_dataset(self.cfg, self.seed_override)
        arch = _architecture(self.cfg)
        block = dict(self.cfg.get("landscape") or {})
        _check_keys(block, LANDSCAPE_KEYS, set(), "landscape")
        model, tc, width = self._trained_model(data, arch)
        radius = float(block.get("radius", 0.5))
        grid = int(block.get("grid", 11))
        seed = int(block.get("seed", tc.seed))
        surface = self._timed(
            "landscape", lambda: loss_landscape(model, data.train, radius, grid, seed)
        )
        save_matrix_csv(self.out / "landscape.csv", surface)
        self.stages["landscape"] = {
            "grid": grid, "radius": radius,
            "center_loss": float(surface[grid // 2, grid // 2]),
            "min_loss": float(surface.min()), "max_loss": float(surface.max()),
        }


_KERNEL_KINDS = ("gram", "attention", "polynomial", "arccos", "sequential")


def _validate(name: str, cfg: dict) -> None:
    """Reject bad configs before any computation or output is produced."""
    block = dict(cfg.get("dataset") or {})
    _check_keys(block, DATASET_KEYS, {"source"}, "dataset")
    if block["source"] not in ("sphere", "spectrum", "csv", "idx"):
        raise ConfigError(f"unknown dataset source {block['source']!r}")
    if block["source"] in ("csv", "idx") and "path" not in block:
        raise ConfigError("file-backed dataset needs 'path'")
    _architecture(cfg)
    _lambda(cfg)
    if name in ("ntk-sweep", "influence", "attack", "malleability", "intervene",
                "train", "landscape"):
        tblock = dict(cfg.get("train") or {})
        _check_keys(tblock, TRAIN_KEYS, set(), "train")
        adv = tblock.pop("adversarial", None)
        if isinstance(adv, dict):
            _check_keys(adv, ATTACK_KEYS, set(), "train.adversarial")
            AttackConfig(**adv)
        tblock.pop("width", None)
        try:
            TrainConfig(**tblock)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad train config: {exc}") from exc
    if name in ("attack", "malleability", "intervene"):
        ablock = dict(cfg.get("attack") or {})
        _check_keys(ablock, ATTACK_KEYS, set(), "attack")
        try:
            AttackConfig(**ablock)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad attack config: {exc}") from exc
    if name == "ntk-sweep":
        widths = cfg.get("widths")
        if not isinstance(widths, list) or not widths:
            raise ConfigError("ntk-sweep needs a non-empty 'widths' list")
        if any(int(b) <= int(a) for a, b in zip(widths, widths[1:])):
            raise ConfigError("widths must be strictly increasing")
    if name == "kernel":
        kblock = dict(cfg.get("kernel") or {})
        _check_keys(kblock, KERNEL_KEYS, {"kind"}, "kernel")
        if kblock["kind"] not in _KERNEL_KINDS:
            raise ConfigError(f"kernel kind must be one of {_KERNEL_KINDS}")
    if name == "spectral-check":
        _check_keys(dict(cfg.get("spectral") or {}), SPECTRAL_KEYS, set(), "spectral")
    if name == "landscape":
        lblock = dict(cfg.get("landscape") or {})
        _check_keys(lblock, LANDSCAPE_KEYS, set(), "landscape")
        grid = int(lblock.get("grid", 11))
        if grid < 3 or grid % 2 == 0:
            raise ConfigError(f"landscape grid must be an odd count >= 3, got {grid}")
    if name == "intervene":
        iblock = dict(cfg.get("intervention") or {})
        _check_keys(iblock, INTERVENTION_KEYS, {"kind"}, "intervention")
        if iblock["kind"] not in ("curated", "transformed", "adversarial"):
            raise ConfigError(f"unknown intervention kind {iblock['kind']!r}")
    if name in ("malleability", "intervene"):
        mblock = dict(cfg.get("malleability") or {})
        _check_keys(mblock, MALLEABILITY_KEYS, set(), "malleability")
        tau = float(mblock.get("tau", 0.1))
        if not 0.0 < tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {tau}")


def _run_subcommand(name: str, cfg: dict, out_dir: Path, seed_override: int | None) -> None:
    _validate(name, cfg)
    runner = Runner(cfg, out_dir, seed_override)
    body = {
        "gen-data": runner.gen_data,
        "kernel": runner.kernel,
        "spectral-check": runner.spectral_check,
        "ntk-sweep": runner.ntk_sweep,
        "influence": runner.influence,
        "attack": runner.attack,
        "malleability": runner.malleability,
        "intervene": runner.intervene,
        "train": runner.train_cmd,
        "landscape": runner.landscape,
    }[name]
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        body()
    except (IllConditioned, TrainingDiverged):
        # numerical failures still leave a report behind for diagnosis
        runner.finish()
        raise
    else:
        runner.finish()


def _run_reproduce(figure: str, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if figure == "fig1":
        result = desk_fig1()
        records = []
        for arch, curve in result["curves"].items():
            records.extend(curve.to_records())
        save_records_csv(out_dir / "fig1_curves.csv", records,
                         ["width", "distance", "architecture", "dataset", "seed"])
        summary = {
            "trend": result["trend"],
            "kappa_G": result["kappa_G"],
            "expected": {"relu2l": "<= -0.5", "mlp_attn": ">= 0"},
            "passed": result["passed"],
        }
    elif figure == "table2-desk":
        result = desk_table2()
        rows = []
        for arch, res in result["results"].items():
            write_json(out_dir / f"table2_{arch}.json", res.report)
            save_records_csv(out_dir / f"table2_{arch}_flips.csv", res.table,
                             ["index", "I_orig", "I_adv", "selected", "flipped"])
            rows.append({"architecture": arch, "flip_rate": res.report.flip_rate,
                         "spearman_rho": res.report.spearman_rho,
                         "mu_M": res.report.mu_M})
        save_records_csv(out_dir / "table2.csv", rows,
                         ["architecture", "flip_rate", "spearman_rho", "mu_M"])
        summary = {
            "flip_rates": result["flip_rates"],
            "ratio": result["ratio"],
            "kappa_G": result["kappa_G"],
            "expected": "flip ratio mlp_attn / relu2l > 2",
            "passed": result["passed"],
        }
    elif figure == "table4-desk":
        result = desk_table4()
        rows = [
            {"training": "standard", "flip_rate": result["flip_rates"]["standard"]},
            {"training": "adversarial", "flip_rate": result["flip_rates"]["adv_trained"]},
        ]
        save_records_csv(out_dir / "table4.csv", rows, ["training", "flip_rate"])
        summary = {
            "flip_rates": result["flip_rates"],
            "expected": "adversarial training increases the relu2l flip rate",
            "passed": result["passed"],
        }
    else:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {FIGURES}")
    write_json(out_dir / "summary.json", summary)
    write_json(out_dir / "timings.json", {"reproduce": time.perf_counter() - t0})
    print(f"{figure}: {'PASS' if summary['passed'] else 'FAIL'} -> {out_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="linattn",
        description="Linearized-attention kernel and influence-malleability experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
    rep = sub.add_parser("reproduce", help="run a pinned desk-scale reproduction")
    rep.add_argument("figure", choices=FIGURES)
    rep.add_argument("--out", default="reproduce-out", help="output directory")
    rep.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    limits = None
    if args.threads is not None:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(limits=args.threads)
    try:
        if args.command == "reproduce":
            _run_reproduce(args.figure, Path(args.out))
            return 0
        cfg = _load_config(args.config)
        out_dir = Path(args.out or cfg.get("output_dir") or "linattn-out")
        _run_subcommand(args.command, cfg, out_dir, args.seed)
        return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (IllConditioned, TrainingDiverged) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    finally:
        if limits is not None:
            limits.unregister()


if __name__ == "__main__":
    sys.exit(main())
