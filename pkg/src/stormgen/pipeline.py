"""Config-driven pipeline stages with deterministic, provenance-tracked artifacts.

Each stage reads upstream artifacts from the output directory, writes its own
atomically, and attaches a provenance sidecar (stage, config hash, seed,
input hashes). Re-running a stage with the same config and seed reproduces
byte-identical outputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import correction, downscale, eqm, evaluation
from .errors import PipelineError
from .grids import (Field, GridSpec, OverlapMap, daily_range, load_field,
                    nearest_neighbor_regrid, overlap_from_grids, read_catchments,
                    save_field, upscale, write_catchments)
from .moments import CovariateNormalizer, MomentCoefficients, fit, predict, standardize
from .residual import ResidualModel, fit_residual_model
from .synthetic import WorldSpec, generate_world

log = logging.getLogger("stormgen")

STAGE_ORDER = ["synth-world", "upscale", "fit-moments", "bias-correct",
               "fit-residuals", "downscale", "eqm", "evaluate"]

_DEFAULT_PATHS = {
    "fine_grid": "grids/fine.csv",
    "coarse_grid": "grids/coarse.csv",
    "overlap": "overlap.csv",
    "catchments": "catchments.csv",
    "obs_fine_train": "fields/obs_fine_train.bin",
    "obs_fine_test": "fields/obs_fine_test.bin",
    "rcm_train": "fields/rcm_train.bin",
    "rcm_test": "fields/rcm_test.bin",
    "obs_coarse_train": "fields/obs_coarse_train.bin",
    "obs_coarse_test": "fields/obs_coarse_test.bin",
}

_PRODUCED_BY = {
    "fine_grid": "synth-world", "coarse_grid": "synth-world",
    "overlap": "synth-world", "catchments": "synth-world",
    "obs_fine_train": "synth-world", "obs_fine_test": "synth-world",
    "rcm_train": "synth-world", "rcm_test": "synth-world",
    "obs_coarse_train": "upscale", "obs_coarse_test": "upscale",
}


@dataclass
class PipelineConfig:
    out_dir: Path
    train_period: tuple = ("1957-01-01", "1986-12-31")
    test_period: tuple = ("1987-01-01", "2005-12-31")
    seed: int = 0
    variant: str = "trend"
    catchment_ids: tuple = ("A",)
    methods: tuple = ("xstar", "trend", "eqm", "raw")
    knot_step: float = 0.001
    n_bins: int = 15
    eval_n_boot: int = 10000
    eval_max_lag: int = 30
    residual_max_order: int = 3
    gaussian_margins: bool = False
    paths: dict = field(default_factory=dict)
    world: dict = field(default_factory=dict)

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.train_period[1] >= self.test_period[0]:
            raise PipelineError("training and test periods must be disjoint "
                                "(training must end before the test period)")
        if self.variant not in downscale.VARIANTS:
            raise PipelineError(f"unknown variant {self.variant!r}")

    @staticmethod
    def load(path, seed=None, variant=None) -> "PipelineConfig":
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(raw) - known
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        cfg = PipelineConfig(**raw)
        if seed is not None:
            cfg.seed = seed
        if variant is not None:
            cfg.variant = variant
        return cfg

    def path(self, key: str) -> Path:
        rel = self.paths.get(key, _DEFAULT_PATHS.get(key, key))
        return self.out_dir / rel

    def config_hash(self) -> str:
        payload = dataclasses.asdict(self)
        payload["out_dir"] = str(payload["out_dir"])
        return hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _write_atomic(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _provenance(cfg: PipelineConfig, artifact: Path, stage: str,
                inputs: list, extra: dict | None = None):
    payload = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "inputs": {str(p.relative_to(cfg.out_dir)): _sha256(p) for p in inputs},
    }
    payload.update(extra or {})
    _write_atomic(artifact.with_suffix(artifact.suffix + ".prov.json"),
                  json.dumps(payload, sort_keys=True).encode())


def _save_field_atomic(field_obj: Field, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    save_field(field_obj, path)


def _require(cfg: PipelineConfig, key: str, stage_hint: str | None = None) -> Path:
    p = cfg.path(key)
    if not p.exists():
        hint = stage_hint or _PRODUCED_BY.get(key, "the producing stage")
        raise PipelineError(f"missing artifact {p}; run {hint} first")
    return p


def _load_grids(cfg):
    fine = GridSpec.from_csv(_require(cfg, "fine_grid"))
    coarse = GridSpec.from_csv(_require(cfg, "coarse_grid"))
    return fine, coarse


def _load_overlap(cfg, fine, coarse) -> OverlapMap:
    p = cfg.path("overlap")
    if p.exists():
        ov = OverlapMap.from_csv(p)
    else:
        ov = overlap_from_grids(coarse, fine)
    ov.validate_against(coarse, fine)
    return ov


def stage_synth_world(cfg: PipelineConfig) -> list:
    spec = WorldSpec(**{
        "train_start": cfg.train_period[0], "train_end": cfg.train_period[1],
        "test_start": cfg.test_period[0], "test_end": cfg.test_period[1],
        "seed": cfg.seed, **cfg.world})
    world = generate_world(spec)
    out = []

    def emit(write, path):
        path.parent.mkdir(parents=True, exist_ok=True)
        write(path)
        _provenance(cfg, path, "synth-world", [], {"world_seed": spec.seed})
        out.append(path)

    emit(world.fine_grid.to_csv, cfg.path("fine_grid"))
    emit(world.coarse_grid.to_csv, cfg.path("coarse_grid"))
    emit(world.overlap.to_csv, cfg.path("overlap"))
    emit(lambda p: write_catchments({"A": world.fine_grid.cell_ids}, p),
         cfg.path("catchments"))
    for key, f in [("obs_fine_train", world.obs_fine_train),
                   ("obs_fine_test", world.obs_fine_test),
                   ("rcm_train", world.rcm_train),
                   ("rcm_test", world.rcm_test)]:
        emit(lambda p, f=f: _save_field_atomic(f, p), cfg.path(key))
    truth_dir = cfg.out_dir / "truth"
    truth_dir.mkdir(parents=True, exist_ok=True)
    world.true_fine_moments.to_json(truth_dir / "fine_moments.json")
    world.true_rcm_train.to_json(truth_dir / "rcm_train_moments.json")
    world.true_rcm_test.to_json(truth_dir / "rcm_test_moments.json")
    world.true_residual.to_json(truth_dir / "residual.json")
    spec.to_json(truth_dir / "world_spec.json")
    return out


def stage_upscale(cfg: PipelineConfig) -> list:
    fine, coarse = _load_grids(cfg)
    ov = _load_overlap(cfg, fine, coarse)
    out = []
    for src, dst in [("obs_fine_train", "obs_coarse_train"),
                     ("obs_fine_test", "obs_coarse_test")]:
        f = load_field(_require(cfg, src), fine)
        up = upscale(f, coarse, ov)
        path = cfg.path(dst)
        _save_field_atomic(up, path)
        _provenance(cfg, path, "upscale", [cfg.path(src)])
        out.append(path)
    return out


def _model_path(cfg, name) -> Path:
    return cfg.out_dir / "models" / f"{name}.json"


def stage_fit_moments(cfg: PipelineConfig) -> list:
    fine, coarse = _load_grids(cfg)
    ref_year = int(cfg.train_period[0][:4])
    out = []
    norm = CovariateNormalizer.from_grid(coarse)
    for key in ["obs_coarse_train", "rcm_train", "rcm_test"]:
        f = load_field(_require(cfg, key), coarse)
        coeffs = fit(f, coarse, reference_year=ref_year, normalizer=norm)
        path = _model_path(cfg, key)
        path.parent.mkdir(parents=True, exist_ok=True)
        coeffs.to_json(path)
        _provenance(cfg, path, "fit-moments", [cfg.path(key)])
        out.append(path)
        log.info("fitted moment model %s (trend %.3f degC/decade)",
                 key, coeffs.trend)
    catchments = read_catchments(_require(cfg, "catchments"))
    obs_fine = load_field(_require(cfg, "obs_fine_train"), fine)
    for cid in cfg.catchment_ids:
        if cid not in catchments:
            raise PipelineError(f"catchment {cid!r} not in catchment file")
        sub = obs_fine.subset_cells(catchments[cid])
        coeffs = fit(sub, sub.grid, reference_year=ref_year)
        path = _model_path(cfg, f"fine_{cid}")
        coeffs.to_json(path)
        _provenance(cfg, path, "fit-moments", [cfg.path("obs_fine_train")])
        out.append(path)
    return out


def _load_model(cfg, name, stage_hint) -> MomentCoefficients:
    path = _model_path(cfg, name)
    if not path.exists():
        raise PipelineError(f"missing model {path}; run {stage_hint} first")
    return MomentCoefficients.from_json(path)


def stage_bias_correct(cfg: PipelineConfig) -> list:
    fine, coarse = _load_grids(cfg)
    ctx = correction.CorrectionContext(
        obs_train=_load_model(cfg, "obs_coarse_train", "fit-moments"),
        rcm_train=_load_model(cfg, "rcm_train", "fit-moments"),
        rcm_test=_load_model(cfg, "rcm_test", "fit-moments"))
    raw_test = load_field(_require(cfg, "rcm_test"), coarse)
    obs_train = load_field(_require(cfg, "obs_coarse_train"), coarse)
    rcm_train = load_field(_require(cfg, "rcm_train"), coarse)
    out = []
    results = {
        "corrected_corr": correction.correct(raw_test, ctx),
        "corrected_simple": correction.simple_correct(raw_test, obs_train, rcm_train),
        "corrected_local_simple": correction.local_simple_correct(
            raw_test, obs_train, rcm_train),
    }
    model_hashes = {name: _sha256(_model_path(cfg, name))
                    for name in ("obs_coarse_train", "rcm_train", "rcm_test")}
    for name, f in results.items():
        path = cfg.out_dir / "fields" / f"{name}.bin"
        _save_field_atomic(f, path)
        _provenance(cfg, path, "bias-correct",
                    [cfg.path("rcm_test"), cfg.path("rcm_train"),
                     cfg.path("obs_coarse_train")],
                    {"method": name.replace("corrected_", ""),
                     "model_hashes": model_hashes})
        out.append(path)
    return out


def stage_fit_residuals(cfg: PipelineConfig) -> list:
    fine, _ = _load_grids(cfg)
    catchments = read_catchments(_require(cfg, "catchments"))
    obs_fine = load_field(_require(cfg, "obs_fine_train"), fine)
    out = []
    for cid in cfg.catchment_ids:
        coeffs = _load_model(cfg, f"fine_{cid}", "fit-moments")
        sub = obs_fine.subset_cells(catchments[cid])
        resid = standardize(sub, predict(coeffs, sub.grid, sub.dates))
        model = fit_residual_model(
            resid, max_order=cfg.residual_max_order,
            gaussian_margins=cfg.gaussian_margins, catchment_id=cid,
            training_hash=_sha256(cfg.path("obs_fine_train")))
        path = _model_path(cfg, f"residual_{cid}")
        model.to_json(path)
        _provenance(cfg, path, "fit-residuals", [cfg.path("obs_fine_train")])
        out.append(path)
        log.info("catchment %s: selected temporal order %s", cid, model.arma.order)
    return out


def _test_dates(cfg):
    return daily_range(cfg.test_period[0], cfg.test_period[1])


def stage_downscale(cfg: PipelineConfig) -> list:
    fine, coarse = _load_grids(cfg)
    ov = _load_overlap(cfg, fine, coarse)
    catchments = read_catchments(_require(cfg, "catchments"))
    train_dates = daily_range(cfg.train_period[0], cfg.train_period[1])
    test_dates = _test_dates(cfg)
    variants = sorted({cfg.variant, *(m for m in cfg.methods
                                      if m in downscale.VARIANTS)})
    out = []
    for k, cid in enumerate(cfg.catchment_ids):
        res_path = _model_path(cfg, f"residual_{cid}")
        if not res_path.exists():
            raise PipelineError(f"missing model {res_path}; run fit-residuals first")
        bundle = downscale.DownscaleBundle(
            fine_moments=_load_model(cfg, f"fine_{cid}", "fit-moments"),
            residual=ResidualModel.from_json(res_path),
            overlap=ov, coarse_grid=coarse,
            coarse_obs_train=_load_model(cfg, "obs_coarse_train", "fit-moments"),
            coarse_rcm_train=_load_model(cfg, "rcm_train", "fit-moments"),
            coarse_rcm_test=_load_model(cfg, "rcm_test", "fit-moments"),
            train_dates=train_dates)
        sub_grid = fine.subset(catchments[cid])
        zstar = downscale.simulate_residuals(bundle, sub_grid, test_dates,
                                             seed=[cfg.seed, k])
        delta = downscale.transferred_mean_change(bundle, sub_grid, test_dates)
        rho = downscale.variance_ratio(bundle, sub_grid, test_dates)
        model_hashes = {name: _sha256(_model_path(cfg, name))
                        for name in (f"fine_{cid}", f"residual_{cid}",
                                     "obs_coarse_train", "rcm_train", "rcm_test")}
        transfer_stats = {
            "mean_change_mean": float(delta.mean()),
            "mean_change_min": float(delta.min()),
            "mean_change_max": float(delta.max()),
            "sd_ratio_mean": float(rho.mean()),
            "sd_ratio_min": float(rho.min()),
            "sd_ratio_max": float(rho.max()),
        }
        for variant in variants:
            f = downscale._ASSEMBLERS[variant](bundle, zstar)
            path = cfg.out_dir / "fields" / f"downscaled_{variant}_{cid}.bin"
            _save_field_atomic(f, path)
            _provenance(cfg, path, "downscale",
                        [res_path, _model_path(cfg, f"fine_{cid}")],
                        {"variant": variant, "catchment": cid,
                         "model_hashes": model_hashes,
                         "transfer_stats": transfer_stats})
            out.append(path)
    return out


def stage_eqm(cfg: PipelineConfig) -> list:
    fine, coarse = _load_grids(cfg)
    catchments = read_catchments(_require(cfg, "catchments"))
    obs_fine = load_field(_require(cfg, "obs_fine_train"), fine)
    rcm_train = load_field(_require(cfg, "rcm_train"), coarse)
    rcm_test = load_field(_require(cfg, "rcm_test"), coarse)
    out = []
    for cid in cfg.catchment_ids:
        sub_grid = fine.subset(catchments[cid])
        obs_sub = obs_fine.subset_cells(catchments[cid])
        train_re = nearest_neighbor_regrid(rcm_train, sub_grid)
        test_re = nearest_neighbor_regrid(rcm_test, sub_grid)
        table = eqm.eqm_train(obs_sub, train_re, knot_step=cfg.knot_step,
                              grid_hash=_sha256(cfg.path("fine_grid")))
        table_path = cfg.out_dir / "models" / f"eqm_table_{cid}.eqmt"
        table_path.parent.mkdir(parents=True, exist_ok=True)
        table.save(table_path)
        mapped = eqm.eqm_apply(table, test_re)
        path = cfg.out_dir / "fields" / f"eqm_{cid}.bin"
        _save_field_atomic(mapped, path)
        _provenance(cfg, path, "eqm",
                    [cfg.path("obs_fine_train"), cfg.path("rcm_train"),
                     cfg.path("rcm_test")],
                    {"catchment": cid, "knot_step": cfg.knot_step})
        out.extend([table_path, path])
    return out


def stage_evaluate(cfg: PipelineConfig) -> list:
    fine, coarse = _load_grids(cfg)
    catchments = read_catchments(_require(cfg, "catchments"))
    obs_fine_test = load_field(_require(cfg, "obs_fine_test"), fine)
    rcm_test = load_field(_require(cfg, "rcm_test"), coarse)
    out = []
    for cid in cfg.catchment_ids:
        sub_grid = fine.subset(catchments[cid])
        obs_sub = obs_fine_test.subset_cells(catchments[cid])
        method_fields = {}
        for m in cfg.methods:
            if m in downscale.VARIANTS:
                p = cfg.out_dir / "fields" / f"downscaled_{m}_{cid}.bin"
                if not p.exists():
                    raise PipelineError(f"missing artifact {p}; run downscale first")
                method_fields[m] = load_field(p, sub_grid)
            elif m == "eqm":
                p = cfg.out_dir / "fields" / f"eqm_{cid}.bin"
                if not p.exists():
                    raise PipelineError(f"missing artifact {p}; run eqm first")
                method_fields[m] = load_field(p, sub_grid)
            elif m == "raw":
                method_fields[m] = nearest_neighbor_regrid(rcm_test, sub_grid)
            else:
                raise PipelineError(f"unknown evaluation method {m!r}")
        report = evaluation.evaluate_catchment(
            obs_sub, method_fields, catchment=cid, n_boot=cfg.eval_n_boot,
            seed=cfg.seed, max_lag=cfg.eval_max_lag, n_bins=cfg.n_bins)
        jpath = cfg.out_dir / "report" / f"eval_{cid}.json"
        jpath.parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(jpath, report.to_json().encode())
        cpath = cfg.out_dir / "report" / f"eval_{cid}.csv"
        report.to_csv(cpath)
        for p in (jpath, cpath):
            _provenance(cfg, p, "evaluate", [cfg.path("obs_fine_test")],
                        {"methods": sorted(method_fields), "catchment": cid})
            out.append(p)
    return out


STAGES = {
    "synth-world": stage_synth_world,
    "upscale": stage_upscale,
    "fit-moments": stage_fit_moments,
    "bias-correct": stage_bias_correct,
    "fit-residuals": stage_fit_residuals,
    "downscale": stage_downscale,
    "eqm": stage_eqm,
    "evaluate": stage_evaluate,
}


def run_stage(stage: str, cfg: PipelineConfig) -> list:
    if stage == "all":
        out = []
        for name in STAGE_ORDER:
            log.info("running stage %s", name)
            out.extend(STAGES[name](cfg))
        return out
    if stage not in STAGES:
        raise PipelineError(f"unknown stage {stage!r}; choose from "
                            f"{STAGE_ORDER + ['all']}")
    return STAGES[stage](cfg)
