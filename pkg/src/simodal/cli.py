"""Command-line interface.

Subcommands: simulate, fit, predict, bootstrap, cv, diagnose, select,
montecarlo.  Every command is deterministic given its seed and writes its
outputs atomically to --out; report commands also render a PNG next to
each delimited file unless --no-plot is given.

Exit codes: 0 success, 2 input/usage error, 3 numeric or training failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import dataio, report
from .errors import DataError, DomainError, NumericError, SimodalError
from .estimation import (
    Dataset,
    ModelSpec,
    TrainConfig,
    compute_index,
    fit_from_json,
    fit_to_json,
    predict_mode,
    sgd_fit,
)
from .inference import (
    CIRecord,
    ci_quantiles,
    kfold_cv,
    model_select,
    parametric_bootstrap,
    pointwise_band_g,
    residual_diagnostic,
)
from .numerics import RngStream
from .simulation import SchemeConfig, gen_dataset, monte_carlo

MODEL_TAGS = ("st-gx-d", "sn-gx-d", "n-gx-d", "st-gx-b", "sn-gx-b", "n-gx-b",
              "st-fx", "sn-fx", "n-fx", "t-gx-d")

DEFAULTS = {
    "model": "st-gx-d",
    "response": "y",
    "covariates": None,
    "standardize": None,
    "epochs": 1000,
    "lr": 3e-4,
    "batch": 128,
    "seed": 0,
    "starts": 1,
    "hidden": "512,512",
    "degree": 50,
    "bootstrap_B": 300,
    "mc_bootstrap_B": 0,
    "bootstrap_mode": "chained",
    "level": 0.90,
    "folds": 10,
    "bins": 40,
    "threads": 1,
    "plot": True,
    "quiet": False,
}


class _CliParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, *names):
    if "model" in names:
        p.add_argument("--model", choices=MODEL_TAGS, help="model tag")
    if "data" in names:
        p.add_argument("--data", help="input data CSV")
    if "fit" in names:
        p.add_argument("--fit", help="fit artifact JSON from a previous run")
    if "response" in names:
        p.add_argument("--response", help="response column name (default y)")
        p.add_argument("--covariates", help="comma-separated covariate columns")
        p.add_argument("--standardize",
                       help="comma-separated numeric columns to standardize")
    if "train" in names:
        p.add_argument("--epochs", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--batch", type=int)
        p.add_argument("--starts", type=int)
        p.add_argument("--hidden", help="comma list of hidden widths, e.g. 64,64")
        p.add_argument("--degree", type=int, help="Bernstein degree")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--quiet", action="store_true", default=None)
    p.add_argument("--threads", type=int)
    p.add_argument("--plot", dest="plot", action="store_true", default=None)
    p.add_argument("--no-plot", dest="plot", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _CliParser(prog="simodal",
                    description="Monotone single-index modal regression")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="generate scheme data")
    p.add_argument("--scheme", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, required=True)
    _add_common(p)

    p = sub.add_parser("fit", help="fit a model to CSV data")
    _add_common(p, "model", "data", "response", "train")

    p = sub.add_parser("predict", help="indexes and predicted modes for new data")
    _add_common(p, "data", "fit")

    p = sub.add_parser("bootstrap", help="parametric bootstrap CIs and bands")
    _add_common(p, "model", "data", "fit", "response", "train")
    p.add_argument("--bootstrap-B", dest="bootstrap_B", type=int)
    p.add_argument("--bootstrap-mode", dest="bootstrap_mode",
                   choices=("chained", "classic"))
    p.add_argument("--level", type=float)

    p = sub.add_parser("cv", help="K-fold cross-validation")
    _add_common(p, "model", "data", "response", "train")
    p.add_argument("--folds", type=int)

    p = sub.add_parser("diagnose", help="residual histogram vs fitted density")
    _add_common(p, "data", "fit")
    p.add_argument("--bins", type=int)

    p = sub.add_parser("select", help="error-family recommendation from CIs")
    p.add_argument("--ci", required=True, help="ci.csv from a bootstrap run")
    _add_common(p)

    p = sub.add_parser("montecarlo", help="Monte Carlo simulation harness")
    p.add_argument("--scheme", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--models", help="comma-separated model tags")
    _add_common(p, "train")
    p.add_argument("--bootstrap-B", dest="mc_bootstrap_B", type=int,
                   help="per-replicate bootstrap size (default: no bootstrap)")
    p.add_argument("--bootstrap-mode", dest="bootstrap_mode",
                   choices=("chained", "classic"))
    return ap


def _settings(args: argparse.Namespace) -> dict:
    """flags > config file > defaults."""
    merged = dict(DEFAULTS)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                merged.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {cfg_path}: {exc}") from None
    for key, val in vars(args).items():
        if val is not None:
            merged[key] = val
    return merged


def _widths(s) -> tuple:
    if isinstance(s, (list, tuple)):
        return tuple(int(v) for v in s)
    try:
        return tuple(int(tok) for tok in str(s).split(",") if tok.strip())
    except ValueError:
        raise DataError(f"bad --hidden value {s!r}") from None


def _spec(cfg: dict) -> ModelSpec:
    return ModelSpec.from_tag(cfg["model"], widths=_widths(cfg["hidden"]),
                              degree=int(cfg["degree"]))


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(epochs=int(cfg["epochs"]), batch=int(cfg["batch"]),
                       lr=float(cfg["lr"]), seed=int(cfg["seed"]),
                       starts=int(cfg["starts"]))


def _outdir(cfg: dict):
    import pathlib

    out = pathlib.Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(cfg: dict, msg: str) -> None:
    if not cfg["quiet"]:
        print(msg, file=sys.stderr)


def _load_training_data(cfg: dict):
    if not cfg.get("data"):
        raise DataError("--data is required")
    cols = dataio.read_csv_columns(cfg["data"])
    response = cfg["response"]
    y = dataio.parse_response(cols, response, cfg["data"])
    covariates = ([c.strip() for c in cfg["covariates"].split(",")]
                  if cfg.get("covariates") else
                  [c for c in cols if c != response])
    if not covariates:
        raise DataError("no covariate columns")
    standardize = ([c.strip() for c in cfg["standardize"].split(",")]
                   if cfg.get("standardize") else [])
    features = dataio.build_features(cols, covariates, standardize)
    X = dataio.encode_features(cols, features, cfg["data"])
    std = {f["source"]: (f["mean"], f["sd"]) for f in features
           if f["kind"] == "numeric" and f["mean"] is not None}
    data = Dataset(y, X, [f["name"] for f in features], std)
    return data, features


def _fit_doc(fit, features) -> dict:
    doc = fit_to_json(fit)
    doc["features"] = features
    return doc


def _load_fit(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read fit artifact {path}: {exc}") from None
    return fit_from_json(doc), doc.get("features")


def _write_curve(outdir, fit, cfg) -> None:
    dataio.write_csv(outdir / "learning_curve.csv", ["epoch", "loss"],
                     [(e + 1, v) for e, v in enumerate(fit.learning_curve)])
    if cfg["plot"]:
        report.save_learning_curve(fit.learning_curve,
                                   outdir / "learning_curve.png",
                                   title=f"Training loss ({fit.spec.tag})")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    outdir = _outdir(cfg)
    scheme = SchemeConfig(scheme=int(cfg["scheme"]), n=int(cfg["n"]),
                          seed=int(cfg["seed"]))
    data, truth = gen_dataset(scheme, RngStream(scheme.seed))
    rows = [(y, x1, x2, x3) for y, (x1, x2, x3) in zip(data.y, data.X)]
    dataio.write_csv(outdir / "data.csv", ["y", "x1", "x2", "x3"], rows)
    truth_col = "f_true" if scheme.scheme == 4 else "g_true"
    dataio.write_csv(outdir / "truth.csv", ["u", truth_col],
                     list(zip(truth.u, truth.g)))
    _say(cfg, f"wrote {outdir / 'data.csv'} and {outdir / 'truth.csv'}")
    return 0


def cmd_fit(cfg: dict) -> int:
    outdir = _outdir(cfg)
    data, features = _load_training_data(cfg)
    spec = _spec(cfg)
    train = _train_config(cfg)
    fit = sgd_fit(spec, data, train, RngStream(train.seed))
    dataio.write_json(outdir / "fit.json", _fit_doc(fit, features))
    _write_curve(outdir, fit, cfg)
    _say(cfg, f"final NLL {fit.final_nll:.4f}; wrote {outdir / 'fit.json'}")
    if not cfg["quiet"]:
        for name, val in fit.estimates().items():
            print(f"{name}\t{dataio.fmt(val)}")
    return 0


def cmd_predict(cfg: dict) -> int:
    outdir = _outdir(cfg)
    if not cfg.get("fit"):
        raise DataError("--fit is required")
    fit, features = _load_fit(cfg["fit"])
    cols = dataio.read_csv_columns(cfg["data"]) if cfg.get("data") else None
    if cols is None:
        raise DataError("--data is required")
    if features:
        X = dataio.encode_features(cols, features, cfg["data"])
    else:
        try:
            X = np.column_stack([
                dataio.parse_response(cols, c, cfg["data"]) for c in fit.columns
            ])
        except DataError:
            raise DataError(
                "fit artifact lacks a feature schema and data columns do not "
                "match the fit's columns"
            ) from None
    preds = predict_mode(fit, X)
    if fit.beta is not None:
        idx = compute_index(fit.beta, X)
        rows = list(zip(idx, preds))
    else:
        rows = [("", p) for p in preds]
    dataio.write_csv(outdir / "predictions.csv", ["index", "predicted_mode"], rows)
    _say(cfg, f"wrote {outdir / 'predictions.csv'}")
    return 0


def _fit_or_load(cfg: dict):
    """Use --fit when given; otherwise fit in-process from --data."""
    data = None
    if cfg.get("data"):
        data, features = _load_training_data(cfg)
    if cfg.get("fit"):
        fit, features = _load_fit(cfg["fit"])
        if data is None:
            raise DataError("--data is required alongside --fit")
        return fit, data, features
    if data is None:
        raise DataError("either --fit or --data is required")
    spec = _spec(cfg)
    train = _train_config(cfg)
    fit = sgd_fit(spec, data, train, RngStream(train.seed))
    return fit, data, features


def cmd_bootstrap(cfg: dict) -> int:
    outdir = _outdir(cfg)
    B = int(cfg["bootstrap_B"])
    fit, data, features = _fit_or_load(cfg)
    train = _train_config(cfg)
    boot = parametric_bootstrap(fit, data, B, train,
                                RngStream(train.seed).substream(7),
                                mode=cfg["bootstrap_mode"],
                                threads=int(cfg["threads"]))
    level = float(cfg["level"])
    records = ci_quantiles(boot, level)
    dataio.write_csv(outdir / "ci.csv",
                     ["parameter", "estimate", "lower5", "upper95"],
                     [(r.name, r.estimate, r.lower, r.upper) for r in records])
    doc = {
        "schema": "simodal-bootstrap-v1",
        "model": fit.spec.tag,
        "mode": boot.mode,
        "requested_B": boot.requested_B,
        "failed_replicates": boot.failed_ids,
        "level": level,
        "ci": [{"parameter": r.name, "estimate": r.estimate,
                "lower": r.lower, "upper": r.upper} for r in records],
        "replicates": {k: [float(v) for v in vals]
                       for k, vals in boot.parameter_draws().items()},
    }
    dataio.write_json(outdir / "bootstrap.json", doc)
    if fit.spec.link != "fx":
        u_data = compute_index(fit.beta, data.X)
        grid = np.linspace(float(u_data.min()), float(u_data.max()), 101)
        band = pointwise_band_g(boot, grid, level)
        dataio.write_csv(outdir / "band.csv", ["u", "lower", "point", "upper"],
                         zip(band["u"], band["lower"], band["point"], band["upper"]))
        if cfg["plot"]:
            report.save_band(band, outdir / "band.png",
                             scatter=(u_data, data.y),
                             title=f"Estimated link with {int(level*100)}% band")
    _say(cfg, f"wrote {outdir / 'ci.csv'} (B={B}, mode={boot.mode}, "
              f"failed={len(boot.failed_ids)})")
    return 0


def cmd_cv(cfg: dict) -> int:
    outdir = _outdir(cfg)
    data, _ = _load_training_data(cfg)
    spec = _spec(cfg)
    train = _train_config(cfg)
    K = int(cfg["folds"])
    mses = kfold_cv(spec, data, K, train, RngStream(train.seed).substream(3),
                    threads=int(cfg["threads"]))
    dataio.write_csv(outdir / "cv.csv", ["fold", "mse"],
                     [(k + 1, m) for k, m in enumerate(mses)])
    if cfg["plot"]:
        report.save_cv_box({spec.tag: list(mses)}, outdir / "cv.png")
    _say(cfg, f"wrote {outdir / 'cv.csv'} (mean MSE {np.mean(mses):.4f})")
    return 0


def cmd_diagnose(cfg: dict) -> int:
    outdir = _outdir(cfg)
    if not cfg.get("fit"):
        raise DataError("--fit is required")
    fit, features = _load_fit(cfg["fit"])
    cols = dataio.read_csv_columns(cfg["data"]) if cfg.get("data") else None
    if cols is None:
        raise DataError("--data is required")
    response = cfg["response"] if cfg.get("response") else DEFAULTS["response"]
    y = dataio.parse_response(cols, response, cfg["data"])
    X = dataio.encode_features(cols, features, cfg["data"]) if features else None
    if X is None:
        X = np.column_stack([
            dataio.parse_response(cols, c, cfg["data"]) for c in fit.columns
        ])
    data = Dataset(y, X, fit.columns)
    diag = residual_diagnostic(fit, data, bins=int(cfg["bins"]))
    mids_theo = diag.bin_mid_theoretical
    dataio.write_csv(
        outdir / "diagnostic.csv",
        ["bin_left", "bin_right", "density", "theoretical"],
        [(diag.bin_edges[i], diag.bin_edges[i + 1], diag.density[i], mids_theo[i])
         for i in range(len(diag.density))],
    )
    dataio.write_csv(outdir / "diagnostic_curve.csv", ["x", "density"],
                     zip(diag.curve_x, diag.curve_y))
    if cfg["plot"]:
        report.save_diagnostic(diag, outdir / "diagnostic.png",
                               title=f"Residual diagnostic ({fit.spec.tag})")
    _say(cfg, f"wrote {outdir / 'diagnostic.csv'}")
    return 0


def cmd_select(cfg: dict) -> int:
    outdir = _outdir(cfg)
    cols = dataio.read_csv_columns(cfg["ci"])
    needed = ("parameter", "estimate", "lower5", "upper95")
    if any(c not in cols for c in needed):
        raise DataError(f"{cfg['ci']}: expected columns {needed}")
    recs = {}
    for i, name in enumerate(cols["parameter"]):
        recs[name] = CIRecord(name, float(cols["estimate"][i]),
                              float(cols["lower5"][i]), float(cols["upper95"][i]))
    if "w" not in recs or "delta" not in recs:
        raise DataError("ci table must contain rows for 'w' and 'delta'")
    choice = model_select(recs["w"], recs["delta"])
    doc = {
        "schema": "simodal-selection-v1",
        "recommendation": choice,
        "w_ci": [recs["w"].lower, recs["w"].upper],
        "delta_ci": [recs["delta"].lower, recs["delta"].upper],
    }
    dataio.write_json(outdir / "selection.json", doc)
    if not cfg["quiet"]:
        print(choice)
    return 0


def cmd_montecarlo(cfg: dict) -> int:
    outdir = _outdir(cfg)
    tags = ([t.strip() for t in cfg["models"].split(",")]
            if cfg.get("models") else [cfg["model"]])
    specs = [ModelSpec.from_tag(t, widths=_widths(cfg["hidden"]),
                                degree=int(cfg["degree"])) for t in tags]
    scheme = SchemeConfig(scheme=int(cfg["scheme"]), n=int(cfg["n"]),
                          seed=int(cfg["seed"]))
    B = int(cfg.get("mc_bootstrap_B") or 0)
    reports = monte_carlo(
        scheme, specs, int(cfg["reps"]), _train_config(cfg),
        RngStream(scheme.seed).substream(11),
        bootstrap_B=B, bootstrap_mode=cfg["bootstrap_mode"],
        threads=int(cfg["threads"]),
    )
    dataio.write_json(outdir / "report.json",
                      {tag: rep.to_json() for tag, rep in reports.items()})
    for tag, rep in reports.items():
        dataio.write_csv(
            outdir / f"report_{tag}.csv",
            ["parameter", "APE", "avg_bias", "empirical_SE", "avg_bootstrap_SE"],
            [(row["parameter"], row["APE"], row["avg_bias"],
              row["empirical_SE"], row["avg_bootstrap_SE"])
             for row in rep.parameters],
        )
    if cfg["plot"]:
        gm = {tag: rep.g_mse for tag, rep in reports.items() if rep.g_mse}
        if gm:
            report.save_gmse_box(gm, outdir / "gmse.png")
    _say(cfg, f"wrote {outdir / 'report.json'}")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "bootstrap": cmd_bootstrap,
    "cv": cmd_cv,
    "diagnose": cmd_diagnose,
    "select": cmd_select,
    "montecarlo": cmd_montecarlo,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _settings(args)
        # Pin BLAS to one thread for the whole run: reproducible reductions
        # and no oversubscription when replicates run on worker threads.
        with threadpool_limits(limits=1, user_api="blas"):
            with warnings.catch_warnings():
                if cfg["quiet"]:
                    warnings.simplefilter("ignore")
                return _COMMANDS[args.command](cfg)
    except (DataError, DomainError) as exc:
        print(f"simodal: error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"simodal: numeric failure: {exc}", file=sys.stderr)
        return 3
    except SimodalError as exc:
        print(f"simodal: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
