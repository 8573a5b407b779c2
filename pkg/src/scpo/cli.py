"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data as D
from .baseline import ProbModel, train_multinomial
from .conformity import LinearConformity, ProbConformity
from .icp import CalibrationScores, IcpModel
from .metrics import (EvalReport, ResultRow, binomial_compare,
                      change_in_inefficiency, evaluate_icp,
                      format_results_table, get_measure)
from .search import (DEFAULT_ETAS, DEFAULT_GAMMAS, DEFAULT_LAMBDAS, GridSpec,
                     TrainedCandidate, gradient_descent, run_grid, select_best,
                     training_icp_score)
from .surrogate import TRANSFORMS, Hyperparams

logger = logging.getLogger("scpo")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


# ---------------------------------------------------------------- model files

class ModelFile:
    """Trained conformity measure plus everything needed to apply it."""

    def __init__(self, model_kind, weights, normalizer, label_names,
                 feature_names, label_column=None, q=1.0, hyperparams=None,
                 calibration_alphas=None, info=None):
        if model_kind not in ("scpo_linear", "multinomial"):
            raise D.DataError(f"unknown model kind {model_kind!r}")
        self.model_kind = model_kind
        self.weights = np.asarray(weights, dtype=float)
        self.normalizer = normalizer
        self.label_names = tuple(label_names)
        self.feature_names = tuple(feature_names)
        self.label_column = label_column
        self.q = float(q)
        self.hyperparams = hyperparams
        self.calibration_alphas = (None if calibration_alphas is None
                                   else np.asarray(calibration_alphas, float))
        self.info = dict(info or {})

    def scorer(self):
        if self.model_kind == "scpo_linear":
            return LinearConformity(self.weights)
        return ProbConformity(ProbModel(self.weights))

    def prepare(self, ds: D.Dataset) -> D.Dataset:
        return D.transform_new(self.normalizer, ds)

    def load_data(self, path, label_column=None, labeled=True) -> D.Dataset:
        label_column = label_column or self.label_column
        if labeled and not label_column:
            raise UsageError("label column unknown; pass --label-col")
        ds = D.load_csv(path, label_column if labeled else None,
                        label_names=self.label_names,
                        feature_names=self.feature_names)
        return self.prepare(ds)

    def icp(self, epsilon: float) -> IcpModel:
        if self.calibration_alphas is None:
            raise D.DataError("model has no calibration scores; run calibrate")
        return IcpModel(self.scorer(), CalibrationScores(self.calibration_alphas),
                        epsilon)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_kind": self.model_kind,
            "weights": self.weights.tolist(),
            "normalizer": {"means": self.normalizer.means.tolist(),
                           "stds": self.normalizer.stds.tolist()},
            "label_names": list(self.label_names),
            "feature_names": list(self.feature_names),
            "label_column": self.label_column,
            "q": self.q,
            "hyperparams": None if self.hyperparams is None
            else asdict(self.hyperparams),
            "calibration_alphas": None if self.calibration_alphas is None
            else self.calibration_alphas.tolist(),
            "info": self.info,
        }

    def save(self, path) -> None:
        text = json.dumps(self.to_dict(), indent=1, allow_nan=True)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFile":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise D.DataError(
                f"unsupported model schema {d.get('schema_version')!r}")
        try:
            norm = D.Normalizer(np.asarray(d["normalizer"]["means"], float),
                                np.asarray(d["normalizer"]["stds"], float))
            hp = d.get("hyperparams")
            return cls(d["model_kind"], d["weights"], norm, d["label_names"],
                       d["feature_names"], d.get("label_column"), d["q"],
                       None if hp is None else Hyperparams(**hp),
                       d.get("calibration_alphas"), d.get("info"))
        except (KeyError, TypeError) as exc:
            raise D.DataError(f"malformed model file: {exc}") from None

    @classmethod
    def load(cls, path) -> "ModelFile":
        path = Path(path)
        if not path.is_file():
            raise D.DataError(f"no such model file: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise D.DataError(f"{path}: not a model file ({exc})") from None
        return cls.from_dict(d)


# ------------------------------------------------------------------- helpers

def _load_training(args) -> tuple[D.Normalizer, D.Dataset, tuple[str, ...]]:
    ds = D.load_csv(args.data, args.label_col)
    if args.max_missing is not None:
        ds = D.drop_sparse_columns(ds, args.max_missing)
    raw_names = ds.feature_names
    norm, train, _ = D.prepare(ds)
    return norm, train, raw_names


def _write_csv(path, fields, rows):
    out = sys.stdout if str(path) == "-" else open(path, "w", newline="",
                                                    encoding="utf-8")
    try:
        w = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()


def _hyperparams(args, epsilon=None) -> Hyperparams:
    try:
        return Hyperparams(epsilon=args.epsilon if epsilon is None else epsilon,
                           lam=args.lam, gamma=args.gamma, eta=args.eta,
                           transform=args.transform, max_iters=args.iters,
                           rel_tol=args.rel_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(args, epsilon) -> GridSpec:
    try:
        return GridSpec(lambdas=args.lambdas, gammas=args.gammas,
                        etas=args.etas, transform=args.transform,
                        epsilon=epsilon, ineff=get_measure(args.ineff),
                        max_iters=args.iters, rel_tol=args.rel_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _scpo_model(cand: TrainedCandidate, norm, train, raw_names, args):
    return ModelFile(
        "scpo_linear", cand.theta, norm, train.label_names, raw_names,
        label_column=args.label_col, q=cand.hp.q, hyperparams=cand.hp,
        info={"ineff": args.ineff, "final_loss": cand.final_loss,
              "train_icp_ineff": cand.train_icp_ineff,
              "train_icp_acc": cand.train_icp_acc, "n_iter": cand.n_iter})


# ------------------------------------------------------------------ commands

def cmd_split(args):
    ds = D.load_csv(args.data, args.label_col)
    counts = args.counts
    if len(counts) != 3:
        raise UsageError("--counts takes three integers")
    parts = D.split(ds, D.SplitSpec(*counts, seed=args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(("train", "calib", "test"), parts):
        if part.n_examples:
            D.write_csv(out / f"{name}.csv", part, args.label_col)
    print(f"wrote {', '.join(str(c) for c in counts)} rows to {out}")


def cmd_train(args):
    hp = _hyperparams(args)
    measure = get_measure(args.ineff)
    if hp.eta == 0:
        print("warning: --eta 0 leaves the parameters at zero", file=sys.stderr)
    norm, train, raw_names = _load_training(args)
    res = gradient_descent(train.features, train.labels, hp, measure,
                           n_classes=train.n_classes)
    if res.diverged:
        raise NumericalError(
            f"gradient descent diverged after {res.n_iter} iterations")
    ineff, acc = training_icp_score(res.theta, train.features, train.labels,
                                    hp.epsilon, measure)
    cand = TrainedCandidate(res.theta, hp, res.final_loss, ineff, acc, False,
                            res.n_iter)
    _scpo_model(cand, norm, train, raw_names, args).save(args.out)
    print(f"iterations: {res.n_iter}")
    print(f"final loss ({hp.transform}): {res.final_loss!r}")
    print(f"training ICP inefficiency: {ineff:.6f}  accuracy: {acc:.6f}")


def cmd_train_baseline(args):
    norm, train, raw_names = _load_training(args)
    try:
        model = train_multinomial(train.features, train.labels,
                                  n_classes=train.n_classes,
                                  max_iters=args.iters, tol=args.tol)
    except ValueError as exc:
        raise D.DataError(str(exc)) from None
    if not np.all(np.isfinite(model.weights)):
        raise NumericalError("multinomial fit produced non-finite weights")
    ModelFile("multinomial", model.weights, norm, train.label_names, raw_names,
              label_column=args.label_col,
              info={"n_iter": model.n_iter, "final_nll": model.final_nll,
                    "converged": model.converged}).save(args.out)
    print(f"iterations: {model.n_iter}  converged: {model.converged}")
    print(f"negative log-likelihood: {model.final_nll!r}")


def cmd_gridsearch(args):
    grid = _grid(args, args.epsilon)
    norm, train, raw_names = _load_training(args)
    cands = run_grid(train.features, train.labels, grid,
                     n_classes=train.n_classes, jobs=args.jobs)
    if args.grid_csv:
        _write_csv(args.grid_csv, TrainedCandidate.CSV_FIELDS,
                   [c.csv_row() for c in cands])
    try:
        best = select_best(cands)
    except FloatingPointError as exc:
        raise NumericalError(str(exc)) from None
    _scpo_model(best, norm, train, raw_names, args).save(args.out)
    print(f"cells: {len(cands)}  diverged: {sum(c.diverged for c in cands)}")
    print(f"best: lambda={best.hp.lam:g} gamma={best.hp.gamma:g} "
          f"eta={best.hp.eta:g}  training ICP inefficiency "
          f"{best.train_icp_ineff:.6f}  accuracy {best.train_icp_acc:.6f}")


def cmd_calibrate(args):
    mf = ModelFile.load(args.model)
    calib = mf.load_data(args.calib, args.label_col)
    if calib.n_examples == 0:
        raise D.DataError("calibration file has no rows")
    scores = mf.scorer()(calib.features)
    mf.calibration_alphas = np.sort(
        CalibrationScores.from_scores(scores, calib.labels).alphas)
    mf.save(args.out or args.model)
    print(f"stored {calib.n_examples} calibration scores")


def cmd_predict(args):
    mf = ModelFile.load(args.model)
    icp = mf.icp(args.epsilon)
    ds = mf.load_data(args.data, labeled=False)
    sets = icp.predict(ds.features)
    rows = [{"id": str(i), "epsilon": repr(args.epsilon),
             "members": "|".join(mf.label_names[c] for c in np.flatnonzero(s)),
             "size": str(int(s.sum()))}
            for i, s in enumerate(sets)]
    _write_csv(args.out, ("id", "epsilon", "members", "size"), rows)


def cmd_evaluate(args):
    mf = ModelFile.load(args.model)
    icp = mf.icp(args.epsilon)
    ds = mf.load_data(args.data, args.label_col)
    if ds.n_examples == 0:
        raise D.DataError("test file has no rows")
    rep = evaluate_icp(icp, ds.features, ds.labels, get_measure(args.ineff))
    _write_csv(args.out, EvalReport.CSV_FIELDS, [rep.csv_row()])


def cmd_compare(args):
    a, b = ModelFile.load(args.model_a), ModelFile.load(args.model_b)
    if a.label_names != b.label_names:
        raise D.DataError("models were trained on different label sets")
    measure = get_measure(args.ineff)
    da = a.load_data(args.data, args.label_col)
    db = b.load_data(args.data, args.label_col or a.label_column)
    if da.n_examples != db.n_examples or da.n_examples == 0:
        raise D.DataError("row-count mismatch between model inputs")
    ra = evaluate_icp(a.icp(args.epsilon), da.features, da.labels, measure)
    rb = evaluate_icp(b.icp(args.epsilon), db.features, db.labels, measure)
    wins_a, wins_b, p = binomial_compare(ra.sets, rb.sets)
    ch = change_in_inefficiency(ra.mean_ineff, rb.mean_ineff) \
        if rb.mean_ineff > 0 else math.nan
    print(f"epsilon: {args.epsilon}  measure: {measure.kind}  n: {ra.n_test}")
    print(f"A accuracy: {ra.accuracy:.4f}  inefficiency: {ra.mean_ineff:.4f}")
    print(f"B accuracy: {rb.accuracy:.4f}  inefficiency: {rb.mean_ineff:.4f}")
    print(f"Ch.: {ch:.2f}%")
    print(f"smaller set: A {wins_a}  B {wins_b}  ties "
          f"{ra.n_test - wins_a - wins_b}")
    print("p-value: " + ("n/a (all ties)" if math.isnan(p) else f"{p:.6g}"))


def cmd_replicate(args):
    """Split one labeled file and compare SCPO-ICP with the baseline."""
    ds = D.load_csv(args.data, args.label_col)
    if args.max_missing is not None:
        ds = D.drop_sparse_columns(ds, args.max_missing)
    train, calib, test = D.split(ds, D.SplitSpec(*args.counts, seed=args.seed))
    if test.n_examples == 0:
        raise D.DataError("replicate needs a non-empty test split")
    _, train, (calib, test) = D.prepare(train, [calib, test])
    measure = get_measure(args.ineff)
    base = train_multinomial(train.features, train.labels,
                             n_classes=train.n_classes, max_iters=args.base_iters)
    base_scorer = ProbConformity(base)
    rows = []
    for eps in args.epsilons:
        cands = run_grid(train.features, train.labels, _grid(args, eps),
                         n_classes=train.n_classes, jobs=args.jobs)
        try:
            best = select_best(cands)
        except FloatingPointError as exc:
            raise NumericalError(str(exc)) from None
        scorer = LinearConformity(best.theta)
        r_scpo = evaluate_icp(
            IcpModel(scorer, CalibrationScores.from_scores(
                scorer(calib.features), calib.labels), eps),
            test.features, test.labels, measure)
        r_base = evaluate_icp(
            IcpModel(base_scorer, CalibrationScores.from_scores(
                base_scorer(calib.features), calib.labels), eps),
            test.features, test.labels, measure)
        rows.append(ResultRow(args.name or Path(args.data).stem, 1 - eps,
                              best.hp.lam, best.hp.gamma, r_scpo, r_base))
        wins_s, wins_b, p = binomial_compare(r_scpo.sets, r_base.sets)
        logger.info("eps=%g: SCPO smaller %d, baseline smaller %d, p=%.3g",
                    eps, wins_s, wins_b, p)
    print(format_results_table(rows))


# -------------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list: {text}")


def _add_training_opts(p, grid=False):
    p.add_argument("--data", required=True, help="training CSV")
    p.add_argument("--label-col", required=True)
    p.add_argument("--ineff", choices=("identity", "log"), default="identity")
    p.add_argument("--transform", default="neg_inverse",
                   choices=TRANSFORMS + tuple(t.replace("_", "-")
                                              for t in TRANSFORMS[2:]))
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--rel-tol", type=float, default=1e-7)
    p.add_argument("--max-missing", type=int, default=None,
                   help="drop feature columns with more missing cells")
    if grid:
        p.add_argument("--lambdas", type=_floats, default=list(DEFAULT_LAMBDAS))
        p.add_argument("--gammas", type=_floats, default=list(DEFAULT_GAMMAS))
        p.add_argument("--etas", type=_floats, default=list(DEFAULT_ETAS))
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: $SCPO_JOBS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scpo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("split", help="random train/calib/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", required=True)
    p.add_argument("--counts", type=int, nargs=3, required=True,
                   metavar=("TRAIN", "CALIB", "TEST"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train an SCPO linear conformity measure")
    _add_training_opts(p)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=100.0)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--eta", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-baseline",
                       help="fit the multinomial logistic baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", required=True)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-missing", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("gridsearch", help="grid search over lambda/gamma/eta")
    _add_training_opts(p, grid=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-csv", default=None)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("calibrate", help="store calibration scores")
    p.add_argument("--model", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--out", default=None, help="defaults to --model")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="write prediction sets")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="accuracy and inefficiency on test data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--ineff", choices=("identity", "log"), default="identity")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="paired comparison of two calibrated models")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", default=None)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--ineff", choices=("identity", "log"), default="identity")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replicate",
                       help="split, grid search and compare with the baseline")
    _add_training_opts(p, grid=True)
    p.add_argument("--counts", type=int, nargs=3, required=True,
                   metavar=("TRAIN", "CALIB", "TEST"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilons", type=_floats, default=[0.2, 0.1, 0.05])
    p.add_argument("--base-iters", type=int, default=5000)
    p.add_argument("--name", default=None)
    p.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    epsilons = [getattr(args, "epsilon", None), *getattr(args, "epsilons", [])]
    if any(e is not None and not 0 < e < 1 for e in epsilons):
        print("scpo: error: epsilon must lie in (0, 1)", file=sys.stderr)
        return EXIT_USAGE
    try:
        args.func(args)
    except UsageError as exc:
        print(f"scpo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (D.DataError, OSError) as exc:
        print(f"scpo: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"scpo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
