"""``poisoncert`` command line: generate data, train, attack, certify and reproduce experiments.

Every failure prints one line ``error: CODE: message`` to stderr and exits
nonzero.  All randomness derives from ``--seed`` through named sub-seeds, so
identical flags give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analytics, attacks, exactcert, experiments, geometry, robust
from .core import (ABSTAIN, INFINITY, AdversaryClass, BudgetRule, CertifiedPrediction, Dataset,
                   Example, derive_seed, rng_for, zero_one_loss)
from .data import gen_sphere_halfspace, gen_two_circles, load_dataset, save_dataset
from .errors import InvalidInput, PoisonCertError
from .learners import (HalfspaceHypothesis, KNNHypothesis, LearnerSpec, hypothesis_from_dict,
                       train)

MODEL_FORMAT = "poisoncert-model/1"
DEFAULT_DELTA = 0.01

EXIT_ASSERTION = 1
EXIT_ERROR = 2


# ---------------------------------------------------------------------------
# Model files


class LoadedModel:
    """A trained model together with what certification needs to know about its training run."""

    def __init__(self, learner: str, model, m: int, rule: BudgetRule | None, base: LearnerSpec):
        self.learner = learner
        self.model = model
        self.m = m
        self.rule = rule
        self.base = base

    def predict_batch(self, X) -> np.ndarray:
        if isinstance(self.model, robust.EnsembleModel):
            return np.array([robust._decide(c)[0] for c in self.model.votes_batch(X)],
                            dtype=np.int64)
        return self.model.predict_batch(X)

    def to_json(self) -> str:
        if isinstance(self.model, robust.EnsembleModel):
            body = json.loads(self.model.to_json())
        else:
            body = self.model.to_dict()
        return json.dumps({"format": MODEL_FORMAT, "learner": self.learner, "m": self.m,
                           "budget_rule": self.rule.describe() if self.rule else None,
                           "base": self.base.to_dict(), "model": body}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, source: str = "<model>") -> "LoadedModel":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{source}: not JSON ({exc})") from None
        if not isinstance(d, dict) or d.get("format") != MODEL_FORMAT:
            raise InvalidInput(f"{source}: not a {MODEL_FORMAT} file")
        body = d["model"]
        if body.get("type") == "ensemble":
            model = robust.EnsembleModel.from_json(json.dumps(body))
        elif body.get("type") == "subsample":
            model = robust.SubsampleModel(hypothesis_from_dict(body["sub"]), body["indices"])
        else:
            model = hypothesis_from_dict(body)
        rule = BudgetRule.parse(d["budget_rule"]) if d.get("budget_rule") else None
        return cls(d["learner"], model, int(d["m"]), rule, LearnerSpec.from_dict(d["base"]))


def model_dim(model) -> int | None:
    if isinstance(model, robust.EnsembleModel):
        return model_dim(model.subs[0]) if model.subs else None
    if isinstance(model, robust.SubsampleModel):
        return model_dim(model.sub)
    if isinstance(model, HalfspaceHypothesis):
        return model.omega.size
    if isinstance(model, KNNHypothesis):
        return model.X.shape[1]
    return None


def load_test(path, lm: "LoadedModel") -> Dataset:
    test = load_dataset(path)
    d = model_dim(lm.model)
    if d is not None and test.d != d:
        raise InvalidInput(f"{path}: dimension {test.d} differs from the model's {d}")
    return test


def load_model(path) -> LoadedModel:
    p = Path(path)
    if not p.exists():
        raise InvalidInput(f"no such file: {path}")
    return LoadedModel.from_json(p.read_text(), str(path))


def fit_model(learner: str, base: LearnerSpec, S: Dataset, rule: BudgetRule | None,
              seed: int) -> LoadedModel:
    if learner in ("wr", "rlrn-seq", "rlrn-hash") and rule is None:
        raise InvalidInput(f"learner {learner} needs --budget-rule")
    if learner == "wr":
        model = robust.wr_train(base, S, rule, derive_seed(seed, "wr"))
    elif learner == "rlrn-seq":
        model = robust.rlrn_train(base, S, rule, robust.Scheme.SEQUENTIAL)
    elif learner == "rlrn-hash":
        model = robust.rlrn_train(base, S, rule, robust.Scheme.HASHED,
                                  key=robust.key_from_seed(derive_seed(seed, "hash-key")))
    else:
        base = LearnerSpec.parse(learner, seed=derive_seed(seed, "learner"))
        model = train(base, S)
    return LoadedModel(learner, model, S.m, rule, base)


# ---------------------------------------------------------------------------
# Certification


def _warn_uncertified(what: str, cls: AdversaryClass):
    warnings.warn(f"{what} has no certificate for {cls.name} attacks; cert = 0")


def certify_points(lm: LoadedModel, test: Dataset, cls: AdversaryClass,
                   epsilon: float | None = None, delta: float = DEFAULT_DELTA,
                   omega_truth=None) -> list[CertifiedPrediction]:
    """One certified prediction per test row for the loaded model.

    K-NN certificates are exact robustness values of the predicted label
    (Flip uses the Replace value, a lower bound since flips are replacements).
    Halfspace certificates use the sphere bound with ``epsilon``, defaulting
    to a VC-style heuristic.  The subsample learner only defends against weak
    adversaries and issues no per-point certificate.
    """
    model = lm.model
    if isinstance(model, robust.EnsembleModel):
        return robust.ensemble_certify_batch(model, test.X, cls)
    preds = lm.predict_batch(test.X)
    if isinstance(model, KNNHypothesis):
        S = Dataset(model.X, model.y, n_labels=model.n_labels)
        fn = {AdversaryClass.REPLACE: exactcert.knn_rob_replace,
              AdversaryClass.FLIP: exactcert.knn_rob_replace,
              AdversaryClass.ADD: exactcert.knn_rob_add,
              AdversaryClass.REMOVE: exactcert.knn_rob_remove}.get(cls)
        if fn is None:
            _warn_uncertified("K-NN", cls)
            return [CertifiedPrediction(int(p), 0) for p in preds]
        n_labels = max(model.n_labels, test.n_labels)
        S = Dataset(S.X, S.y, n_labels=n_labels)
        return [CertifiedPrediction(int(p), fn(S, model.k, Example(x, int(p))))
                for x, p in zip(test.X, preds)]
    if isinstance(model, HalfspaceHypothesis):
        if cls not in (AdversaryClass.REPLACE, AdversaryClass.FLIP):
            _warn_uncertified("the halfspace learner", cls)
            return [CertifiedPrediction(int(p), 0) for p in preds]
        if lm.rule is None:
            raise InvalidInput("halfspace certification needs the model's --budget-rule")
        d = model.omega.size
        eps = geometry.vc_epsilon(lm.m, d, delta) if epsilon is None else epsilon
        truth = model.omega if omega_truth is None else omega_truth
        task = geometry.SphereTask(d, truth, eps, min(1.0, lm.rule(lm.m) / lm.m))
        certs = geometry.halfspace_cert_batch(task, model.omega, test.X, lm.m)
        return [CertifiedPrediction(int(p), int(c)) for p, c in zip(preds, certs)]
    _warn_uncertified(lm.learner, cls)
    return [CertifiedPrediction(int(p), 0) for p in preds]


def exact_certificates(lm: LoadedModel, cls: AdversaryClass) -> bool:
    """True when certificates are the exact robustness of the predicted label."""
    return isinstance(lm.model, KNNHypothesis) and cls in (
        AdversaryClass.REPLACE, AdversaryClass.ADD, AdversaryClass.REMOVE)


def _fmt_cert(c) -> str:
    return "inf" if c == INFINITY else str(int(c))


def _write(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt_float(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_gen(args) -> int:
    if args.dist == "two-circles":
        S = gen_two_circles(args.m, derive_seed(args.seed, "gen-two-circles"))
    else:
        if args.d is None:
            raise InvalidInput("--dist sphere needs --d")
        if args.truth:
            omega = _omega_truth(args)
            if omega.size != args.d:
                raise InvalidInput(f"--truth normal has dimension {omega.size}, not --d {args.d}")
        else:
            omega = geometry.uniform_sphere_sample(args.d, 1, rng_for(args.seed, "gen-truth"))[0]
        S = gen_sphere_halfspace(args.m, args.d, omega, derive_seed(args.seed, "gen-sphere"))
        if args.truth_out:
            Path(args.truth_out).write_text(json.dumps({"omega": omega.tolist()}))
    save_dataset(S, args.out)
    return 0


def _rule(text):
    return BudgetRule.parse(text) if text else None


def cmd_train(args) -> int:
    S = load_dataset(args.data)
    base = LearnerSpec.parse(args.base, seed=derive_seed(args.seed, "base"))
    lm = fit_model(args.learner, base, S, _rule(args.budget_rule), args.seed)
    _write(args.out, lm.to_json() + "\n")
    return 0


def _target(args, S: Dataset) -> Example:
    T = load_dataset(args.targets) if args.targets else S
    if not 0 <= args.target_index < T.m:
        raise InvalidInput(f"--target-index {args.target_index} out of range [0, {T.m})")
    if T.d != S.d:
        raise InvalidInput(f"target dimension {T.d} differs from the data dimension {S.d}")
    return T[args.target_index]


def _label_transcript(S: Dataset, S2: Dataset, cls: AdversaryClass, b: int) -> attacks.Transcript:
    pos = [int(i) for i in np.flatnonzero(S.y != S2.y)]
    return attacks.Transcript(cls, b, pos, [(S2.X[i].tolist(), int(S2.y[i])) for i in pos])


def cmd_attack(args) -> int:
    S = load_dataset(args.data)
    target = _target(args, S)
    b = args.budget
    if b < 0:
        raise InvalidInput("--budget must be >= 0")
    lm = load_model(args.model) if args.model else None
    if args.kind == "flip-interval":
        S2 = attacks.flip_interval_attack(S, target, b / S.m, randomized=args.randomized,
                                          seed=derive_seed(args.seed, "flip-interval"))
        tr = _label_transcript(S, S2, AdversaryClass.FLIP, int(np.count_nonzero(S.y != S2.y)))
    elif args.kind == "rotation":
        if args.truth:
            omega = np.array(json.loads(Path(args.truth).read_text())["omega"], dtype=np.float64)
        elif lm is not None and isinstance(lm.model, HalfspaceHypothesis):
            omega = lm.model.omega
        else:
            raise InvalidInput("rotation needs --truth or a halfspace --model")
        S2 = attacks.rotation_flip_attack(S, target, omega)
        tr = _label_transcript(S, S2, AdversaryClass.FLIP, int(np.count_nonzero(S.y != S2.y)))
    elif args.kind == "greedy-add":
        if lm is None:
            raise InvalidInput("greedy-add needs --model")
        S2 = attacks.greedy_add_attack(S, lm.model, target, b)
        tr = attacks.Transcript(AdversaryClass.ADD, b, [],
                                [(S2.X[i].tolist(), int(S2.y[i])) for i in range(S.m, S2.m)],
                                append=True)
    else:
        if lm is None:
            raise InvalidInput("brute-force needs --model")
        cls = AdversaryClass.parse(args.cls)
        if model_dim(lm.model) not in (None, S.d):
            raise InvalidInput(f"--model dimension {model_dim(lm.model)} differs from the data's {S.d}")
        pool = [Example(target.x, lab) for lab in range(max(S.n_labels, target.y + 1))]
        reference = int(lm.predict_batch(target.x.reshape(1, -1))[0])
        found = attacks.brute_force_search(S, lambda D: _refit(lm, D, args.seed), target, cls, b,
                                           pool, reference=reference)
        if found is None:
            print(f"no {cls.name} attack within budget {b} changes the prediction", file=sys.stderr)
            return EXIT_ASSERTION
        S2, tr = found
    save_dataset(S2, args.out)
    Path(args.transcript or (str(args.out) + ".json")).write_text(tr.to_json() + "\n")
    return 0


class _Refit:
    def __init__(self, lm: LoadedModel):
        self.lm = lm

    def predict(self, x):
        return int(self.lm.predict_batch(np.asarray(x).reshape(1, -1))[0])


def _refit(lm: LoadedModel, D: Dataset, seed: int):
    if isinstance(lm.model, robust.EnsembleModel):
        return lm.model.retrain(D)
    return _Refit(fit_model(lm.learner, lm.base, D, lm.rule, seed))


def _omega_truth(args):
    if getattr(args, "truth", None):
        return np.array(json.loads(Path(args.truth).read_text())["omega"], dtype=np.float64)
    return None


def cmd_certify(args) -> int:
    lm = load_model(args.model)
    test = load_test(args.test, lm)
    if args.data:
        S = load_dataset(args.data)
        if S.m != lm.m:
            raise InvalidInput(f"--data has {S.m} examples but the model was trained on {lm.m}")
    certs = certify_points(lm, test, AdversaryClass.parse(args.cls), args.epsilon, args.delta,
                           _omega_truth(args))
    rows = [(i, "abstain" if c.pred == ABSTAIN else c.pred, _fmt_cert(c.cert), int(test.y[i]))
            for i, c in enumerate(certs)]
    _write(args.out, _csv(rows, ["index", "pred", "cert", "y"]))
    return 0


def cmd_eval(args) -> int:
    lm = load_model(args.model)
    test = load_test(args.test, lm)
    if test.m == 0:
        raise InvalidInput("empty test set")
    preds = lm.predict_batch(test.X)
    losses = [zero_one_loss(int(p), int(y)) for p, y in zip(preds, test.y)]
    risk = math.fsum(losses) / test.m
    _write(args.out, json.dumps({"n": test.m, "accuracy": 1.0 - risk, "risk": risk},
                                sort_keys=True) + "\n")
    return 0


def cmd_curve(args) -> int:
    lm = load_model(args.model)
    test = load_test(args.test, lm)
    if args.b_max < 0:
        raise InvalidInput("--b-max must be >= 0")
    cls = AdversaryClass.parse(args.cls)
    certs = certify_points(lm, test, cls, args.epsilon, args.delta, _omega_truth(args))
    profile = None
    if exact_certificates(lm, cls):
        lower = analytics.profile_from_certificates(certs, test)
        vals = [None if np.isfinite(v) and v > args.b_max else v for v in lower]
        profile = analytics.RobustnessProfile.from_values(vals, args.b_max)
    rows = analytics.curve_rows(certs, test, args.b_max, profile)
    text = _csv([(b, _fmt_float(r), _fmt_float(c), _fmt_float(f)) for b, r, c, f in rows],
                ["budget", "risk", "certified_accuracy", "correct_fraction"])
    _write(args.out, text)
    return 0


def _read_profile(path) -> analytics.RobustnessProfile:
    p = Path(path)
    if not p.exists():
        raise InvalidInput(f"no such file: {path}")
    text = p.read_text()
    if text.lstrip().startswith("{"):
        return analytics.RobustnessProfile.from_json(text)
    vals = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.lower() in ("robustness", "value"):
            continue
        if line in ("inf", analytics.TRUNCATED):
            vals.append(line)
            continue
        try:
            vals.append(int(line))
        except ValueError:
            raise InvalidInput(f"{path}: line {line_no}: not an integer robustness value") from None
    finite = [v for v in vals if isinstance(v, int)]
    return analytics.RobustnessProfile.from_values(vals, max(finite) if finite else 0)


def cmd_verify_identity(args) -> int:
    profile = _read_profile(args.profile)
    dev = analytics.verify_identities(profile)
    ok = dev <= args.tolerance
    report = {"n": profile.n_test, "saturation_budget": analytics.saturation_budget(profile),
              "mean_robustness": math.fsum(profile.values) / profile.n_test,
              "sum_correct_fractions": analytics.expected_robustness(profile),
              "max_deviation": dev, "tolerance": args.tolerance, "passed": ok}
    _write(args.out, json.dumps(report, sort_keys=True) + "\n")
    return 0 if ok else EXIT_ASSERTION


EXPERIMENTS = {
    "knn-exactness": experiments.run_knn_replace_exactness,
    "identities": experiments.run_identities,
    "ensemble": experiments.run_ensemble_soundness,
    "rotation-attack": experiments.run_rotation_attack,
    "halfspace-cert": experiments.run_halfspace_certification,
    "lambda": experiments.run_lambda,
    "sphere": experiments.run_sphere_facts,
    "mnist-robustness": experiments.run_mnist_robustness_trend,
    "mnist-accuracy": experiments.run_mnist_accuracy_curves,
    "subsample": experiments.run_subsample_hits,
}
MNIST_EXPERIMENTS = ("mnist-robustness", "mnist-accuracy")
# short names kept for compatibility with existing scripts
ALIASES = {"lemma42": "knn-exactness", "thm311": "rotation-attack", "thm310": "halfspace-cert",
           "fig2a": "mnist-robustness", "fig2b": "mnist-accuracy", "thm33": "subsample"}


def _run_experiment(name: str, args) -> experiments.Verdict:
    fn = EXPERIMENTS[name]
    if name in MNIST_EXPERIMENTS:
        if not (args.images and args.labels):
            raise InvalidInput(f"reproduce {name} needs --images and --labels (MNIST IDX files)")
        return fn(args.images, args.labels, seed=args.seed)
    return fn() if name == "lambda" else fn(seed=args.seed)


def cmd_reproduce(args) -> int:
    if args.experiment == "all":
        names = [n for n in EXPERIMENTS if n not in MNIST_EXPERIMENTS or args.images]
    else:
        names = [ALIASES.get(args.experiment, args.experiment)]
    verdicts = []
    for name in names:
        v = _run_experiment(name, args)
        print(v.line(), flush=True)
        verdicts.append(v)
    if args.out:
        Path(args.out).write_text(json.dumps(
            [{"name": v.name, "passed": v.passed, "summary": v.summary, "details": v.details}
             for v in verdicts], default=_json_default, sort_keys=True) + "\n")
    return 0 if all(v.passed for v in verdicts) else EXIT_ASSERTION


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"error: USAGE: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="poisoncert", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    g.add_argument("--dist", choices=["two-circles", "sphere"], required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--d", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--truth", help="JSON with the labeling normal to reuse (sphere)")
    g.add_argument("--truth-out", help="write the sphere labeling normal as JSON")
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="train a model and write it as JSON")
    t.add_argument("--learner", required=True,
                   help="halfspace | knn:K | table | wr | rlrn-seq | rlrn-hash")
    t.add_argument("--base", default="knn:1", help="base learner for wr/rlrn-* (default knn:1)")
    t.add_argument("--budget-rule", help="const:B | linear:BETA | power:Q,C | sqrt | sphere:C,D")
    t.add_argument("--data", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(fn=cmd_train)

    a = sub.add_parser("attack", help="poison a dataset against one target")
    a.add_argument("--kind", choices=["flip-interval", "rotation", "greedy-add", "brute-force"],
                   required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--targets", help="dataset holding the target (default: --data)")
    a.add_argument("--target-index", type=int, required=True)
    a.add_argument("--budget", type=int, required=True)
    a.add_argument("--model")
    a.add_argument("--truth", help="JSON with the labeling normal (rotation)")
    a.add_argument("--class", dest="cls", default="rep", help="adversary class for brute-force")
    a.add_argument("--randomized", action="store_true", help="randomized flip-interval center")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.add_argument("--transcript", help="transcript path (default: OUT.json)")
    a.set_defaults(fn=cmd_attack)

    def cert_flags(q):
        q.add_argument("--epsilon", type=float,
                       help="halfspace sample slack (default: VC-style heuristic)")
        q.add_argument("--delta", type=float, default=DEFAULT_DELTA,
                       help="confidence for the heuristic epsilon")
        q.add_argument("--truth", help="JSON with the labeling normal for halfspace tasks")

    c = sub.add_parser("certify", help="per-point certified predictions as CSV")
    c.add_argument("--model", required=True)
    c.add_argument("--data", help="training data (checked against the model)")
    c.add_argument("--test", required=True)
    c.add_argument("--class", dest="cls", required=True, choices=[x.value for x in AdversaryClass])
    c.add_argument("--out")
    cert_flags(c)
    c.set_defaults(fn=cmd_certify)

    e = sub.add_parser("eval", help="accuracy and risk as JSON")
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)
    e.add_argument("--out")
    e.set_defaults(fn=cmd_eval)

    cu = sub.add_parser("curve", help="risk and certified accuracy by budget as CSV")
    cu.add_argument("--model", required=True)
    cu.add_argument("--test", required=True)
    cu.add_argument("--class", dest="cls", required=True, choices=[x.value for x in AdversaryClass])
    cu.add_argument("--b-max", type=int, required=True)
    cu.add_argument("--out")
    cert_flags(cu)
    cu.set_defaults(fn=cmd_curve)

    v = sub.add_parser("verify-identity", help="check the risk/robustness identities on a profile")
    v.add_argument("--profile", required=True, help="JSON profile or one value per line")
    v.add_argument("--tolerance", type=float, default=1e-12)
    v.add_argument("--out")
    v.set_defaults(fn=cmd_verify_identity)

    r = sub.add_parser("reproduce", help="run a desk-scale experiment and report pass/fail")
    r.add_argument("experiment", choices=list(EXPERIMENTS) + list(ALIASES) + ["all"],
                   metavar="EXPERIMENT", help="one of: " + ", ".join(list(EXPERIMENTS) + ["all"]))
    r.add_argument("--images", help="MNIST IDX images file")
    r.add_argument("--labels", help="MNIST IDX labels file")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="write verdict details as JSON")
    r.set_defaults(fn=cmd_reproduce)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            return args.fn(args)
    except PoisonCertError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
