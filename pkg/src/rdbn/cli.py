"""Command-line interface: ``rdbn {simulate,fit,predict,eval,diagnose,stats}``.

Options can also come from a flat ``key = value`` file given with
``--config``; explicit flags win over the file.  Exit codes: 0 success,
1 usage, 2 data error, 3 numerical or internal error.
"""
import argparse
import os
import sys

import numpy as np

from .errors import DataError, ParameterError, RDBNError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

# option name -> (type, default); shared by flags and config files
OPTIONS = {
    "input": (str, None),
    "out": (str, None),
    "K": (int, 10),
    "L": (int, 3),
    "alpha": (float, 0.1),
    "c_c": (float, 1.0),
    "c_u": (float, 1.0),
    "d_c": (float, 1.0),
    "lambda1": (float, 1.0),
    "lambda0": (float, 1.0),
    "m_shape": (float, None),
    "iterations": (int, 3000),
    "burn_in": (int, 1500),
    "holdout": (float, 0.1),
    "seed": (int, 0),
    "threads": (int, 1),
    "checkpoint_every": (int, 0),
    "resume": (bool, False),
    "record_time": (bool, False),
    "resample_dc": (bool, False),
    "nodes": (int, 40),
    "steps": (int, 5),
    "lambda_diag": (float, None),
    "lambda_off": (float, None),
    "M": (float, None),
    "undirected": (bool, False),
    "layer": (int, None),
    "heatmap_nodes": (int, 30),
    "geweke_rounds": (int, 5000),
}

COMMON = ("input", "out", "seed", "threads", "config")
HYPER = ("K", "L", "alpha", "c_c", "c_u", "d_c", "lambda1", "lambda0", "m_shape",
         "iterations", "burn_in", "resample_dc")
COMMANDS = {
    "simulate": ("Sample a network and its latent state from the model.",
                 HYPER + ("nodes", "steps", "lambda_diag", "lambda_off", "M", "undirected")),
    "fit": ("Fit the sampler to an edge list with a random holdout.",
            HYPER + ("holdout", "checkpoint_every", "resume", "record_time")),
    "predict": ("Write held-out link probabilities from a fit directory.", ()),
    "eval": ("Write predictions plus AUC / average-precision summary.", ()),
    "diagnose": ("Joint-distribution test and membership / propagation exports.",
                 ("layer", "heatmap_nodes", "geweke_rounds")),
    "stats": ("Print N, T, positive links and sparsity of an edge list.", ()),
}


class UsageError(RDBNError):
    exit_code = EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _truthy(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def build_parser():
    parser = _Parser(prog="rdbn", description="Recurrent Dirichlet belief network for dynamic networks.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (help_text, extra) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for opt in COMMON + extra:
            flag = "--" + opt.replace("_", "-")
            if opt == "config":
                p.add_argument(flag, metavar="FILE", help="flat key = value file; flags override it")
                continue
            kind, default = OPTIONS[opt]
            if kind is bool:
                p.add_argument(flag, dest=opt, action="store_const", const=True, default=None,
                               help=f"(default {default})")
            else:
                p.add_argument(flag, dest=opt, type=kind, default=None, metavar=opt.upper(),
                               help=f"(default {default})")
    return parser


def read_config(path, allowed):
    """Parse a ``key = value`` file, rejecting unknown keys with their line number."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"config {path}: {exc.strerror}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise UsageError(f"{path}:{no}: unknown key {key!r}")
        kind = OPTIONS[key][0]
        try:
            out[key] = _truthy(value) if kind is bool else kind(value)
        except ValueError:
            raise UsageError(f"{path}:{no}: bad value {value!r} for {key!r}") from None
    return out


def resolve(args):
    """Merge defaults < config file < flags into a plain dict."""
    allowed = set(COMMON + COMMANDS[args.command][1]) - {"config"}
    cfg = read_config(args.config, allowed) if getattr(args, "config", None) else {}
    opts = {}
    for key in allowed:
        flag = getattr(args, key, None)
        opts[key] = flag if flag is not None else cfg.get(key, OPTIONS[key][1])
    return opts


def _hyperparams(o):
    from .model import Hyperparams

    return Hyperparams(K=o["K"], L=o["L"], alpha=o["alpha"], c_c=o["c_c"], c_u=o["c_u"],
                       d_c=o["d_c"], lambda1=o["lambda1"], lambda0=o["lambda0"],
                       m_shape=o["m_shape"], iterations=o["iterations"], burn_in=o["burn_in"],
                       seed=o["seed"], resample_dc=o["resample_dc"])


def _require(o, *keys):
    for k in keys:
        if o.get(k) is None:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _require_file(path):
    if not os.path.isfile(path):
        raise DataError(f"input not found: {path}")


def _set_threads(n):
    if n < 1:
        raise ParameterError("--threads must be at least 1")
    try:
        import numba

        if "NUMBA_THREADING_LAYER" not in os.environ:
            numba.config.THREADING_LAYER = "workqueue"
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:
        pass


def cmd_simulate(o):
    from .distributions import family_stream
    from .graph import save_edge_list
    from .model import forward_simulate, save_checkpoint

    _require(o, "out")
    hp = _hyperparams(o)
    Lambda = None
    if o["lambda_diag"] is not None or o["lambda_off"] is not None:
        if o["lambda_diag"] is None or o["lambda_off"] is None:
            raise UsageError("--lambda-diag and --lambda-off go together")
        Lambda = np.where(np.eye(hp.K, dtype=bool), o["lambda_diag"], o["lambda_off"])
    net, state = forward_simulate(hp, o["nodes"], o["steps"], family_stream(o["seed"], "simulate", 0),
                                  directed=not o["undirected"], Lambda=Lambda, M=o["M"])
    os.makedirs(o["out"], exist_ok=True)
    save_edge_list(net, os.path.join(o["out"], "network.txt"))
    save_checkpoint(os.path.join(o["out"], "truth"), state, hp, 0)
    print(f"wrote {net.n_links} links over {net.n_steps} steps to {o['out']}")


def cmd_fit(o):
    from .distributions import family_stream
    from .graph import TrainingView, load_edge_list, load_mask, save_mask, split_holdout
    from .inference import fit

    _require(o, "input", "out")
    _require_file(o["input"])
    hp = _hyperparams(o)
    net = load_edge_list(o["input"])
    mask_path = os.path.join(o["out"], "mask.csv")
    if o["resume"]:
        _require_file(mask_path)
        mask = load_mask(mask_path, o["holdout"])
        view = TrainingView.from_network(net, mask)
    else:
        view, mask = split_holdout(net, o["holdout"], family_stream(o["seed"], "holdout", 0))
        os.makedirs(o["out"], exist_ok=True)
        save_mask(mask, mask_path)
    res = fit(view, mask, hp, out_dir=o["out"], checkpoint_every=o["checkpoint_every"],
              resume=o["resume"], record_time=o["record_time"])
    print(f"fit done: {hp.iterations} iterations, {res.n_samples} retained samples")


def _load_fit(o):
    from .graph import load_mask
    from .inference import SampleCollection
    from .model import load_checkpoint

    _require(o, "out")
    ckpt = os.path.join(o["out"], "checkpoint")
    _require_file(os.path.join(ckpt, "manifest.json"))
    _require_file(os.path.join(o["out"], "mask.csv"))
    state, hp, it, extra, _ = load_checkpoint(ckpt)
    mask = load_mask(os.path.join(o["out"], "mask.csv"))
    samples = SampleCollection(extra["heldout"], extra["survival_sum"], extra["n_samples"].item(), state)
    return state, hp, mask, samples


def cmd_predict(o):
    from .evaluation import PredictionReport, predict_probs, write_report

    _, _, mask, samples = _load_fit(o)
    probs, used = predict_probs(samples, mask)
    rep = PredictionReport(mask.dyads, mask.labels, probs, float("nan"), float("nan"), used)
    path = os.path.join(o["out"], "predictions.csv")
    write_report(rep, path)
    print(f"wrote {len(rep)} predictions to {path}")


def cmd_eval(o):
    from .evaluation import evaluate, write_report

    _, _, mask, samples = _load_fit(o)
    rep = evaluate(samples, mask)
    write_report(rep, os.path.join(o["out"], "predictions.csv"), os.path.join(o["out"], "summary.csv"))
    print("auc,avg_precision,n_entries,n_samples")
    print("%.17g,%.17g,%d,%d" % (rep.auc, rep.avg_precision, len(rep), rep.n_samples_used))


def cmd_diagnose(o):
    from .diagnostics import (GewekeConfig, export_membership_heatmap, export_propagation_summary,
                              geweke_check, write_geweke)

    _require(o, "out")
    os.makedirs(o["out"], exist_ok=True)
    ckpt = os.path.join(o["out"], "checkpoint", "manifest.json")
    if os.path.isfile(ckpt):
        from .model import load_checkpoint

        state = load_checkpoint(os.path.dirname(ckpt))[0]
        layer = state.L - 1 if o["layer"] is None else o["layer"]
        if not 0 <= layer < state.L:
            raise ParameterError(f"--layer must lie in [0, {state.L})")
        export_membership_heatmap(state, layer, range(min(o["heatmap_nodes"], state.N)),
                                  os.path.join(o["out"], "membership.csv"))
        export_propagation_summary(state, os.path.join(o["out"], "propagation.csv"))
        print(f"wrote membership.csv and propagation.csv to {o['out']}")
    if o["geweke_rounds"] > 0:
        cfg = GewekeConfig(n_rounds=o["geweke_rounds"])
        res = geweke_check(seed=o["seed"], config=cfg)
        write_geweke(res, os.path.join(o["out"], "geweke.csv"))
        worst = max(abs(v[0]) for v in res.values())
        verdict = "pass" if worst < cfg.z_threshold else "FAIL"
        print(f"geweke: max |z| = {worst:.3f} ({verdict})")
        if verdict == "FAIL":
            raise RDBNError("joint-distribution test failed")


def cmd_stats(o):
    from .graph import dataset_stats, load_edge_list

    _require(o, "input")
    _require_file(o["input"])
    N, T, n_e, sparsity = dataset_stats(load_edge_list(o["input"]))
    print(f"N={N} T={T} N_E={n_e} S%={sparsity:.4f}")


HANDLERS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict, "eval": cmd_eval,
            "diagnose": cmd_diagnose, "stats": cmd_stats}


def run(argv=None):
    """Execute one command; returns the exit status."""
    stage = "usage"
    try:
        args = build_parser().parse_args(argv)
        stage = args.command
        opts = resolve(args)
        _set_threads(opts["threads"])
        HANDLERS[args.command](opts)
        return EXIT_OK
    except UsageError as exc:
        print(f"rdbn {stage}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"rdbn {stage}: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"rdbn {stage}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RDBNError as exc:
        print(f"rdbn {stage}: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", EXIT_INTERNAL)
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"rdbn {stage}: numerical error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
