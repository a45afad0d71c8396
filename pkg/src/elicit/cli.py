"""Command-line surface: dataset preparation, training, evaluation,
hyperparameter sweeps, one-shot elicitation and report rendering."""

import argparse
import hashlib
import itertools
import os
import sys

import numpy as np

from . import baselines, data, evaluate, model

METHODS = ("MOSTPOP", "RAN++", "POP++", "RBMF", "RBMF++", "DRE")
SNAPSHOT = "matrix.snapshot"
USERS_MAP = "users.map"
ITEMS_MAP = "items.map"

CONFIG_DEFAULTS = {
    "dataset": "",
    "delimiter": "::",
    "threshold": 3.5,
    "min_count": 5,
    "test_frac": 0.2,
    "val_frac": 0.1,
    "split_seed": 0,
    "k": 50,
    "d": 300,
    "lr": 0.005,
    "epochs": 400,
    "batch_size": 256,
    "t0": 10.0,
    "te": 0.1,
    "retrain_epochs": 100,
    "seed": 0,
    "val_every": 20,
    "runs": 5,
    "Ns": "10,20,50,100",
    "out": ".",
}


def load_config(path=None, overrides=None):
    """Flat key=value config file, overridden by CLI flags."""
    cfg = dict(CONFIG_DEFAULTS)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in cfg:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                cfg[key] = type(CONFIG_DEFAULTS[key])(value.strip())
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    return cfg


def stream_seed(master_seed, method, run):
    """Per-(method, run) RNG stream derived by SHA-256 of 'master:method:run',
    truncated to 63 bits. Documented so runs are reproducible independently."""
    digest = hashlib.sha256(f"{master_seed}:{method}:{run}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def train_config(cfg, seed=None):
    return model.TrainConfig(
        k=cfg["k"], d=cfg["d"], lr=cfg["lr"], epochs=cfg["epochs"],
        batch_size=cfg["batch_size"], t0=cfg["t0"], te=cfg["te"],
        retrain_epochs=cfg["retrain_epochs"],
        seed=cfg["seed"] if seed is None else seed, val_every=cfg["val_every"],
    )


def _restrict(matrix, user_ids):
    """View of the matrix over a user subset (same item space)."""
    return data.RatingMatrix(
        n=len(user_ids), m=matrix.m, rows=[matrix.rows[u] for u in user_ids],
        user_index={}, item_index=matrix.item_index,
    )


def _load_dataset(data_dir):
    matrix = data.load_snapshot(
        os.path.join(data_dir, SNAPSHOT),
        users_map=os.path.join(data_dir, USERS_MAP),
        items_map=os.path.join(data_dir, ITEMS_MAP),
    )
    return matrix


def cmd_prepare(args):
    cfg = load_config(args.config, vars(args))
    records = data.load_interactions(cfg["dataset"], delimiter=cfg["delimiter"])
    records = data.binarize(records, threshold=cfg["threshold"])
    records = data.filter_min_ratings(records, cfg["min_count"])
    matrix = data.build_matrix(records)
    os.makedirs(cfg["out"], exist_ok=True)
    data.save_snapshot(matrix, os.path.join(cfg["out"], SNAPSHOT))
    data.save_maps(matrix, os.path.join(cfg["out"], USERS_MAP),
                   os.path.join(cfg["out"], ITEMS_MAP))
    print(f"n={matrix.n} m={matrix.m} nnz={matrix.nnz} "
          f"sparsity={100.0 * matrix.sparsity:.2f}%")
    return 0


def _train_once(matrix, split, tcfg, history_path=None):
    phi, theta, history = model.train(matrix, split, tcfg)
    seeds = model.extract_seeds(phi)
    theta = model.retrain_decoder(
        matrix, split, seeds, theta, tcfg.retrain_epochs,
        lr=tcfg.lr, batch_size=tcfg.batch_size, seed=tcfg.seed,
    )
    if history_path:
        with open(history_path, "w", encoding="utf-8") as fh:
            fh.write("epoch\ttau\tloss\tval_ndcg20\n")
            for row in history:
                val = "" if row["val_ndcg"] is None else f"{row['val_ndcg']:.6f}"
                fh.write(f"{row['epoch']}\t{row['tau']:.6g}\t{row['loss']:.6f}\t{val}\n")
    return phi, theta, seeds, history


def cmd_train(args):
    cfg = load_config(args.config, vars(args))
    matrix = _load_dataset(args.data_dir)
    split = data.split_users(matrix, cfg["test_frac"], cfg["val_frac"], cfg["split_seed"])
    tcfg = train_config(cfg)
    os.makedirs(cfg["out"], exist_ok=True)
    phi, theta, seeds, _ = _train_once(
        matrix, split, tcfg, history_path=os.path.join(cfg["out"], "history.tsv"))
    manifest = {key: cfg[key] for key in sorted(cfg) if key not in ("out", "dataset")}
    manifest["data_fingerprint"] = data.matrix_fingerprint(matrix)
    model.save_checkpoint(os.path.join(cfg["out"], "checkpoint.dre"),
                          phi, theta, seeds, manifest=manifest)
    baselines.save_seeds(seeds, os.path.join(cfg["out"], "seeds.txt"))
    print(f"trained k={tcfg.k} seeds -> {os.path.join(cfg['out'], 'seeds.txt')}")
    return 0


def _dre_artifacts(matrix, split, tcfg):
    phi, theta, seeds, _ = _train_once(matrix, split, tcfg)
    return seeds, theta


def run_eval(matrix, split, cfg, methods, runs, Ns, checkpoint=None,
             external_seeds=None):
    """Evaluate each method over `runs` seeded repetitions on the fixed test
    split; stochastic methods re-select seeds and re-train per run."""
    train_view = _restrict(matrix, split.train_users)
    m = matrix.m
    n_max = max(Ns)
    master = cfg["seed"]
    external_seeds = external_seeds or {}
    methods = [meth.upper() for meth in methods]
    for meth in methods:
        if meth not in METHODS and meth not in external_seeds:
            raise ValueError(f"unknown method {meth!r}")

    dre_seeds_per_run = {}
    run_reports = {meth: [] for meth in methods}
    for run in range(runs):
        if "DRE" in methods:
            if checkpoint is not None:
                phi, theta, seeds = model.load_checkpoint(checkpoint)
                dre = (seeds, theta)
            else:
                dre = _dre_artifacts(
                    matrix, split, train_config(cfg, seed=stream_seed(master, "DRE", run)))
            dre_seeds_per_run[run] = dre[0]

        for meth in methods:
            rng = np.random.Generator(
                np.random.PCG64(stream_seed(master, meth, run)))
            if meth == "DRE":
                seeds, theta = dre
                predictor = lambda z, th=theta, s=seeds: model.recommend(th, s, z, n_max)
            elif meth == "MOSTPOP":
                excluded = dre_seeds_per_run.get(run, np.array([], dtype=np.int64))
                ranking = baselines.mostpop_ranking(train_view, excluded, n_max)
                predictor = lambda z, r=ranking: r
                # candidate universe shared with the DRE run when present,
                # otherwise the full itemset
                seeds = excluded
            elif meth == "RAN++":
                seeds = baselines.select_random(m, cfg["k"], rng)
                theta = baselines.plusplus_decoder(
                    matrix, split, seeds,
                    train_config(cfg, seed=stream_seed(master, meth, run)))
                predictor = lambda z, th=theta, s=seeds: model.recommend(th, s, z, n_max)
            elif meth == "POP++":
                seeds = baselines.select_popular(train_view, cfg["k"])
                theta = baselines.plusplus_decoder(
                    matrix, split, seeds,
                    train_config(cfg, seed=stream_seed(master, meth, run)))
                predictor = lambda z, th=theta, s=seeds: model.recommend(th, s, z, n_max)
            elif meth == "RBMF":
                seeds = baselines.rbmf_select(
                    train_view, cfg["k"], seed=stream_seed(master, meth, run))
                lin = baselines.rbmf_decoder(train_view, seeds)
                predictor = lambda z, ln=lin, s=seeds: model._rank_candidates(
                    ln.predict(z), s, n_max)
            elif meth == "RBMF++":
                seeds = baselines.rbmf_select(
                    train_view, cfg["k"], seed=stream_seed(master, "RBMF", run))
                theta = baselines.plusplus_decoder(
                    matrix, split, seeds,
                    train_config(cfg, seed=stream_seed(master, meth, run)))
                predictor = lambda z, th=theta, s=seeds: model.recommend(th, s, z, n_max)
            else:  # externally supplied seed list, paired with the neural decoder
                seeds = external_seeds[meth]
                theta = baselines.plusplus_decoder(
                    matrix, split, seeds,
                    train_config(cfg, seed=stream_seed(master, meth, run)))
                predictor = lambda z, th=theta, s=seeds: model.recommend(th, s, z, n_max)
            run_reports[meth].append(
                evaluate.evaluate_method(predictor, matrix, split, seeds, Ns))

    pairings = []
    if "DRE" in methods:
        pairings = [("DRE", meth) for meth in methods if meth != "DRE"]
    return evaluate.aggregate_runs(
        run_reports, pairings,
        run_seeds=[stream_seed(master, "DRE", r) for r in range(runs)])


def cmd_eval(args):
    cfg = load_config(args.config, vars(args))
    matrix = _load_dataset(args.data_dir)
    if args.checkpoint:
        manifest_path = args.checkpoint + ".manifest"
        if os.path.exists(manifest_path):
            manifest = dict(
                line.rstrip("\n").partition("=")[::2]
                for line in open(manifest_path, encoding="utf-8"))
            fp = data.matrix_fingerprint(matrix)
            if manifest.get("data_fingerprint", fp) != fp:
                raise SystemExit(
                    f"checkpoint was trained on different data "
                    f"(fingerprint {manifest['data_fingerprint']} != {fp})")
    split = data.split_users(matrix, cfg["test_frac"], cfg["val_frac"], cfg["split_seed"])
    methods = [meth.strip() for meth in args.methods.split(",")]
    external = {}
    for spec in args.external_seeds or []:
        name, _, path = spec.partition("=")
        external[name.upper()] = baselines.load_seeds(path)
    Ns = tuple(int(t) for t in str(cfg["Ns"]).split(","))
    report = run_eval(matrix, split, cfg, methods, cfg["runs"], Ns,
                      checkpoint=args.checkpoint, external_seeds=external)
    os.makedirs(cfg["out"], exist_ok=True)
    json_path = os.path.join(cfg["out"], "eval_report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    evaluate.write_report_table(report, os.path.join(cfg["out"], "eval_report.tsv"))
    print(f"wrote {json_path}")
    return 0


GRID_KEYS = ("t0", "te", "lr", "d", "epochs", "k")


def parse_grid(spec):
    """Grid spec like 't0=1,10,20,50 te=0.5,0.1,0.01,t0'; the literal value
    't0' inside the te list means a constant temperature te=t0."""
    grid = {}
    for part in spec.split():
        key, _, values = part.partition("=")
        if key not in GRID_KEYS:
            raise ValueError(f"unknown grid key {key!r}")
        parsed = []
        for tok in values.split(","):
            if key == "te" and tok.lower() == "t0":
                parsed.append("t0")
            else:
                parsed.append(type(CONFIG_DEFAULTS[key])(tok))
        grid[key] = parsed
    if not grid:
        raise ValueError("empty grid spec")
    return grid


def run_grid(matrix, split, cfg, grid, max_cells=256):
    """Cartesian sweep; each cell runs the full training pipeline and is
    scored by NDCG@20 on the validation users with hard seeds."""
    keys = sorted(grid)
    cells = list(itertools.product(*(grid[key] for key in keys)))
    if len(cells) > max_cells:
        print(f"warning: grid has {len(cells)} cells, capping at {max_cells}",
              file=sys.stderr)
        cells = cells[:max_cells]
    rows = []
    for values in cells:
        cell_cfg = dict(cfg)
        cell_cfg.update(dict(zip(keys, values)))
        if cell_cfg["te"] == "t0":
            cell_cfg["te"] = cell_cfg["t0"]
        tcfg = train_config(cell_cfg)
        phi, theta, seeds, _ = _train_once(matrix, split, tcfg)
        score = model._validation_ndcg(theta, seeds, matrix, split.val_users, N=20)
        rows.append({"params": dict(zip(keys, values)), "val_ndcg20": score})
    best = max(rows, key=lambda r: r["val_ndcg20"])
    return rows, best


def _pivot_t0_te(rows):
    """Table 3-style layout: te down the side, t0 across the top."""
    t0s = sorted({r["params"]["t0"] for r in rows})
    tes = []
    for r in rows:
        if r["params"]["te"] not in tes:
            tes.append(r["params"]["te"])
    lines = ["te\\t0\t" + "\t".join(str(t) for t in t0s)]
    for te in tes:
        cells = []
        for t0 in t0s:
            match = [r for r in rows
                     if r["params"]["t0"] == t0 and r["params"]["te"] == te]
            cells.append(f"{match[0]['val_ndcg20']:.4f}" if match else "")
        lines.append(f"{te}\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def cmd_grid(args):
    cfg = load_config(args.config, vars(args))
    matrix = _load_dataset(args.data_dir)
    split = data.split_users(matrix, cfg["test_frac"], cfg["val_frac"], cfg["split_seed"])
    grid = parse_grid(args.grid)
    rows, best = run_grid(matrix, split, cfg, grid, max_cells=args.max_cells)
    os.makedirs(cfg["out"], exist_ok=True)
    keys = sorted(grid)
    with open(os.path.join(cfg["out"], "sweep.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\t".join(keys) + "\tval_ndcg20\n")
        for r in rows:
            fh.write("\t".join(str(r["params"][key]) for key in keys)
                     + f"\t{r['val_ndcg20']:.6f}\n")
    if set(keys) == {"t0", "te"}:
        with open(os.path.join(cfg["out"], "sweep_t0_te.tsv"), "w", encoding="utf-8") as fh:
            fh.write(_pivot_t0_te(rows))
    print("best: " + " ".join(f"{key}={best['params'][key]}" for key in keys)
          + f" val_ndcg20={best['val_ndcg20']:.4f}")
    return 0


def cmd_recommend(args):
    phi, theta, seeds = model.load_checkpoint(args.checkpoint)
    _, inverse = data.load_item_map(args.items_map)
    k = len(seeds)
    if args.feedback:
        with open(args.feedback, "r", encoding="utf-8") as fh:
            tokens = fh.read().split()
        if len(tokens) != k:
            raise SystemExit(f"feedback file must hold exactly {k} binary values, "
                             f"got {len(tokens)}")
        try:
            z = np.array([float(t) for t in tokens])
        except ValueError as exc:
            raise SystemExit(f"malformed feedback value: {exc}")
        if not set(np.unique(z)) <= {0.0, 1.0}:
            raise SystemExit("feedback values must be 0 or 1")
    else:
        z = np.zeros(k)
        for i, s in enumerate(seeds):
            while True:
                ans = input(f"Do you like {inverse[int(s)]}? [0/1] ").strip()
                if ans in ("0", "1"):
                    z[i] = float(ans)
                    break
                print("please answer 0 or 1")
    ranking = model.recommend(theta, seeds, z, args.top_n)
    for item in ranking:
        print(inverse[int(item)])
    return 0


def significance_stars(p):
    """Boundary-inclusive star annotation for p-values."""
    if p <= 0.005:
        return "***"
    if p <= 0.01:
        return "**"
    if p <= 0.05:
        return "*"
    return ""


def render_report(report, dre="DRE"):
    """Comparison table: per metric x N, every method's mean, the improvement
    of the end-to-end model over the best baseline, and significance stars
    from the pooled paired t-test against that baseline."""
    if dre not in report.methods:
        raise ValueError(f"report has no {dre!r} column")
    others = [meth for meth in report.methods if meth != dre]
    lines = ["\t".join(["metric", "N"] + report.methods + ["best_baseline", "improv", "sig"])]
    for metric in ("P", "NDCG"):
        for N in report.Ns:
            means = {meth: report.cells[(meth, metric, N)]["mean"] for meth in report.methods}
            best = max(others, key=lambda meth: means[meth]) if others else None
            cells = [f"{means[meth]:.4f}" for meth in report.methods]
            if best is None or means[best] == 0.0:
                improv, stars = "", ""
            else:
                pct = 100.0 * (means[dre] - means[best]) / means[best]
                improv = f"{pct:.2f}%"
                test = report.tests.get((dre, best, metric, N))
                stars = significance_stars(test["pooled"][1]) if test else ""
            lines.append("\t".join([metric, str(N)] + cells + [best or "", improv, stars]))
    return "\n".join(lines) + "\n"


def cmd_report(args):
    with open(args.dump, "r", encoding="utf-8") as fh:
        report = evaluate.EvalReport.from_json(fh.read())
    if len(report.methods) < 2:
        raise SystemExit("need at least 2 methods to compare")
    sys.stdout.write(render_report(report, dre=args.dre_method))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="elicit",
        description="Seed-itemset rating elicitation: training, baselines and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_dir=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master RNG seed")
        if data_dir:
            p.add_argument("--data-dir", required=True,
                           help="directory holding matrix.snapshot + maps")

    p = sub.add_parser("prepare", help="ingest a raw interaction log")
    p.add_argument("--dataset", help="raw interaction file")
    p.add_argument("--delimiter", help="field delimiter (default '::')")
    p.add_argument("--threshold", type=float, help="binarization threshold")
    p.add_argument("--min-count", dest="min_count", type=int)
    common(p, data_dir=False)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="end-to-end training + decoder retraining")
    for flag, typ in (("--k", int), ("--d", int), ("--lr", float), ("--epochs", int),
                      ("--batch-size", int), ("--t0", float), ("--te", float),
                      ("--retrain-epochs", int), ("--val-every", int),
                      ("--split-seed", int)):
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="multi-run evaluation of selected methods")
    p.add_argument("--methods", default="MOSTPOP,RAN++,POP++,RBMF,RBMF++,DRE")
    p.add_argument("--runs", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--ns", dest="Ns", help="comma-separated ranking cutoffs")
    p.add_argument("--checkpoint", help="reuse a trained DRE checkpoint")
    p.add_argument("--external-seeds", action="append", metavar="NAME=PATH",
                   help="evaluate an external seed list with the neural decoder")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="hyperparameter sweep on validation NDCG@20")
    p.add_argument("--grid", required=True, help="e.g. 't0=1,10 te=0.5,0.1,t0'")
    p.add_argument("--max-cells", type=int, default=256)
    p.add_argument("--k", type=int)
    p.add_argument("--epochs", type=int)
    common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("recommend", help="one-shot elicitation for a new user")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--items-map", required=True)
    p.add_argument("--interactive", action="store_true")
    p.add_argument("--feedback", help="file with k space/newline-separated 0/1 values")
    p.add_argument("--top-n", type=int, default=10)
    p.set_defaults(func=cmd_recommend)

    p = sub.add_parser("report", help="render a comparison table from an eval dump")
    p.add_argument("--dump", required=True, help="eval_report.json")
    p.add_argument("--dre-method", default="DRE")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
