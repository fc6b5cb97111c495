"""Command-line entry point: ``plangen {train,generate,baseline,evaluate,validate}``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .baseline import GenerationFailed, random_generate
from .config import ConfigError, RunConfig, load_config
from .consistency import ValidatorError, generation_order, make_validator
from .evaluate import (
    EvaluationError,
    ExternalPlannerError,
    compute_norms,
    external_plan,
    features,
    load_norms,
    plan,
    raw_nodes,
    save_norms,
)
from .genmdp import GenerationMDP
from .nlm.model import read_checkpoint
from .pddl import PDDLError, emit_problem, load_problem, validate_plan
from .ppo import GenerationPolicy, Trainer, TrainingError, load_policy

log = logging.getLogger("plangen")

MANIFEST_HEADER = ("file", "atoms", "objects", "gen_time_s", "discarded_attempts")
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _setup_logging():
    level = os.environ.get("PLANGEN_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _mdp(cfg: RunConfig, max_atoms=None) -> GenerationMDP:
    gen = cfg.gen if max_atoms is None else dataclasses.replace(cfg.gen, max_init_atoms=max_atoms)
    return GenerationMDP(cfg.load_domain(), cfg.validator, gen)


# ---------------------------------------------------------------------------
# Norms


def ensure_norms(cfg: RunConfig) -> dict:
    """Per-planner mean expansions over a seeded baseline corpus, cached to a file."""
    path = cfg.norm_cache_path()
    want = {
        "domain": cfg.load_domain().name,
        "max_init_atoms": str(cfg.gen.max_init_atoms),
        "planners": ",".join(cfg.evaluation.planners),
        "budget": str(cfg.evaluation.budget),
        "corpus_size": str(cfg.evaluation.norm_corpus_size),
        "seed": str(cfg.seed),
    }
    if os.path.exists(path):
        norms, meta = load_norms(path)
        if meta == want:
            return norms
        log.info("norm cache %s was built for different settings; rebuilding", path)
    mdp = _mdp(cfg)
    corpus = [
        random_generate(mdp.domain, None, mdp.config, [cfg.seed, 7, i], cfg.baseline_min_atoms,
                        cfg.min_size_slack, cfg.retry_cap, mdp=mdp).problem
        for i in range(cfg.evaluation.norm_corpus_size)
    ]
    norms = compute_norms(corpus, cfg.evaluation.planners, cfg.evaluation.budget)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    save_norms(path, norms, want)
    return norms


# ---------------------------------------------------------------------------
# Corpus writing (shared by generate and baseline)

_WORKER = {}


def _worker_init(cfg: RunConfig, checkpoint, max_atoms):
    mdp = _mdp(cfg, max_atoms)
    policy = None
    if checkpoint:
        policy = GenerationPolicy(mdp, cfg.nlm, cfg.seed)
        header, arrays = read_checkpoint(checkpoint)
        load_policy(policy, header, arrays)
    _WORKER.update(cfg=cfg, mdp=mdp, policy=policy)


def _worker_sample(args):
    index, seed = args
    cfg, mdp, policy = _WORKER["cfg"], _WORKER["mdp"], _WORKER["policy"]
    name = f"{mdp.domain.name}_{index:04d}"
    if policy is None:
        res = random_generate(mdp.domain, None, mdp.config, [seed, index], cfg.baseline_min_atoms,
                              cfg.min_size_slack, cfg.retry_cap, name=name, mdp=mdp)
    else:
        res = policy.generate(mdp, [seed, index], cfg.min_size_slack, cfg.retry_cap, name=name)
    return index, emit_problem(res.problem), len(res.problem.init), len(res.problem.objects), res.gen_time_s, res.discarded_attempts


def _write_corpus(args, cfg: RunConfig, checkpoint) -> int:
    out = args.out or os.path.join(cfg.out, "corpus")
    os.makedirs(out, exist_ok=True)
    seed = cfg.seed if args.seed is None else args.seed
    jobs = [(i, seed) for i in range(1, args.count + 1)]
    init_args = (cfg, checkpoint, args.max_atoms)
    if args.jobs > 1 and jobs:
        with ProcessPoolExecutor(args.jobs, initializer=_worker_init, initargs=init_args) as pool:
            rows = list(pool.map(_worker_sample, jobs))
    else:
        _worker_init(*init_args)
        rows = [_worker_sample(j) for j in jobs]
    with open(os.path.join(out, "manifest.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(MANIFEST_HEADER)
        for index, text, atoms, objects, gen_time, discarded in rows:
            fname = f"p{index:04d}.pddl"
            with open(os.path.join(out, fname), "w") as pf:
                pf.write(text)
            w.writerow([fname, atoms, objects, f"{gen_time:.6f}", discarded])
    print(f"wrote {len(rows)} problem(s) to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Commands


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    iterations = args.iterations if args.iterations is not None else cfg.ppo.iterations
    if iterations < 1:
        raise ConfigError("--iterations must be >= 1")
    norms = ensure_norms(cfg)
    trainer = Trainer(_mdp(cfg), cfg.nlm, cfg.ppo, norms, cfg.evaluation.planners, cfg.evaluation.budget, cfg.seed)
    ckpt_out = os.path.join(out, "checkpoint.npz")
    if args.checkpoint:
        if not os.path.exists(args.checkpoint):
            raise ConfigError(f"checkpoint not found: {args.checkpoint}")
        try:
            trainer.load(args.checkpoint)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"incompatible checkpoint: {exc}") from None
        log.info("resuming at iteration %d", trainer.iteration)

    def progress(row):
        log.info("iter %d reward %.4f difficulty %.4f discard %.2f", row["iter"], row["mean_reward"],
                 row["mean_difficulty"], row["discard_rate"])

    trainer.fit(iterations, os.path.join(out, "metrics.csv"), ckpt_out, progress)
    print(f"trained to iteration {trainer.iteration}; checkpoint {ckpt_out}")
    return EXIT_OK


def _check_checkpoint(cfg: RunConfig, path):
    if not path or not os.path.exists(path):
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        header, arrays = read_checkpoint(path)
        policy = GenerationPolicy(_mdp(cfg), cfg.nlm, cfg.seed)
        load_policy(policy, header, arrays)
    except (ValueError, KeyError, OSError) as exc:
        raise ConfigError(f"incompatible checkpoint {path}: {exc}") from None
    if header["meta"].get("domain") not in (None, policy.mdp.domain.name):
        raise ConfigError(f"checkpoint was trained on domain {header['meta']['domain']!r}")


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    _check_count(args)
    _check_checkpoint(cfg, args.checkpoint)
    return _write_corpus(args, cfg, args.checkpoint)


def cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    if args.min_size_slack is not None:
        cfg.min_size_slack = None if args.min_size_slack < 0 else args.min_size_slack
    _check_count(args)
    return _write_corpus(args, cfg, None)


def _check_count(args):
    if args.count < 0:
        raise ConfigError("--count must be >= 0")
    if args.max_atoms is not None and args.max_atoms < 1:
        raise ConfigError("--max-atoms must be >= 1")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")


def _eval_one(args):
    path, domain_path, cfg = args
    problem = load_problem(path, cfg.load_domain())
    ev = cfg.evaluation
    try:
        if ev.external_command:
            res = external_plan(problem, ev.external_command, cfg.domain_file or domain_path,
                                ev.external_pattern, ev.external_timeout)
            return path, {"external": res.nodes_expanded}, None
        return path, raw_nodes(problem, ev.planners, ev.budget), None
    except (EvaluationError, ExternalPlannerError) as exc:
        return path, None, str(exc)


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    corpus = args.corpus
    files = sorted(glob.glob(os.path.join(corpus, "*.pddl")))
    if not files:
        raise ConfigError(f"no .pddl files in {corpus}")
    domain = cfg.load_domain()
    problems = [load_problem(f, domain) for f in files]
    times = {}
    manifest = os.path.join(corpus, "manifest.csv")
    if os.path.exists(manifest):
        with open(manifest, newline="") as f:
            for row in csv.DictReader(f):
                times[row["file"]] = float(row["gen_time_s"])

    domain_path = None
    if cfg.evaluation.external_command and cfg.domain_file is None:
        from .domains import domain_text

        domain_path = os.path.join(corpus, f".{cfg.domain}.domain.pddl")
        with open(domain_path, "w") as f:
            f.write(domain_text(cfg.domain))
    jobs = [(f, domain_path, cfg) for f in files]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_eval_one, jobs))
    else:
        results = [_eval_one(j) for j in jobs]

    failures = [(p, err) for p, nodes, err in results if err is not None]
    solved = [(p, nodes) for p, nodes, err in results if err is None]
    planners = list(solved[0][1]) if solved else []
    if cfg.evaluation.external_command:
        norms = {"external": float(np.mean([n["external"] for _, n in solved]))} if solved else {}
    else:
        norms = ensure_norms(cfg)

    feats = np.vstack([features(p) for p in problems])
    per_problem_div = _per_problem_diversity(feats)
    report = args.out or os.path.join(corpus, "report.csv")
    rows = []
    by_path = dict(solved)
    for i, f in enumerate(files):
        nodes = by_path.get(f)
        diff = float(np.mean([nodes[k] / norms[k] for k in planners])) if nodes else float("nan")
        rows.append([os.path.basename(f), len(problems[i].init), diff, per_problem_div[i],
                     times.get(os.path.basename(f), float("nan"))] + [nodes[k] if nodes else "" for k in planners])
    with open(report, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "size", "difficulty", "diversity", "time"] + [f"{k}_nodes" for k in planners])
        for r in rows:
            w.writerow([r[0], r[1], _num(r[2]), _num(r[3]), _num(r[4])] + r[5:])
        summary = ["mean"] + [_num(_nanmean([r[c] for r in rows])) for c in (1, 2, 3, 4)]
        w.writerow(summary + [""] * len(planners))
    print(f"size={summary[1]} difficulty={summary[2]} diversity={summary[3]} time={summary[4]}")
    print(f"report written to {report}")
    for p, err in failures:
        print(f"UNSOLVED {os.path.basename(p)}: {err}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def _per_problem_diversity(feats):
    """Mean distance from each problem to the others; ``nan`` for a single problem."""
    from sklearn.metrics import pairwise_distances

    from .evaluate import ProblemFeaturizer

    n = len(feats)
    if n < 2:
        return [float("nan")] * n
    x = ProblemFeaturizer().fit_transform(list(feats))
    if x.shape[1] == 0:
        return [0.0] * n
    d = pairwise_distances(x)
    return list(d.sum(axis=1) / (n - 1))


def _nanmean(values):
    arr = np.array(values, dtype=float)
    return float(np.mean(arr[~np.isnan(arr)])) if (~np.isnan(arr)).any() else float("nan")


def _num(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "n/a"
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    domain = cfg.load_domain()
    problem = load_problem(args.problem, domain)
    validator = make_validator(cfg.validator, domain)
    verdict, order = generation_order(validator, problem.init_state)
    ok = verdict.ok
    if not ok:
        stage = "continuous" if order is None else "eventual"
        print(f"INCONSISTENT {verdict.violated_rule} ({stage})")
    res = plan(problem, "gbfs_hadd", cfg.evaluation.budget)
    if res.solved and validate_plan(problem, res.plan):
        print(f"SOLVED plan length {len(res.plan)}, {res.nodes_expanded} expansions")
    else:
        print(f"UNSOLVED {res.status.value} after {res.nodes_expanded} expansions")
        ok = False
    if ok:
        print("VALID")
    return EXIT_OK if ok else EXIT_RUNTIME


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plangen", description="Learned generator of classical planning problems.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", required=True, help="run configuration file")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="override the configured seed")

    t = sub.add_parser("train", help="train the generation policies")
    common(t)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    t.add_argument("--out", default=None, help="output directory (default: [run] out)")
    t.set_defaults(func=cmd_train)

    for name, fn, helptext in (("generate", cmd_generate, "sample problems from trained policies"),
                               ("baseline", cmd_baseline, "sample problems with the random walk")):
        g = sub.add_parser(name, help=helptext)
        common(g)
        if name == "generate":
            g.add_argument("--checkpoint", required=True)
        else:
            g.add_argument("--min-size-slack", type=int, default=None,
                           help="reject problems below max_atoms - slack atoms (negative disables)")
        g.add_argument("--count", type=int, default=50)
        g.add_argument("--max-atoms", type=int, default=None)
        g.add_argument("--jobs", type=int, default=1)
        g.add_argument("--out", default=None, help="corpus directory")
        g.set_defaults(func=fn)

    e = sub.add_parser("evaluate", help="score a corpus: difficulty, diversity, time")
    e.add_argument("corpus")
    common(e, seed=False)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", default=None, help="report path (default: <corpus>/report.csv)")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("validate", help="check one problem for consistency and solvability")
    v.add_argument("problem")
    common(v, seed=False)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"plangen: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PDDLError, ValidatorError, GenerationFailed, TrainingError, OSError, RuntimeError) as exc:
        print(f"plangen: error: {exc}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
