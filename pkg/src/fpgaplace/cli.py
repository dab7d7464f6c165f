"""Command line entry points.

Subcommands: train, decompose, baseline, gradcheck, gen, export-place,
dump-state. Each takes a JSON config (--config) plus --seed/--out/--jobs
overrides. Exit codes: 0 success, 1 placement/runtime failure, 2 bad
usage or config. PLACE_LOG sets the log level (DEBUG, INFO, ...).

Outputs are byte-deterministic for a given config and seed; every CSV
carries a config_hash comment computed over the effective config minus
the output location, so reruns into different directories compare equal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import decomposition as dc
from . import nn, ppo
from .baselines import greedy_complete, random_complete
from .board import PlacementState, parse_arch, perimeter_io, serialize_arch, state_from_assignment
from .errors import PlacementError
from .features import assemble_state, channel_csv
from .netlist import generate_synthetic, parse_netlist, placement_order, serialize_netlist
from .wirelength import (
    export_vpr_place,
    import_vpr_place,
    per_net_csv,
    total_hpwl,
)

log = logging.getLogger("fpgaplace")


class UsageError(Exception):
    """Bad flags, config, or missing input files; exits 2."""


def _setup_logging():
    name = os.environ.get("PLACE_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _read_text(path, what):
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {what} file {path}: {e.strerror or e}") from None


def _load_config(path):
    if path is None:
        return {}
    text = _read_text(path, "config")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must be a JSON object")
    return cfg


def _check_keys(cfg, allowed, where="config"):
    unknown = sorted(set(cfg) - set(allowed))
    if unknown:
        raise UsageError(f"unknown {where} keys: {', '.join(unknown)}")


def _effective(cfg, args, *, need_out):
    """Merge CLI overrides into the config and validate the shared keys."""
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.jobs is not None:
        cfg["jobs"] = args.jobs
    cfg.setdefault("seed", 0)
    cfg.setdefault("jobs", 1)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise UsageError("seed must be a non-negative integer")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise UsageError("jobs must be a positive integer")
    if need_out and not cfg.get("out"):
        raise UsageError("an output directory is required (--out or config 'out')")
    return cfg


def config_hash(cfg):
    """Hash of the effective config minus output location and parallelism."""
    stripped = {k: v for k, v in cfg.items() if k not in ("out", "jobs")}
    blob = json.dumps(stripped, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _out_dir(cfg):
    path = Path(cfg["out"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path, text):
    Path(path).write_text(text)
    log.info("wrote %s", path)


def _load_instance(cfg):
    if "netlist" not in cfg:
        raise UsageError("config needs a 'netlist' path")
    if "arch" not in cfg:
        raise UsageError("config needs an 'arch' path")
    netlist = parse_netlist(_read_text(cfg["netlist"], "netlist"))
    arch = parse_arch(_read_text(cfg["arch"], "arch"))
    return netlist, arch


_NETWORK_KEYS = [f.name for f in fields(nn.NetworkSpec) if f.name not in ("height", "width")]
_PPO_KEYS = [f.name for f in fields(ppo.PPOConfig)]


def _network_spec(arch, cfg):
    overrides = cfg.get("network", {})
    _check_keys(overrides, _NETWORK_KEYS, "network")
    return ppo.spec_for(arch, overrides)


def _ppo_config(cfg):
    overrides = cfg.get("ppo", {})
    _check_keys(overrides, _PPO_KEYS, "ppo")
    try:
        return ppo.PPOConfig(**overrides)
    except (TypeError, ValueError) as e:
        raise UsageError(f"bad ppo section: {e}") from None


def _split_managed(netlist, fixed_state, cfg):
    """Resolve managed blocks; greedy-place the remainder as fixed context."""
    total = len(netlist.blocks)
    count = cfg.get("managed_blocks")
    if count is None:
        count = total
    if not isinstance(count, int) or not 1 <= count <= total:
        raise UsageError(f"managed_blocks must be in 1..{total}")
    order = placement_order(netlist)
    managed = order[:count]
    rest = order[count:]
    if rest:
        greedy_complete(fixed_state, netlist, rest)
    return managed


def _reward_mode(cfg):
    mode = cfg.get("reward_mode", "neg_hpwl_normalized")
    if mode not in ("neg_hpwl", "neg_hpwl_normalized"):
        raise UsageError(f"unknown reward_mode {mode!r}")
    return mode


def _reward_config(mode, fixed_state, netlist, managed):
    from .wirelength import RewardConfig

    if mode == "neg_hpwl":
        return RewardConfig(mode="neg_hpwl")
    return ppo.default_reward_config(fixed_state, netlist, managed)


TRAIN_KEYS = ["netlist", "arch", "seed", "out", "jobs", "managed_blocks",
              "network", "ppo", "reward_mode"]


def cmd_train(args):
    cfg = _effective(_load_config(args.config), args, need_out=True)
    _check_keys(cfg, TRAIN_KEYS)
    netlist, arch = _load_instance(cfg)
    state = PlacementState(arch, netlist)
    managed = _split_managed(netlist, state, cfg)
    spec = _network_spec(arch, cfg)
    pcfg = _ppo_config(cfg)
    reward_cfg = _reward_config(_reward_mode(cfg), state, netlist, managed)
    log.info("training %d managed blocks for %d episodes", len(managed), pcfg.episodes_total)
    result = ppo.train(state, managed, spec, pcfg, cfg["seed"], reward_cfg=reward_cfg)
    out = _out_dir(cfg)
    h = config_hash(cfg)
    _write(out / "curve.csv", ppo.stats_csv(result.stats, comments=[f"config_hash={h}"]))
    nn.save_weights(result.weights, out / "weights.json")
    best = state_from_assignment(arch, netlist, result.best_assignment)
    _write(out / "best.place", export_vpr_place(best, netlist, arch,
                                                netlist_name=Path(cfg["netlist"]).name))
    print(f"best HPWL {result.best_hpwl} after {pcfg.episodes_total} episodes")
    return 0


DECOMP_KEYS = ["netlist", "arch", "seed", "out", "jobs", "managed_blocks",
               "network", "ppo", "reward_mode", "granularity", "settings",
               "seeds", "iterations", "episodes_per_subtask", "include_baseline"]


def _decompose_worker(task):
    """One (setting, seed) decomposition run; safe to call in a subprocess."""
    netlist = parse_netlist(task["netlist_text"])
    arch = parse_arch(task["arch_text"])
    state = state_from_assignment(arch, netlist, np.asarray(task["fixed_assignment"]))
    spec = nn.NetworkSpec(**task["spec"])
    pcfg = ppo.PPOConfig(**task["pcfg"])
    plan = dc.make_plan(netlist, task["managed"], task["granularity"],
                        task["episodes_per_subtask"], task["iterations"])
    out = Path(task["out"])
    out.mkdir(parents=True, exist_ok=True)
    comments = [f"config_hash={task['hash']}"]
    if task["kind"] == "baseline":
        budget = task["episodes_per_subtask"] * task["granularity"] * task["iterations"]
        bcfg = ppo.config_with(pcfg, episodes_total=budget)
        reward_cfg = _reward_config(task["reward_mode"], state, netlist, task["managed"])
        res = ppo.train(state, task["managed"], spec, bcfg, task["seed"], reward_cfg=reward_cfg)
        _write(out / "curve.csv", ppo.stats_csv(res.stats, comments=comments))
        nn.save_weights(res.weights, out / "weights.json")
        best = state_from_assignment(arch, netlist, res.best_assignment)
        _write(out / "best.place", export_vpr_place(best, netlist, arch))
        return {"wirelength": res.best_hpwl}
    setting = dc.ReuseSetting.from_number(task["setting"])
    reward_cfg = _reward_config(task["reward_mode"], state, netlist, task["managed"])
    res = dc.run_decomposition(state, plan, setting, spec, pcfg, task["seed"],
                               reward_cfg=reward_cfg)
    _write(out / "curve.csv", dc.merged_stats_csv(res, comments=comments))
    for key, w in res.stores.items():
        nn.save_weights(w, out / f"weights_{key}.json")
    best = state_from_assignment(arch, netlist, res.best_assignment)
    _write(out / "best.place", export_vpr_place(best, netlist, arch))
    audit = [{
        "iteration": r.iteration, "chunk": r.chunk_index, "store_key": r.store_key,
        "in_rep": r.in_rep_checksum, "in_dec": r.in_dec_checksum,
        "out_rep": r.out_rep_checksum, "out_dec": r.out_dec_checksum,
        "best_hpwl": r.best_hpwl,
    } for r in res.runs]
    _write(out / "runs.json", json.dumps(audit, indent=2, sort_keys=True) + "\n")
    return {"wirelength": res.best_hpwl}


def cmd_decompose(args):
    cfg = _effective(_load_config(args.config), args, need_out=True)
    _check_keys(cfg, DECOMP_KEYS)
    netlist, arch = _load_instance(cfg)
    state = PlacementState(arch, netlist)
    managed = _split_managed(netlist, state, cfg)
    spec = _network_spec(arch, cfg)
    pcfg = _ppo_config(cfg)
    granularity = cfg.get("granularity")
    if not isinstance(granularity, int):
        raise UsageError("config needs an integer 'granularity'")
    iterations = cfg.get("iterations", 1)
    episodes = cfg.get("episodes_per_subtask")
    if not isinstance(episodes, int):
        raise UsageError("config needs an integer 'episodes_per_subtask'")
    settings = cfg.get("settings", [1, 2, 3, 4])
    seeds = cfg.get("seeds", [cfg["seed"]])
    if not (isinstance(settings, list) and settings
            and all(s in (1, 2, 3, 4) for s in settings)):
        raise UsageError("settings must be a non-empty list drawn from [1, 2, 3, 4]")
    if not (isinstance(seeds, list) and seeds
            and all(isinstance(s, int) and s >= 0 for s in seeds)):
        raise UsageError("seeds must be a non-empty list of non-negative ints")
    dc.make_plan(netlist, managed, granularity, episodes, iterations)  # validates early
    out = _out_dir(cfg)
    h = config_hash(cfg)
    base_task = {
        "netlist_text": serialize_netlist(netlist),
        "arch_text": serialize_arch(arch),
        "fixed_assignment": state.assignment_array().tolist(),
        "managed": managed,
        "spec": spec.to_dict(),
        "pcfg": {f.name: getattr(pcfg, f.name) for f in fields(ppo.PPOConfig)},
        "granularity": granularity,
        "iterations": iterations,
        "episodes_per_subtask": episodes,
        "reward_mode": _reward_mode(cfg),
        "hash": h,
    }
    tasks = []
    labels = []
    for setting in settings:
        for seed in seeds:
            t = dict(base_task)
            t.update(kind="setting", setting=setting, seed=seed,
                     out=str(out / f"setting{setting}_seed{seed}"))
            tasks.append(t)
            labels.append(("setting", setting, seed))
    if cfg.get("include_baseline", False):
        for seed in seeds:
            t = dict(base_task)
            t.update(kind="baseline", setting=None, seed=seed,
                     out=str(out / f"baseline_seed{seed}"))
            tasks.append(t)
            labels.append(("baseline", None, seed))
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_decompose_worker, tasks))
    else:
        results = [_decompose_worker(t) for t in tasks]
    outcomes = []
    n_blocks = len(managed)
    for (kind, setting, seed), res in zip(labels, results):
        if kind == "baseline":
            outcomes.append(dc.RunOutcome(
                blocks=n_blocks, n_policy=1, decision_reuse=None, setting=None,
                granularity=None, seed=seed, wirelength=res["wirelength"]))
        else:
            s = dc.ReuseSetting.from_number(setting)
            outcomes.append(dc.RunOutcome(
                blocks=n_blocks, n_policy=s.n_policies(granularity),
                decision_reuse=s.decision_reuse, setting=setting,
                granularity=granularity, seed=seed, wirelength=res["wirelength"]))
    rows = dc.summarize(outcomes)
    _write(out / "summary.csv", dc.summary_csv(rows, comments=[f"config_hash={h}"]))
    print(dc.summary_table(rows), end="")
    return 0


BASELINE_KEYS = ["netlist", "arch", "seed", "out", "jobs", "kind"]


def cmd_baseline(args):
    cfg = _effective(_load_config(args.config), args, need_out=True)
    _check_keys(cfg, BASELINE_KEYS)
    kind = cfg.get("kind", "greedy")
    if kind not in ("greedy", "random"):
        raise UsageError(f"kind must be 'greedy' or 'random', got {kind!r}")
    netlist, arch = _load_instance(cfg)
    state = PlacementState(arch, netlist)
    order = placement_order(netlist)
    if kind == "greedy":
        greedy_complete(state, netlist, order)
    else:
        random_complete(state, netlist, order, np.random.default_rng(cfg["seed"]))
    report = total_hpwl(state, netlist)
    out = _out_dir(cfg)
    _write(out / "baseline.place", export_vpr_place(state, netlist, arch,
                                                    netlist_name=Path(cfg["netlist"]).name))
    _write(out / "nets.csv", per_net_csv(report, netlist,
                                         comments=[f"config_hash={config_hash(cfg)}"]))
    print(f"{kind} HPWL {report.total}")
    return 0


GRADCHECK_KEYS = ["seed", "out", "jobs", "step", "tolerance", "corrupt", "network"]


def cmd_gradcheck(args):
    cfg = _effective(_load_config(args.config), args, need_out=False)
    _check_keys(cfg, GRADCHECK_KEYS)
    overrides = cfg.get("network", {})
    _check_keys(overrides, [f.name for f in fields(nn.NetworkSpec)], "network")
    kw = dict(nn.NetworkSpec.tiny().to_dict())
    kw.update(overrides)
    spec = nn.NetworkSpec(**kw)
    step = cfg.get("step", 1e-5)
    tol = cfg.get("tolerance", 1e-4)
    report = nn.gradient_check(spec=spec, seed=cfg["seed"] or 3,
                               step=step, corrupt=cfg.get("corrupt"))
    worst = 0.0
    for name in sorted(report):
        print(f"{name} {report[name]:.3e}")
        worst = max(worst, report[name])
    ok = worst <= tol
    print(f"max relative error {worst:.3e} ({'OK' if ok else 'FAIL'} at {tol:.0e})")
    return 0 if ok else 1


GEN_KEYS = ["seed", "out", "jobs", "preset", "n_clb", "n_io", "n_nets",
            "max_fanout", "width", "height", "io_capacity"]

PRESETS = {
    # counts sized so the perimeter IO ring and CLB core both fit
    "small": dict(n_clb=9, n_io=6, n_nets=8, max_fanout=3, width=6, height=6, io_capacity=2),
    "medium": dict(n_clb=20, n_io=12, n_nets=18, max_fanout=4, width=8, height=8, io_capacity=2),
    "tseng_scale": dict(n_clb=56, n_io=174, n_nets=300, max_fanout=8,
                        width=24, height=24, io_capacity=2),
}


def cmd_gen(args):
    cfg = _effective(_load_config(args.config), args, need_out=True)
    _check_keys(cfg, GEN_KEYS)
    params = {}
    if "preset" in cfg:
        if cfg["preset"] not in PRESETS:
            raise UsageError(f"unknown preset {cfg['preset']!r}; have {sorted(PRESETS)}")
        params.update(PRESETS[cfg["preset"]])
    for key in ("n_clb", "n_io", "n_nets", "max_fanout", "width", "height", "io_capacity"):
        if key in cfg:
            params[key] = cfg[key]
    missing = [k for k in ("n_clb", "n_io", "n_nets", "max_fanout", "width", "height")
               if k not in params]
    if missing:
        raise UsageError(f"gen needs {', '.join(missing)} (or a preset)")
    netlist = generate_synthetic(params["n_clb"], params["n_io"], params["n_nets"],
                                 params["max_fanout"], cfg["seed"])
    arch = perimeter_io(params["width"], params["height"],
                        io_capacity=params.get("io_capacity", 2))
    out = _out_dir(cfg)
    _write(out / "netlist.netlist", serialize_netlist(netlist))
    _write(out / "board.arch", serialize_arch(arch))
    print(f"wrote {out / 'netlist.netlist'} and {out / 'board.arch'}")
    return 0


EXPORT_KEYS = ["netlist", "arch", "seed", "out", "jobs", "placement"]


def _load_placement(path, netlist, arch):
    text = _read_text(path, "placement")
    if text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"placement {path} is not valid JSON: {e}") from None
        state = PlacementState(arch, netlist)
        for name, pos in doc.items():
            if name not in netlist.name_to_id:
                from .errors import UnknownBlock

                raise UnknownBlock(f"placement names unknown block {name!r}")
            state.place(netlist.name_to_id[name], (int(pos[0]), int(pos[1])))
        return state
    return import_vpr_place(text, netlist, arch)


def cmd_export_place(args):
    cfg = _effective(_load_config(args.config), args, need_out=True)
    _check_keys(cfg, EXPORT_KEYS)
    if "placement" not in cfg:
        raise UsageError("config needs a 'placement' path (.place or JSON name -> [x, y])")
    netlist, arch = _load_instance(cfg)
    state = _load_placement(cfg["placement"], netlist, arch)
    from .board import validate_state

    validate_state(state)
    out = _out_dir(cfg)
    path = out / "placement.place"
    _write(path, export_vpr_place(state, netlist, arch,
                                  netlist_name=Path(cfg["netlist"]).name))
    print(f"wrote {path}")
    return 0


DUMP_KEYS = ["netlist", "arch", "seed", "out", "jobs", "block", "placement"]


def cmd_dump_state(args):
    cfg = _effective(_load_config(args.config), args, need_out=True)
    _check_keys(cfg, DUMP_KEYS)
    if "block" not in cfg:
        raise UsageError("config needs 'block' (name or id) to dump the state for")
    netlist, arch = _load_instance(cfg)
    if cfg.get("placement"):
        state = _load_placement(cfg["placement"], netlist, arch)
    else:
        state = PlacementState(arch, netlist)
    ref = cfg["block"]
    if isinstance(ref, int):
        block_id = ref
    else:
        block_id = netlist.name_to_id.get(ref)
        if block_id is None:
            from .errors import UnknownBlock

            raise UnknownBlock(f"no block named {ref!r}")
    st = assemble_state(state, netlist, block_id)
    out = _out_dir(cfg)
    from .features import CHANNEL_ORDER

    h = config_hash(cfg)
    grid_header = ",".join(f"x{x}" for x in range(arch.width))
    prefix = f"# config_hash={h}\n{grid_header}\n"
    for i, name in enumerate(CHANNEL_ORDER):
        _write(out / f"channel_{name}.csv", prefix + channel_csv(st.channels[i]))
    _write(out / "mask.csv", prefix + "\n".join(
        ",".join(str(int(v)) for v in row) for row in st.current_mask) + "\n")
    feat_header = "type_clb,type_io,type_dsp,type_ram,id_frac,x_frac,y_frac"
    _write(out / "features.csv", f"# config_hash={h}\n{feat_header}\n"
           + ",".join(repr(float(v)) for v in st.current_block) + "\n")
    print(f"wrote 4 channels, mask, and features for block {block_id} to {out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "decompose": cmd_decompose,
    "baseline": cmd_baseline,
    "gradcheck": cmd_gradcheck,
    "gen": cmd_gen,
    "export-place": cmd_export_place,
    "dump-state": cmd_dump_state,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fpgaplace",
        description="Reinforcement-learning FPGA block placement",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (created if needed)")
        p.add_argument("--jobs", type=int, help="parallel worker processes")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except PlacementError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
