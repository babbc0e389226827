"""Batch front-end: optimize, observe, circuit, qdcheck, selftest.

Experiments are described by a single JSON key-value document (see README
for the schema).  Every run is fully determined by (config, seed, code
version); emitted CSV files carry a header block with the config hash and
code version.  Exit codes: 0 success, 1 usage/config error, 2 failed
verification (selftest, qdcheck, circuit validation).
"""

import argparse
import hashlib
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import __version__, circuits, gaussian, isoparam, models, observables, optimize
from . import quantum_double as qd

__all__ = ["main", "ConfigError"]

_MODELS = ("FermiSurface", "BandInsulator", "PipSC", "DiagonalChains")
_PATTERNS = ("unconstrained", "uniform", "alternating", "custom")
_BCS = ("periodic", "antiperiodic")


class ConfigError(ValueError):
    pass


def _require(cfg, key, types, what=""):
    if key not in cfg:
        raise ConfigError(f"config field '{key}' is required {what}".rstrip())
    if not isinstance(cfg[key], types):
        raise ConfigError(
            f"config field '{key}': expected {types}, got {type(cfg[key]).__name__}")
    return cfg[key]


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def config_hash(cfg):
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _default_bcs(kind):
    # open-shell twists for the gapless models; the insulator follows the
    # swapped convention used for its correlator study
    return ("periodic", "antiperiodic") if kind == "BandInsulator" \
        else ("antiperiodic", "periodic")


def _build_model(cfg, cell):
    kind = _require(cfg, "model", str)
    if kind not in _MODELS:
        raise ConfigError(f"config field 'model': unknown model {kind!r}")
    Lx = _require(cfg, "Lx", int)
    Ly = _require(cfg, "Ly", int)
    bx_def, by_def = _default_bcs(kind)
    bc_x = cfg.get("bc_x", bx_def)
    bc_y = cfg.get("bc_y", by_def)
    if bc_x not in _BCS or bc_y not in _BCS:
        raise ConfigError("config fields 'bc_x'/'bc_y' must be periodic|antiperiodic")
    try:
        grid = models.build_grid(Lx, Ly, bc_x, bc_y, cell)
        if kind == "DiagonalChains":
            return models.ModelSpec.diagonal_chains(grid, int(cfg.get("direction", 1)))
        return models.ModelSpec(kind, grid)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc))


def _resolve_cell(cfg, pattern_name):
    if "cell" in cfg:
        cell = cfg["cell"]
        if (not isinstance(cell, (list, tuple)) or len(cell) != 2
                or not all(isinstance(c, int) for c in cell)):
            raise ConfigError("config field 'cell' must be a pair of integers")
        return tuple(cell)
    if cfg.get("model") == "BandInsulator":
        return (2, 2)
    return isoparam.default_cell(pattern_name)


def _resolve_pattern(cfg, name, cell):
    if name not in _PATTERNS:
        raise ConfigError(f"unknown pattern {name!r}")
    if name == "custom":
        arrows = _require(cfg, "custom_arrows", list,
                          "when a custom pattern is requested")
        try:
            return isoparam.custom_pattern(cell, [frozenset(a) for a in arrows])
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config field 'custom_arrows': {exc}")
    if name == "uniform":
        return isoparam.uniform_pattern(cell)
    if name == "alternating":
        try:
            return isoparam.alternating_pattern(cell)
        except ValueError as exc:
            raise ConfigError(str(exc))
    return isoparam.unconstrained_pattern(cell)


def _optim_config(cfg, seed, workers):
    known = {f.name for f in dataclass_fields(optimize.OptimConfig)}
    raw = cfg.get("optim", {})
    if not isinstance(raw, dict):
        raise ConfigError("config field 'optim' must be an object")
    bad = set(raw) - known
    if bad:
        raise ConfigError(f"config field 'optim': unknown keys {sorted(bad)}")
    raw = dict(raw)
    raw["seed"] = seed
    raw["workers"] = workers
    try:
        return optimize.OptimConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field 'optim': {exc}")


def _csv_header(fh, cfg, columns):
    fh.write(f"# config_hash: {config_hash(cfg)}\n")
    fh.write(f"# code_version: {__version__}\n")
    fh.write(",".join(columns) + "\n")


def cmd_optimize(cfg, out_dir, seed, workers):
    patterns = _require(cfg, "patterns", list)
    n_vs = _require(cfg, "n_v", list)
    if not patterns or not n_vs:
        raise ConfigError("config fields 'patterns' and 'n_v' must be non-empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for pat_name in patterns:
        cell = _resolve_cell(cfg, pat_name)
        pattern = _resolve_pattern(cfg, pat_name, cell)
        model = _build_model(cfg, cell)
        exact = models.exact_ground_energy(model)
        for n_v in n_vs:
            if not isinstance(n_v, int) or n_v < 0:
                raise ConfigError("config field 'n_v' entries must be ints >= 0")
            ocfg = _optim_config(cfg, seed, workers)
            report = optimize.minimize(model, pattern, n_v, ocfg)
            tag = f"{pat_name}_n{n_v}"
            ckpt = out / f"params_{tag}.ckpt"
            isoparam.save_checkpoint(ckpt, report.params)
            doc = report.to_dict()
            doc["exact_energy"] = exact
            doc["checkpoint"] = ckpt.name
            (out / f"report_{tag}.json").write_text(
                json.dumps(doc, indent=2, sort_keys=True) + "\n")
            if not report.converged:
                print(f"warning: {tag} did not converge "
                      f"(grad norm {report.final_grad_norm:.2e})", file=sys.stderr)
            rows.append([
                pat_name, str(n_v), f"{report.chi:g}",
                f"{report.best_energy:.12e}", f"{exact:.12e}",
                f"{(report.best_energy - exact) / model.grid.n_sites:.12e}",
                f"{report.final_grad_norm:.6e}", f"{report.wall_seconds:.3f}",
            ])
    with open(out / "summary.csv", "w") as fh:
        _csv_header(fh, cfg, ["pattern", "n_v", "chi", "best_energy",
                              "exact_energy", "error_per_site", "grad_norm",
                              "wall_seconds"])
        for row in rows:
            fh.write(",".join(row) + "\n")
    return 0


def _load_state(cfg, out_dir):
    """Resolve the state to observe: exact oracle or checkpoint parameters."""
    state = cfg.get("state", "exact")
    pat_name = cfg.get("pattern", "unconstrained")
    if state == "exact":
        cell = _resolve_cell(cfg, pat_name)
        return _build_model(cfg, cell), None
    if not isinstance(state, dict) or "checkpoint" not in state:
        raise ConfigError("config field 'state' must be 'exact' or "
                          "{'checkpoint': path}")
    path = Path(state["checkpoint"])
    if not path.is_absolute():
        path = Path(out_dir) / path
    cell = _resolve_cell(cfg, pat_name)
    pattern = _resolve_pattern(cfg, pat_name, cell)
    try:
        params = isoparam.load_checkpoint(path, pattern)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"checkpoint {path}: {exc}")
    want_nv = cfg.get("state_n_v", params.n_v)
    if params.n_v != want_nv or params.pattern.cell != cell:
        raise ConfigError(
            "checkpoint incompatible with config:\n"
            f"  checkpoint: pattern={params.pattern.name} n_v={params.n_v} "
            f"cell={params.pattern.cell}\n"
            f"  config:     pattern={pattern.name} n_v={want_nv} cell={cell}")
    return _build_model(cfg, cell), params


def cmd_observe(cfg, out_dir, seed, workers):
    del seed, workers
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, params = _load_state(cfg, out_dir)
    wanted = cfg.get("observables", ["occupation", "correlator"])
    grid = model.grid
    if "occupation" in wanted:
        if params is None:
            gammas = models.exact_covariances(model)
        else:
            gammas, _ = optimize.covariance_field(params, grid)
        ns = grid.cell_size
        with open(out / "occupation.csv", "w") as fh:
            _csv_header(fh, cfg, ["kx", "ky"] + [f"n{s}" for s in range(ns)])
            for i in range(grid.n_points):
                occ = observables.occupation(gammas[i])
                occ = [occ] if ns == 1 else list(occ)
                fh.write(f"{grid.kx[i]:.12f},{grid.ky[i]:.12f},"
                         + ",".join(f"{v:.12e}" for v in occ) + "\n")
    if "correlator" in wanted:
        xs = cfg.get("xs", list(range(grid.Lx // 2 + 1)))
        curve = observables.correlator_curve(model, xs, params)
        with open(out / "correlator.csv", "w") as fh:
            _csv_header(fh, cfg, ["x", "value"])
            for x, v in zip(xs, curve):
                fh.write(f"{x},{v:.15e}\n")
    if "chern" in wanted:
        radii = cfg.get("radii", [grid.Lx // 4])
        cov = observables.realspace_covariance(model, params)
        with open(out / "chern.csv", "w") as fh:
            _csv_header(fh, cfg, ["radius", "nu"])
            for r in radii:
                part = observables.make_partition(grid.Lx, grid.Ly, r)
                nu = observables.realspace_chern(cov, part)
                fh.write(f"{r},{nu:.12e}\n")
    return 0


def cmd_circuit(layout, Lx, Ly, chi):
    schedule = circuits.schedule_circuit(layout, Lx, Ly, chi)
    try:
        schedule.validate()
    except AssertionError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    print(json.dumps(schedule.to_dict(), sort_keys=True))
    return 0


_GROUPS = {"Z2": lambda: qd.cyclic_group(2), "Z3": lambda: qd.cyclic_group(3),
           "Z4": lambda: qd.cyclic_group(4), "S3": lambda: qd.symmetric_group(3)}


def cmd_qdcheck(group_name):
    if group_name not in _GROUPS:
        print(f"unknown group {group_name!r}; choose from {sorted(_GROUPS)}",
              file=sys.stderr)
        return 1
    group = _GROUPS[group_name]()
    tensor = qd.quantum_double_tensor(group)
    pairs = {}
    ok = True
    for legs in ("lr", "ld", "lu", "rd", "ru", "du"):
        passes, c = qd.isometry_check(tensor, tuple(legs))
        pairs[legs] = {"passes": passes, "constant": c}
        ok = ok and passes and abs(c - group.order ** 3) < 1e-9
    print(json.dumps({"group": group.name, "order": group.order,
                      "expected_constant": group.order ** 3,
                      "pairs": pairs, "pass": ok}, sort_keys=True))
    return 0 if ok else 2


def cmd_selftest(seed):
    """Fast verification sweep; exit 2 on any failure."""
    rng = np.random.default_rng(seed)
    checks = []

    def check(name, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - report, do not crash
            checks.append((name, False, str(exc)))

    def _grid():
        g = models.build_grid(2, 2)
        assert sorted(set(np.round(g.kx, 12))) == sorted(
            {np.round(np.pi / 2, 12), np.round(3 * np.pi / 2, 12)})
        assert models.build_grid(96, 96).n_points == 9216

    def _energy():
        g = models.build_grid(2, 2)
        e = models.exact_ground_energy(models.ModelSpec.fermi_surface(g))
        assert abs(e + 4.0) < 1e-12, e

    def _purity():
        g = models.build_grid(4, 4, cell=(2, 1))
        params = isoparam.random_init("alternating", 2, rng.integers(2 ** 32))
        gammas, _ = optimize.covariance_field(params, g)
        eye = np.eye(gammas.shape[-1])
        err = np.abs(gammas @ np.conj(np.swapaxes(gammas, -1, -2)) - eye).max()
        assert err < 1e-10, err

    def _fold():
        g1 = models.build_grid(4, 4, cell=(1, 1))
        g2 = models.build_grid(4, 4, cell=(2, 1))
        p1 = isoparam.random_init("uniform", 1, 1234, cell=(1, 1))
        p2 = isoparam.IsoParams(qs=(p1.qs[0], p1.qs[0]),
                                pattern=isoparam.uniform_pattern((2, 1)), n_v=1)
        m1 = models.ModelSpec.fermi_surface(g1)
        m2 = models.ModelSpec.fermi_surface(g2)
        e1 = optimize.expectation_energy(p1, m1)
        e2 = optimize.expectation_energy(p2, m2)
        assert abs(e1 - e2) < 1e-10, (e1, e2)

    def _circuit():
        s = circuits.schedule_circuit("uniform", 3, 3, 2)
        s.validate()
        assert s.depth == 5, s.depth

    def _qd():
        t = qd.quantum_double_tensor(qd.cyclic_group(2))
        passes, c = qd.isometry_check(t, ("l", "d"))
        assert passes and abs(c - 8.0) < 1e-12

    def _dims():
        assert isoparam.manifold_dimensions("TNS", d=2, chi=2) == 24
        assert isoparam.manifold_dimensions("isoTNS", d=2, chi=2) == 20
        assert isoparam.manifold_dimensions("GaussianTNS", n=2) == 45
        assert isoparam.manifold_dimensions("GaussianIsoTNS", n=2) == 15
        assert abs(isoparam.bond_dimension_ratio(2) - 1.07) < 5e-3

    check("momentum grids", _grid)
    check("exact energy 2x2", _energy)
    check("network purity", _purity)
    check("fold consistency", _fold)
    check("circuit depth 3x3", _circuit)
    check("quantum double Z2", _qd)
    check("manifold dimensions", _dims)

    ok = True
    for name, passed, msg in checks:
        line = f"selftest {name}: {'PASS' if passed else 'FAIL'}"
        if msg and not passed:
            line += f" ({msg})"
        print(line)
        ok = ok and passed
    return 0 if ok else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="igftns",
        description="Gaussian fermionic tensor network ground-state toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    for verb in ("optimize", "observe"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("circuit")
    p.add_argument("layout", choices=("uniform", "alternating"))
    p.add_argument("Lx", type=int)
    p.add_argument("Ly", type=int)
    p.add_argument("chi", type=int)

    p = sub.add_parser("qdcheck")
    p.add_argument("group", help="Z2, Z3, Z4 or S3")

    p = sub.add_parser("selftest")
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.verb in ("optimize", "observe"):
            cfg = load_config(args.config)
            seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
            out_dir = args.out or cfg.get("out", ".")
            fn = cmd_optimize if args.verb == "optimize" else cmd_observe
            return fn(cfg, out_dir, seed, args.workers)
        if args.verb == "circuit":
            return cmd_circuit(args.layout, args.Lx, args.Ly, args.chi)
        if args.verb == "qdcheck":
            return cmd_qdcheck(args.group)
        return cmd_selftest(args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
