"""Experiment harness: config parsing, subcommands, seeded reproducibility.

Config files use INI syntax (configparser); matrices are whitespace-separated
rows on indented continuation lines.  Sections:

  [chain]     joint = <path>          relative to the config file, or
              generator = seeded      with x_size, y_size, floor
  [channel_x] t = <rows>, eta_grid = <floats>     (likewise [channel_y])
  [ensemble]  attribute_size, rho, rejection_cap
  [sweep]     epsilon = <floats>, k = <ints>, s = <floats>
  [sampling]  n_configs, delta_samples, seed, workers

Every emitted file starts with `# config_hash:` and `# seed:` comment lines;
floats are serialized with 17 significant digits and rows are sorted, so a
rerun with identical (config, seed) is byte-identical.  `simulate` journals
finished sweep points to simulate.partial.jsonl and resumes from it.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .dependence import canonical_dependence_matrix, select_features, uncentered_b
from .ensemble import (
    AttributeEnsembleSpec,
    information_ensemble,
    markov_push,
    push_through_channel,
    sample_configuration,
)
from .errors import MaxcorrError, ValidationError
from .exponent import average_exponents, iprojection_exponent
from .geometry import dump_features, feature_vectors, normalize_features
from .model import (
    FLOAT_FMT,
    Channel,
    JointPmf,
    apply_channels,
    dump_joint,
    iter_sample_pairs,
    joint_from_samples,
    load_joint,
    make_channel,
)
from .symmetry import (
    delta_report,
    moment_symmetry_report,
    projection_bound_check,
    propagation_check,
    variance_bump,
)

OUT_ROOT_ENV = "MAXCORR_OUT_ROOT"


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus its provenance hash."""

    joint: JointPmf
    t_x: np.ndarray
    t_y: np.ndarray
    eta1_grid: tuple[float, ...]
    eta2_grid: tuple[float, ...]
    attribute_size: int
    rho: float
    rejection_cap: int
    epsilon_grid: tuple[float, ...]
    k_grid: tuple[int, ...]
    s_grid: tuple[float, ...]
    n_configs: int
    delta_samples: int
    seed: int
    workers: int
    config_hash: str
    raw_text: str

    def channel_x(self, eta: float) -> Channel:
        return make_channel(self.t_x, eta, self.joint.x_labels)

    def channel_y(self, eta: float) -> Channel:
        return make_channel(self.t_y, eta, self.joint.y_labels)

    def ensemble_u(self, epsilon: float, s: float) -> AttributeEnsembleSpec:
        return AttributeEnsembleSpec(
            base=self.joint.marginal_x(), attribute_size=self.attribute_size,
            epsilon=epsilon, anisotropy=s, rho=self.rho,
            rejection_cap=self.rejection_cap,
        )

    def ensemble_v(self, epsilon: float, s: float) -> AttributeEnsembleSpec:
        return AttributeEnsembleSpec(
            base=self.joint.marginal_y(), attribute_size=self.attribute_size,
            epsilon=epsilon, anisotropy=s, rho=self.rho,
            rejection_cap=self.rejection_cap,
        )


def _parse_matrix(text: str) -> np.ndarray:
    rows = [
        [float(v) for v in line.split()]
        for line in text.splitlines()
        if line.strip()
    ]
    return np.array(rows)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split())


def load_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    raw = path.read_text()
    parser = configparser.ConfigParser()
    parser.read_string(raw)

    chain = parser["chain"]
    if "joint" in chain:
        joint = load_joint((path.parent / chain["joint"]).read_text())
    elif chain.get("generator") == "seeded":
        nx = chain.getint("x_size")
        ny = chain.getint("y_size")
        floor = chain.getfloat("floor", 0.15)
        gen_seed = chain.getint("generator_seed", 314159)
        rng = np.random.default_rng(gen_seed)
        probs = rng.random((ny, nx)) + floor
        joint = JointPmf(
            tuple(f"x{i}" for i in range(nx)),
            tuple(f"y{j}" for j in range(ny)),
            probs / probs.sum(),
        )
    else:
        raise ValidationError("[chain] needs `joint = <path>` or `generator = seeded`")

    t_x = _parse_matrix(parser["channel_x"]["t"])
    t_y = _parse_matrix(parser["channel_y"]["t"])
    sampling = parser["sampling"] if parser.has_section("sampling") else {}
    ens = parser["ensemble"] if parser.has_section("ensemble") else {}
    sweep = parser["sweep"] if parser.has_section("sweep") else {}

    seed = seed_override if seed_override is not None else int(sampling.get("seed", 0))
    digest = hashlib.sha256(raw.encode()).hexdigest()[:16]

    cfg = ExperimentConfig(
        joint=joint,
        t_x=t_x,
        t_y=t_y,
        eta1_grid=_floats(parser["channel_x"].get("eta_grid", "0.0")),
        eta2_grid=_floats(parser["channel_y"].get("eta_grid", "0.0")),
        attribute_size=int(ens.get("attribute_size", 3)),
        rho=float(ens.get("rho", 1.0)),
        rejection_cap=int(ens.get("rejection_cap", 1000)),
        epsilon_grid=_floats(sweep.get("epsilon", "0.05")),
        k_grid=_ints(sweep.get("k", "1")),
        s_grid=_floats(sweep.get("s", "0.0")),
        n_configs=int(sampling.get("n_configs", 100)),
        delta_samples=int(sampling.get("delta_samples", 20000)),
        seed=seed,
        workers=int(sampling.get("workers", 1)),
        config_hash=digest,
        raw_text=raw,
    )
    k_max = min(len(joint.x_labels), len(joint.y_labels)) - 1
    for k in cfg.k_grid:
        if not 1 <= k <= k_max:
            raise ValidationError(f"sweep k={k} outside 1..{k_max}")
    if t_x.shape[0] != len(joint.x_labels) or t_y.shape[0] != len(joint.y_labels):
        raise ValidationError("channel T dimensions do not match the joint alphabets")
    for eta in cfg.eta1_grid:
        cfg.channel_x(eta)
    for eta in cfg.eta2_grid:
        cfg.channel_y(eta)
    return cfg


def _header(cfg_hash: str, seed: int) -> list[str]:
    return [f"config_hash: {cfg_hash}", f"seed: {seed}"]


def _write_text(path: Path, body: str, cfg_hash: str, seed: int) -> None:
    lines = "".join(f"# {h}\n" for h in _header(cfg_hash, seed))
    path.write_text(lines + body)


def _prepare_out(out: Path, cfg: ExperimentConfig | None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        (out / "config.echo.ini").write_text(cfg.raw_text)


def _f(x: float) -> str:
    return FLOAT_FMT % x


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    out = Path(args.out)
    _prepare_out(out, None)
    lines = Path(args.samples).read_text().splitlines()
    pairs = list(iter_sample_pairs(lines, delimiter=args.delimiter, header=args.header))
    if args.x_alphabet:
        x_alpha = tuple(args.x_alphabet.split(","))
    else:
        x_alpha = tuple(dict.fromkeys(x for x, _ in pairs))
    if args.y_alphabet:
        y_alpha = tuple(args.y_alphabet.split(","))
    else:
        y_alpha = tuple(dict.fromkeys(y for _, y in pairs))
    joint = joint_from_samples(pairs, x_alpha, y_alpha)
    digest = hashlib.sha256(Path(args.samples).read_bytes()).hexdigest()[:16]
    (out / "joint.txt").write_text(
        dump_joint(joint, header=_header(digest, args.seed) + [f"records: {len(pairs)}"])
    )
    print(f"wrote {out / 'joint.txt'} ({len(pairs)} records)")
    return 0


def cmd_features(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    _prepare_out(out, cfg)
    k = args.k if args.k is not None else cfg.k_grid[-1]
    joint = cfg.joint
    f, g = select_features(joint, k)
    cdm = canonical_dependence_matrix(joint)
    _write_text(out / "features_f.txt", dump_features(f), cfg.config_hash, cfg.seed)
    _write_text(out / "features_g.txt", dump_features(g), cfg.config_hash, cfg.seed)
    sigma_body = "".join(
        f"sigma {i}: {_f(s)}\n" for i, s in enumerate(cdm.sigmas)
    )
    _write_text(out / "sigmas.txt", sigma_body, cfg.config_hash, cfg.seed)

    nx, ny = len(joint.x_labels), len(joint.y_labels)
    rows = [
        "index,sigma,"
        + ",".join(f"f_{lab}" for lab in joint.x_labels)
        + ","
        + ",".join(f"g_{lab}" for lab in joint.y_labels)
    ]
    for i in range(k):
        rows.append(
            ",".join(
                [str(i), _f(cdm.sigmas[i])]
                + [_f(v) for v in f.h[:, i]]
                + [_f(v) for v in g.h[:, i]]
            )
        )
    _write_text(out / "features.csv", "\n".join(rows) + "\n", cfg.config_hash, cfg.seed)
    print(f"wrote features (k={k}) and sigma profile to {out}")
    return 0


def cmd_symmetry(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    _prepare_out(out, cfg)
    samples = args.samples if args.samples else cfg.delta_samples
    eps = cfg.epsilon_grid[0]
    s = args.anisotropy
    spec = cfg.ensemble_u(eps, s) if args.side == "x" else cfg.ensemble_v(eps, s)
    ens = information_ensemble(spec)
    rep = delta_report(ens, samples, seed=cfg.seed, workers=cfg.workers)
    lem = moment_symmetry_report(ens, samples, seed=cfg.seed, workers=cfg.workers)
    body = (
        f"side: {args.side}\nanisotropy: {_f(s)}\nepsilon: {_f(eps)}\n"
        f"samples: {samples}\nworkers: {cfg.workers}\n"
        f"delta_hat: {_f(rep.delta)}\ndelta_stderr: {_f(rep.stderr)}\n"
        f"mean_norm: {_f(lem.mean_norm)}\nmean_norm_bar: {_f(lem.mean_norm_bar)}\n"
        f"max_moment_spread: {_f(lem.max_moment_spread)}\n"
        f"max_moment_spread_bar: {_f(lem.max_moment_spread_bar)}\n"
        f"max_cross_covariance: {_f(lem.max_cross_covariance)}\n"
        f"max_cross_covariance_bar: {_f(lem.max_cross_covariance_bar)}\n"
    )
    _write_text(out / "symmetry.txt", body, cfg.config_hash, cfg.seed)
    csv = (
        "side,anisotropy,epsilon,samples,delta_hat,delta_stderr,mean_norm,"
        "max_moment_spread,max_cross_covariance\n"
        + ",".join(
            [args.side, _f(s), _f(eps), str(samples), _f(rep.delta), _f(rep.stderr),
             _f(lem.mean_norm), _f(lem.max_moment_spread), _f(lem.max_cross_covariance)]
        )
        + "\n"
    )
    _write_text(out / "symmetry.csv", csv, cfg.config_hash, cfg.seed)
    print(f"delta_hat = {rep.delta:.6g} +- {rep.stderr:.2g} -> {out}")
    return 0


SIM_COLUMNS = (
    "sweep_id,epsilon,k,eta1,eta2,s,delta_hat,e_us,e_vs,e_ut,e_vt,"
    "bound_us,bound_vs,bound_ut,bound_vt,residual_budget,"
    "stderr_us,stderr_vs,stderr_ut,stderr_vt"
)


def _simulate_point(cfg: ExperimentConfig, point_id: str, eps: float, k: int,
                    eta1: float, eta2: float, s: float) -> dict:
    chan_x = cfg.channel_x(eta1)
    chan_y = cfg.channel_y(eta2)
    mu_u = cfg.ensemble_u(eps, s)
    mu_v = cfg.ensemble_v(eps, s)
    d_u = delta_report(
        information_ensemble(mu_u), cfg.delta_samples,
        seed=(cfg.seed, 10), workers=cfg.workers,
    ).delta
    d_v = delta_report(
        information_ensemble(mu_v), cfg.delta_samples,
        seed=(cfg.seed, 11), workers=cfg.workers,
    ).delta
    delta_hat = max(d_u, d_v)
    noisy = apply_channels(cfg.joint, chan_x, chan_y)
    f, g = select_features(noisy, k)
    rep = average_exponents(
        mu_u, mu_v, cfg.joint, chan_x, chan_y, f, g,
        cfg.n_configs, (cfg.seed, 12), delta_hat=delta_hat, workers=cfg.workers,
    )
    return {
        "sweep_id": point_id,
        "epsilon": eps, "k": k, "eta1": eta1, "eta2": eta2, "s": s,
        "delta_hat": delta_hat,
        "e_us": rep.e_u_s, "e_vs": rep.e_v_s, "e_ut": rep.e_u_t, "e_vt": rep.e_v_t,
        "bound_us": rep.bound[0], "bound_vs": rep.bound[1],
        "bound_ut": rep.bound[2], "bound_vt": rep.bound[3],
        "residual_budget": rep.residual_budget,
        "stderr_us": rep.stderr_u_s, "stderr_vs": rep.stderr_v_s,
        "stderr_ut": rep.stderr_u_t, "stderr_vt": rep.stderr_v_t,
    }


def _row_to_csv(row: dict) -> str:
    cells = []
    for col in SIM_COLUMNS.split(","):
        v = row[col]
        if col == "sweep_id":
            cells.append(str(v))
        elif col == "k":
            cells.append(str(int(v)))
        else:
            cells.append(_f(float(v)))
    return ",".join(cells)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    _prepare_out(out, cfg)
    journal = out / "simulate.partial.jsonl"
    done: dict[str, dict] = {}
    if journal.exists() and not args.fresh:
        for line in journal.read_text().splitlines():
            if line.strip():
                row = json.loads(line)
                done[row["sweep_id"]] = row

    grid = list(product(cfg.epsilon_grid, cfg.k_grid, cfg.s_grid,
                        cfg.eta1_grid, cfg.eta2_grid))
    points = []
    for idx, (eps, k, s, e1, e2) in enumerate(grid):
        points.append((f"{idx:04d}", eps, k, e1, e2, s))
    todo = [p for p in points if p[0] not in done]

    jobs = max(1, args.jobs)
    if jobs == 1 or len(todo) <= 1:
        results = [_simulate_point(cfg, *p) for p in todo]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda p: _simulate_point(cfg, *p), todo))
    with journal.open("a") as fh:
        for row in results:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
            done[row["sweep_id"]] = row

    rows = [done[p[0]] for p in points]
    body = SIM_COLUMNS + "\n" + "\n".join(_row_to_csv(r) for r in rows) + "\n"
    _write_text(out / "simulate.csv", body, cfg.config_hash, cfg.seed)
    print(f"wrote {len(rows)} sweep rows ({len(todo)} computed) to {out / 'simulate.csv'}")
    return 0


def _verify_checks(cfg: ExperimentConfig) -> list[tuple[str, bool, str]]:
    checks: list[tuple[str, bool, str]] = []
    rng = np.random.default_rng(cfg.seed)
    joint = cfg.joint

    cdm = canonical_dependence_matrix(joint)
    null_err = max(
        float(np.abs(cdm.b @ np.sqrt(cdm.px.probs)).max()),
        float(np.abs(cdm.b.T @ np.sqrt(cdm.py.probs)).max()),
    )
    sig_ok = bool(np.all(cdm.sigmas <= 1 + 1e-10) and np.all(cdm.sigmas >= -1e-10))
    checks.append((
        "cdm_null_directions", null_err < 1e-10 and sig_ok,
        f"max null overlap {null_err:.2e}",
    ))

    k_max = min(len(joint.x_labels), len(joint.y_labels)) - 1
    f, g = select_features(joint, k_max)
    p = f.base.probs
    gram_err = float(np.abs((f.h * p[:, None]).T @ f.h - np.eye(k_max)).max())
    mean_err = float(np.abs(p @ f.h).max())
    checks.append((
        "feature_normalization", gram_err < 1e-8 and mean_err < 1e-10,
        f"gram {gram_err:.2e}, mean {mean_err:.2e}",
    ))

    d = delta_report(variance_bump(2, 2, 1.5), 100_000, seed=cfg.seed).delta
    checks.append((
        "variance_bump_delta", abs(d - 0.5) <= 0.05, f"delta_hat {d:.4f} vs 0.5",
    ))

    ens = information_ensemble(cfg.ensemble_u(cfg.epsilon_grid[0], 0.0))
    dhat = delta_report(ens, cfg.delta_samples, seed=cfg.seed).delta
    ok4 = True
    for i in range(10):
        gmat = rng.normal(size=(ens.n, 2))
        hmat = rng.normal(size=(ens.m, 2))
        res = projection_bound_check(ens, gmat, hmat, dhat, cfg.delta_samples, seed=cfg.seed + i)
        ok4 = ok4 and res.passed
    checks.append(("projection_bound", ok4, f"10 random (G,H) at delta {dhat:.3f}"))

    ok5 = True
    for i, b in enumerate((np.eye(ens.n), np.diag(np.linspace(0.5, 1.5, ens.n)))):
        res = propagation_check(ens, b, cfg.delta_samples, seed=cfg.seed + 50 + i)
        ok5 = ok5 and res.passed
    checks.append(("push_forward_bound", ok5, "identity and diagonal B"))

    etas = [0.01, 0.02, 0.04, 0.08]
    spreads = [
        uncentered_b(cfg.channel_x(e), joint.marginal_x()).spectral_spread()
        for e in etas
    ]
    slope = float(np.polyfit(np.log(etas), np.log(spreads), 1)[0])
    checks.append((
        "channel_spectrum_slope", abs(slope - 1.0) <= 0.2, f"slope {slope:.3f}",
    ))

    spec = cfg.ensemble_u(cfg.epsilon_grid[0], 0.0)
    clean_cfg = sample_configuration(spec, seed=cfg.seed)
    res0 = markov_push(clean_cfg, joint)
    norms = []
    for eta in [0.02, 0.04, 0.08]:
        cx = cfg.channel_x(eta)
        noisy = apply_channels(joint, cx, cfg.channel_y(0.0))
        pushed_cfg = push_through_channel(clean_cfg, cx)
        r = markov_push(
            pushed_cfg, noisy, clean_config=clean_cfg, clean_joint=joint,
            chan_y=cfg.channel_y(0.0),
        )
        norms.append(r.residual_norm)
    mslope = float(np.polyfit(np.log([0.02, 0.04, 0.08]), np.log(norms), 1)[0])
    checks.append((
        "markov_residual", res0.residual_norm < 1e-12 and abs(mslope - 1.0) <= 0.2,
        f"eta=0 residual {res0.residual_norm:.1e}, slope {mslope:.3f}",
    ))

    from .geometry import InformationMatrix, config_from_information_matrix
    from .model import Pmf

    base = joint.marginal_x()
    prior = spec.prior
    phi = information_ensemble(spec).sample(1, seed=cfg.seed + 3)[0]
    fs = normalize_features(rng.normal(size=(base.size, 2)), base)
    psi = feature_vectors(fs)
    gaps = {}
    for eps in (0.02, 0.08):
        info = InformationMatrix(phi=phi, epsilon=eps, base=base)
        c = config_from_information_matrix(base, prior, info, eps)
        p1 = Pmf(base.labels, c.conditionals[:, 0])
        p2 = Pmf(base.labels, c.conditionals[:, 1])
        from .exponent import analytic_pairwise_exponent

        ana = analytic_pairwise_exponent(psi, phi[:, 0], phi[:, 1], eps)
        gaps[eps] = abs(iprojection_exponent(p1, p2, fs) - ana) / ana
    checks.append((
        "exponent_consistency", gaps[0.02] <= 0.05,
        f"relative gap {gaps[0.02]:.4f} at eps=0.02",
    ))
    return checks


def cmd_verify(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    _prepare_out(out, cfg)
    checks = _verify_checks(cfg)
    lines = []
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        line = f"{status}  {name:<26} {detail}"
        print(line)
        lines.append(line)
    _write_text(out / "verify.txt", "\n".join(lines) + "\n", cfg.config_hash, cfg.seed)
    return 0 if all(ok for _, ok, _ in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxcorr",
        description="SVD feature extraction, symmetry measurement, and "
        "error-exponent verification for discrete joints",
    )
    parser.add_argument("--version", action="version", version=__version__)
    default_out = os.environ.get(OUT_ROOT_ENV, "out")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config (INI)")
        p.add_argument("--seed", type=int, default=None, help="override [sampling] seed")
        p.add_argument("--out", default=default_out, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="sweep-level worker pool size")

    p = sub.add_parser("ingest", help="two-column samples -> joint file")
    p.add_argument("samples", help="delimiter-separated x,y sample file")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--header", action="store_true", help="skip a header line")
    p.add_argument("--x-alphabet", default="", help="comma list; inferred if omitted")
    p.add_argument("--y-alphabet", default="", help="comma list; inferred if omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=default_out)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("features", help="joint -> SVD feature sets + sigma profile")
    common(p)
    p.add_argument("--k", type=int, default=None, help="feature count (default: last sweep k)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("symmetry", help="ensemble -> delta_hat + moment reports")
    common(p)
    p.add_argument("--samples", type=int, default=None, help="override delta_samples")
    p.add_argument("--anisotropy", type=float, default=0.0)
    p.add_argument("--side", choices=("x", "y"), default="x")
    p.set_defaults(func=cmd_symmetry)

    p = sub.add_parser("simulate", help="full exponent sweep -> CSV")
    common(p)
    p.add_argument("--fresh", action="store_true", help="ignore an existing journal")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the built-in property suites")
    common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MaxcorrError as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        out = Path(getattr(args, "out", "out"))
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(record, sort_keys=True) + "\n")
        except OSError:
            pass
        print(f"error: {record['error']}: {record['message']}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
