"""Command-line pipeline: build, disparity, backbone, dollar, export.

Each stage reads and writes plain files so runs can be scripted and
diffed. All outputs are written atomically (temp file + rename) and all
randomness flows from an explicit --seed, so a repeated invocation is
byte-identical. Usage errors exit 2, data errors exit 1.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import tempfile

from . import backbone as bb
from . import diffusion as dif
from . import disparity as disp
from . import ingest
from . import network as nw
from .errors import ConfigurationError, InsufficientDataError, NoConvergenceError

DEFAULT_ALPHAS = (0.2, 0.1, 0.05, 0.01)


def _atomic_write(path: str, writer, binary: bool = False) -> None:
    """Run ``writer(handle)`` into a temp file, then rename over ``path``."""
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp.", suffix="~")
    try:
        if binary:
            handle = os.fdopen(fd, "wb")
        else:
            handle = os.fdopen(fd, "w", encoding="utf-8", newline="\n")
        with handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _err(message: str) -> None:
    print(f"tradeflux: {message}", file=sys.stderr)


def _load_network(path: str) -> nw.ImbalanceNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return nw.read_edge_list(fh)


def _safe_token(code: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", code)


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------


def _cmd_build(args) -> int:
    columns = None
    if args.format_map:
        raw = args.format_map
        if not raw.lstrip().startswith("{"):
            with open(raw, "r", encoding="utf-8") as fh:
                raw = fh.read()
        try:
            columns = ingest.ColumnMap.from_dict(json.loads(raw))
        except (json.JSONDecodeError, ConfigurationError) as exc:
            _err(f"bad --format-map: {exc}")
            return 2

    try:
        with open(args.input, "r", encoding="utf-8") as fh:
            parsed = ingest.parse_dyadic_records(fh, columns=columns)
    except (OSError, ConfigurationError) as exc:
        _err(str(exc))
        return 1

    for where, reason in parsed.dropped:
        _err(f"dropped {where}: {reason}")
    records = [r for r in parsed.records if r.year == args.year]
    if not records:
        _err(f"no records for year {args.year}")
        return 1

    matrix, report = ingest.reconcile_flows(records, args.year, policy=args.policy)
    check = ingest.validate_trade_matrix(matrix)
    if not check.ok:
        _err(check.summary())
        for violation in check.violations:
            _err(f"violation: {violation}")
        return 1
    _err(report.summary())

    net = nw.build_imbalance_network(matrix)
    accounts = nw.node_accounts(net)
    out = _outdir(args)

    _atomic_write(
        os.path.join(out, "network.tsv"), lambda fh: nw.write_edge_list(net, fh)
    )

    def write_accounts(fh):
        fh.write("country,k_in,k_out,s_in,s_out,delta_s,class\n")
        for a in accounts:
            fh.write(
                f"{a.country},{a.k_in},{a.k_out},{a.s_in!r},{a.s_out!r},"
                f"{a.delta_s!r},{a.classification}\n"
            )

    _atomic_write(os.path.join(out, "accounts.csv"), write_accounts)
    _err(
        f"built network: {net.n_nodes} countries, {net.n_edges} edges, "
        f"total flux {nw.total_flux(net)!r}"
    )
    return 0


# ---------------------------------------------------------------------------
# disparity
# ---------------------------------------------------------------------------


def _cmd_disparity(args) -> int:
    directions = ("in", "out") if args.direction == "both" else (args.direction,)
    net = _load_network(args.network)
    profiles = {}
    for direction in directions:
        try:
            profiles[direction] = disp.disparity_profile(net, direction)
        except ValueError as exc:
            _err(str(exc))
            return 1

    out = _outdir(args)

    def write_profiles(fh):
        fh.write("direction,k,mean_kY,null_mean,null_p2sigma,n_nodes\n")
        for direction in directions:
            for r in profiles[direction].rows:
                fh.write(
                    f"{direction},{r.k},{r.mean_ky!r},{r.null_mean!r},"
                    f"{r.null_p2sigma!r},{r.n_nodes}\n"
                )

    _atomic_write(os.path.join(out, "disparity_profile.csv"), write_profiles)

    fits = {}
    for direction in directions:
        try:
            fit = disp.fit_scaling_exponent(profiles[direction], k_min=args.k_min)
        except InsufficientDataError as exc:
            _err(f"{direction}: {exc}")
            return 1
        fits[direction] = {
            "beta": fit.beta,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "k_range": list(fit.k_range),
            "n_points": fit.n_points,
        }
        _err(f"{direction}: beta = {fit.beta:.4f} (r^2 = {fit.r_squared:.4f})")
    _atomic_write(
        os.path.join(out, "scaling_fit.json"),
        lambda fh: (json.dump(fits, fh, indent=2), fh.write("\n")),
    )
    return 0


# ---------------------------------------------------------------------------
# backbone
# ---------------------------------------------------------------------------


def _parse_alphas(text: str) -> list[float]:
    try:
        alphas = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"alphas must be numeric, got {text!r}") from None
    if not alphas:
        raise ValueError("at least one alpha is required")
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {a}")
    if len(alphas) > 1 and any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly decreasing")
    return alphas


def _cmd_backbone(args) -> int:
    try:
        alphas = _parse_alphas(args.alphas)
    except ValueError as exc:
        _err(str(exc))
        return 2
    net = _load_network(args.network)
    if net.n_edges == 0:
        _err("network has no edges")
        return 1
    out = _outdir(args)
    results = bb.backbone_sweep(net, alphas)
    for backbone, stats in results:
        tag = f"{backbone.threshold:g}"
        if args.format == "graphml":
            path = os.path.join(out, f"backbone_a{tag}.graphml")
            _atomic_write(
                path,
                lambda fh, b=backbone: bb.write_backbone_graphml(b, fh),
                binary=True,
            )
        else:
            path = os.path.join(out, f"backbone_a{tag}.tsv")
            _atomic_write(path, lambda fh, b=backbone: bb.write_backbone_tsv(b, fh))
        _err(
            f"alpha {tag}: kept {stats.pct_edges:.1f}% edges, "
            f"{stats.pct_nodes:.1f}% nodes, {stats.pct_flux:.1f}% flux"
        )
    _atomic_write(
        os.path.join(out, "backbone_stats.csv"),
        lambda fh: bb.write_stats_csv([s for _, s in results], fh),
    )
    return 0


# ---------------------------------------------------------------------------
# dollar
# ---------------------------------------------------------------------------


def _cmd_dollar(args) -> int:
    net = _load_network(args.network)
    focal = args.focal
    if focal not in net.index:
        _err(f"unknown country {focal!r}")
        return 2
    accounts = nw.node_accounts(net)
    account = accounts[net.index[focal]]
    if args.direction == "forward" and account.delta_s >= 0:
        _err(
            f"{focal} is a net {'producer' if account.delta_s > 0 else 'neutral'} "
            f"(delta_s = {account.delta_s!r}); forward walks start at net consumers. "
            f"Try --direction backward."
        )
        return 2
    if args.direction == "backward" and account.delta_s <= 0:
        _err(
            f"{focal} is a net {'consumer' if account.delta_s < 0 else 'neutral'} "
            f"(delta_s = {account.delta_s!r}); backward walks start at net producers. "
            f"Try --direction forward."
        )
        return 2

    diagnostics = {"focal": focal, "direction": args.direction}
    try:
        if args.exact:
            matrix = dif.exact_absorption(net, args.direction)
            other = dif.exact_absorption(
                net, "backward" if args.direction == "forward" else "forward"
            )
            fwd = matrix if args.direction == "forward" else other
            bwd = other if args.direction == "forward" else matrix
            flux = nw.total_flux(net)
            balance = dif.detailed_balance_check(fwd, bwd, accounts)
            diagnostics["method"] = matrix.method
            diagnostics["detailed_balance_max_abs"] = balance
            diagnostics["detailed_balance_rel_flux"] = balance / flux

            for label, m in (("forward", fwd), ("backward", bwd)):
                recon = dif.imbalance_reconstruction(m, accounts)
                actual = {a.country: abs(a.delta_s) for a in accounts}
                rel = max(
                    abs(v - actual[c]) / actual[c] for c, v in recon.items()
                )
                diagnostics[f"reconstruction_rel_err_{label}"] = rel
        else:
            config = dif.WalkConfig(
                n_walkers=args.walkers, seed=args.seed, max_steps=args.max_steps
            )
            if args.direction == "forward":
                matrix = dif.forward_walk_mc(net, focal, config)
            else:
                matrix = dif.backward_walk_mc(net, focal, config)
            diagnostics["method"] = "monte-carlo"
            diagnostics["n_walkers"] = config.n_walkers
            diagnostics["seed"] = config.seed
            diagnostics["non_absorbed"] = float(matrix.non_absorbed[0])
            for warning in matrix.warnings:
                _err(f"warning: {warning}")
            diagnostics["warnings"] = list(matrix.warnings)
    except (ValueError, NoConvergenceError) as exc:
        _err(str(exc))
        return 1

    ranking = dif.rank_partners(net, matrix, focal, top=args.top)
    out = _outdir(args)
    name = f"ranking_{_safe_token(focal)}_{args.direction}.csv"
    _atomic_write(
        os.path.join(out, name), lambda fh: dif.write_ranking_csv(ranking, fh)
    )
    _atomic_write(
        os.path.join(out, "dollar_diagnostics.json"),
        lambda fh: (json.dump(diagnostics, fh, indent=2), fh.write("\n")),
    )
    for r in ranking:
        mark = "direct" if r.direct else "indirect"
        _err(
            f"{r.rank:>3}. {r.partner}  {r.global_share_pct:6.2f}% "
            f"(local {r.local_share_pct:.2f}%, {mark})"
        )
    return 0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _cmd_export(args) -> int:
    net = _load_network(args.network)
    out = _outdir(args)
    if args.format == "graphml":
        path = os.path.join(out, "network.graphml")
        _atomic_write(path, lambda fh: nw.write_graphml(net, fh), binary=True)
    else:
        path = os.path.join(out, "network.tsv")
        _atomic_write(path, lambda fh: nw.write_edge_list(net, fh))
    _err(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tradeflux",
        description="Trade-imbalance networks: build, filter, and trace money flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="reconcile bilateral records into a network")
    p.add_argument("input", help="delimited dyadic records (CSV or TSV)")
    p.add_argument("--year", type=int, required=True, help="calendar year to extract")
    p.add_argument(
        "--policy",
        choices=ingest.RECONCILE_POLICIES,
        default="average",
        help="mirror-flow reconciliation policy",
    )
    p.add_argument(
        "--format-map",
        default=None,
        metavar="JSON",
        help="column-name mapping, inline JSON or a path to a JSON file",
    )
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("disparity", help="concentration profile and scaling fit")
    p.add_argument("network", help="edge-list TSV from the build step")
    p.add_argument("--direction", choices=("in", "out", "both"), default="both")
    p.add_argument("--k-min", type=int, default=2, help="smallest degree used in the fit")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_disparity)

    p = sub.add_parser("backbone", help="extract significant-edge backbones")
    p.add_argument("network", help="edge-list TSV from the build step")
    p.add_argument(
        "--alpha",
        dest="alphas",
        default=",".join(str(a) for a in DEFAULT_ALPHAS),
        metavar="A1,A2,...",
        help="strictly decreasing significance levels in (0, 1)",
    )
    p.add_argument("--format", choices=("tsv", "graphml"), default="tsv")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_backbone)

    p = sub.add_parser("dollar", help="trace where a country's imbalance flows")
    p.add_argument("network", help="edge-list TSV from the build step")
    p.add_argument("--from", dest="focal", required=True, metavar="COUNTRY")
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--walkers", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-steps", type=int, default=1_000_000)
    p.add_argument(
        "--exact",
        action="store_true",
        help="solve the absorbing system instead of simulating",
    )
    p.add_argument("--top", type=int, default=10, help="ranking length")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_dollar)

    p = sub.add_parser("export", help="convert a network file to another format")
    p.add_argument("network", help="edge-list TSV")
    p.add_argument("--format", choices=("graphml", "tsv"), default="graphml")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_export)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _err(f"{exc.filename}: no such file")
        return 1
    except ValueError as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
