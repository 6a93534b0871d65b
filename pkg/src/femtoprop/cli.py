"""femtoprop command line.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
from pathlib import Path

from . import campaign as camp
from . import fitting, pdp, propagation, sitemodel
from .errors import DataError, NoDataError
from .geometry import Point
from .reference import THICKNESS_CM


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _bold(text: str) -> str:
    if os.environ.get("FEMTOPROP_NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\x1b[1m{text}\x1b[0m"


def _read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path, text: str):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _band(value: str) -> propagation.FrequencyBand:
    try:
        f = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a frequency in GHz: {value!r}") from None
    if not f > 0:
        raise argparse.ArgumentTypeError("frequency must be positive")
    return propagation.FrequencyBand.from_ghz(f)


def _floats(count: int):
    def parse(value: str):
        parts = value.strip("()[] ").split(",")
        try:
            nums = tuple(float(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers") from None
        if len(nums) != count:
            raise argparse.ArgumentTypeError(f"expected {count} comma-separated numbers")
        return nums
    return parse


def _endpoint(site, value: str):
    """Node id, or an ``(x,y)`` coordinate pair."""
    if "," in value:
        x, y = _floats(2)(value)
        return Point(x, y)
    return site.node(value).position


def _check_band(site, band):
    for m in site.materials.values():
        m.loss_at(band.frequency_ghz)


# subcommands -----------------------------------------------------------------

def cmd_predict(args):
    site = sitemodel.load_site(args.site)
    _check_band(site, args.band)
    tx = site.node(args.tx)
    rx = _endpoint(site, args.rx)
    br = propagation.partition_path_loss(site, tx.position, rx, args.band)
    out = [_bold(f"{args.tx} -> {args.rx} at {args.band.frequency_ghz:g} GHz, "
                 f"d = {br.distance_m:.2f} m"),
           f"  {'free space':<22} {br.free_space_pl_db:8.2f} dB"]
    for t in br.terms:
        label = f"{t.material} x{t.count} ({t.kind})"
        out.append(f"  {label:<22} {t.subtotal_db:8.2f} dB   ({t.unit_loss_db:g} dB each)")
    out.append(f"  {'total path loss':<22} {br.total_pl_db:8.2f} dB")
    if args.received_power:
        rx_gain = args.rx_gain
        if rx_gain is None:
            rx_gain = site.nodes[args.rx].antenna_gain_dbi if args.rx in site.nodes else 0.0
        p = propagation.received_power(tx.tx_power_dbm, tx.antenna_gain_dbi, rx_gain, br.total_pl_db)
        out.append(f"  {'received power':<22} {p:8.2f} dBm")
    print("\n".join(out))
    if args.csv:
        rows = ["component,material,count,unit_loss_db,subtotal_db",
                f"free_space,,,,{br.free_space_pl_db!r}"]
        rows += [f"{t.kind},{t.material},{t.count},{t.unit_loss_db!r},{t.subtotal_db!r}" for t in br.terms]
        rows.append(f"total,,,,{br.total_pl_db!r}")
        _write(args.csv, "\n".join(rows) + "\n")
    return 0


def cmd_coverage(args):
    site = sitemodel.load_site(args.site)
    _check_band(site, args.band)
    grid = propagation.coverage_grid(site, args.tx, args.band, args.bounds, args.resolution)
    _write(args.out, propagation.coverage_csv(grid))
    if args.pgm:
        Path(args.pgm).write_bytes(propagation.coverage_pgm(grid))
    return 0


def _read_points(path):
    text = _read(path)
    rows = [r for r in csv.reader(l for l in text.splitlines() if l.strip() and not l.startswith("#"))]
    if not rows:
        raise NoDataError("no observations")
    header = [h.strip() for h in rows[0]]
    if "distance_m" not in header:
        raise DataError(f"{path}: no distance_m column")
    pl_col = "pl_db" if "pl_db" in header else "avg_pl_db"
    if pl_col not in header:
        raise DataError(f"{path}: no pl_db column")
    di, pi = header.index("distance_m"), header.index(pl_col)
    points = []
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            points.append((float(r[di]), float(r[pi])))
        except (ValueError, IndexError):
            raise DataError(f"{path}:{lineno}: bad row {','.join(r)!r}") from None
    if not points:
        raise NoDataError("no observations")
    return points


def cmd_fit_exponent(args):
    points = _read_points(args.points)
    pl_d0 = args.pl_d0 if args.pl_d0 is not None else fitting.default_pl_d0(args.band, args.d0)
    n = fitting.fit_exponent(points, args.d0, pl_d0)
    sigma = fitting.estimate_sigma(points, args.d0, pl_d0, n)
    print(f"n={n:.2f} sigma={sigma:.2f}")
    print(f"# exact n={n!r} sigma={sigma!r} d0={args.d0!r} pl_d0={pl_d0!r} points={len(points)}")
    if args.free_intercept:
        icpt, n_free = fitting.fit_free_intercept(points, args.d0)
        print(f"# diagnostic free-intercept fit: pl_d0={icpt:.2f} n={n_free:.2f}")
    return 0


def _thicknesses(site_path):
    if site_path is None:
        return dict(THICKNESS_CM)
    return dict(sitemodel.load_site(site_path).materials)


def cmd_fit_partitions(args):
    links = fitting.parse_links(_read(args.links))
    method = {"composite": fitting.fit_partitions_composite,
              "nnls": fitting.fit_partitions_nnls}[args.method]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", fitting.RankDeficiencyWarning)
        est = method(links)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    est = fitting.normalize_loss(est, _thicknesses(args.site))
    text, table = camp.partition_table(est)
    print("\n".join(text))
    if args.out:
        _write(args.out, table)
    return 0


def _calibration(args, first):
    if args.cal:
        cal_file = pdp.parse_pdp(_read(args.cal), str(args.cal))
        p_cal = args.p_cal_dbm if args.p_cal_dbm is not None else cal_file.p_cal_dbm
        if p_cal is None:
            raise DataError(f"{args.cal}: no p_cal_dbm header and no --p-cal-dbm given")
        return pdp.CalibrationReference.from_pdp(cal_file.pdp, p_cal)
    cal = first.calibration()
    if cal is None:
        raise DataError("no calibration: pass --cal or embed p_cal_dbm/cal_integral headers")
    return cal


def cmd_pdp_stats(args):
    files = [pdp.parse_pdp(_read(p), str(p)) for p in args.pdp]
    cal = _calibration(args, files[0])
    rig = pdp.rig_for_band(args.band.frequency_ghz)
    link = pdp.LinkConstants(
        rig.tx_power_dbm if args.tx_power is None else args.tx_power,
        rig.tx_gain_dbi if args.tx_gain is None else args.tx_gain,
        rig.rx_gain_dbi if args.rx_gain is None else args.rx_gain)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", pdp.ReceivedPowerWarning)
        row = camp.summarize_location([f.pdp for f in files], cal, link, args.distance, args.band,
                                      args.location or "", args.dynamic_range)
    # per-PDP and composite powers can repeat the same message
    for msg in dict.fromkeys(str(w.message) for w in caught):
        print(f"warning: {msg}", file=sys.stderr)
    print(_bold(f"location {row.location_id or '?'}: {len(files)} PDPs at "
                f"{args.band.frequency_ghz:g} GHz, d = {row.distance_m:g} m"))
    print(f"  free space PL     {row.free_space_pl_db:.0f} dB")
    print(f"  local-area avg PL {row.avg_pl_db:.0f} dB   (composite PDP)")
    print(f"  min / max PL      {row.min_pl_db:.0f} / {row.max_pl_db:.0f} dB")
    print(f"  min / max / avg delay spread {row.min_ds_ns:.0f} / {row.max_ds_ns:.0f} / "
          f"{row.avg_ds_ns:.0f} ns")
    if args.out:
        _write(args.out, camp.campaign_csv(camp.CampaignDataset(args.band, (row,))))
    return 0


def _taps(value: str):
    taps = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        delay, sep, power = chunk.partition(":")
        try:
            taps.append((float(delay), float(power)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad tap {chunk!r}, expected delay_ns:power_mw") from None
        if not sep:
            raise argparse.ArgumentTypeError(f"bad tap {chunk!r}, expected delay_ns:power_mw")
    if not taps:
        raise argparse.ArgumentTypeError("no taps given")
    return taps


def cmd_simulate_pdp(args):
    taps = args.taps
    if args.jitter_db > 0:
        taps = [(d, p * 10 ** (propagation.sample_shadowing(args.jitter_db, args.seed, i) / 10))
                for i, (d, p) in enumerate(taps)]
    profile = pdp.synthesize_pdp(taps, args.delta_tau, args.noise_floor, args.bins,
                                 location=args.location or "",
                                 band_ghz=None if args.band is None else args.band.frequency_ghz,
                                 position=args.position)
    _write(args.out, pdp.format_pdp(profile, args.p_cal_dbm, args.cal_integral))
    return 0


def cmd_report(args):
    if args.campaign:
        data = camp.load_campaign(_read(args.campaign), args.band)
    else:
        data = camp.bundled_campaign((args.band or propagation.BAND_2P5).frequency_ghz)
    fit = camp.fit_campaign(data, args.d0, args.pl_d0)
    partitions = None
    if args.links:
        links = fitting.parse_links(_read(args.links))
        method = {"composite": fitting.fit_partitions_composite,
                  "nnls": fitting.fit_partitions_nnls}[args.method]
        partitions = fitting.normalize_loss(method(links), _thicknesses(args.site))
    report = camp.generate_report(data, fit, partitions)
    sys.stdout.write(report.text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "campaign.csv").write_text(report.campaign_csv, encoding="utf-8")
        (out / "scatter.csv").write_text(report.scatter_csv, encoding="utf-8")
        if report.partitions_csv:
            (out / "partitions.csv").write_text(report.partitions_csv, encoding="utf-8")
    return 0


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="femtoprop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("predict", help="partition-model path loss for one link")
    s.add_argument("--site", required=True, help="site file")
    s.add_argument("--tx", required=True, help="transmitter node id")
    s.add_argument("--rx", required=True, help="receiver node id or (x,y) in metres")
    s.add_argument("--band", required=True, type=_band, help="carrier frequency in GHz")
    s.add_argument("--csv", help="write the breakdown as CSV to this path ('-' for stdout)")
    s.add_argument("--received-power", action="store_true",
                   help="also print received power using the node powers and gains")
    s.add_argument("--rx-gain", type=float, help="receiver gain in dBi when --rx is a point")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("coverage", help="path loss grid around one transmitter")
    s.add_argument("--site", required=True, help="site file")
    s.add_argument("--tx", required=True, help="transmitter node id")
    s.add_argument("--band", required=True, type=_band, help="carrier frequency in GHz")
    s.add_argument("--bounds", required=True, type=_floats(4), help="xmin,ymin,xmax,ymax in metres")
    s.add_argument("--resolution", required=True, type=float, help="cell size in metres")
    s.add_argument("--out", help="grid CSV path (default stdout)")
    s.add_argument("--pgm", help="also write an 8-bit PGM image here")
    s.set_defaults(func=cmd_coverage)

    s = sub.add_parser("fit-exponent", help="fixed-intercept path loss exponent and sigma")
    s.add_argument("--points", required=True,
                   help="CSV with distance_m and pl_db (or avg_pl_db) columns")
    s.add_argument("--d0", type=float, default=1.0, help="reference distance in metres (default 1)")
    s.add_argument("--pl-d0", type=float, help="path loss at d0 in dB (default free space at d0)")
    s.add_argument("--band", type=_band, default=propagation.BAND_2P5,
                   help="band used for the default --pl-d0 (default 2.5)")
    s.add_argument("--free-intercept", action="store_true",
                   help="also print an unconstrained-intercept fit (diagnostic)")
    s.set_defaults(func=cmd_fit_exponent)

    s = sub.add_parser("fit-partitions", help="per-partition attenuation from link observations")
    s.add_argument("--links", required=True, help="link observation CSV")
    s.add_argument("--method", choices=("composite", "nnls"), default="composite",
                   help="estimator (default composite)")
    s.add_argument("--site", help="site file providing material thicknesses")
    s.add_argument("--out", help="write the full-precision table as CSV")
    s.set_defaults(func=cmd_fit_partitions)

    s = sub.add_parser("pdp-stats", help="local-area summary from PDP files")
    s.add_argument("--pdp", required=True, nargs="+", help="PDP files from one location")
    s.add_argument("--cal", help="calibration PDP file")
    s.add_argument("--p-cal-dbm", type=float, help="calibration input power (overrides header)")
    s.add_argument("--band", required=True, type=_band, help="carrier frequency in GHz")
    s.add_argument("--distance", required=True, type=float, help="TX-RX distance in metres")
    s.add_argument("--location", help="location id")
    s.add_argument("--tx-power", type=float, help="transmit power dBm (default: rig value for band)")
    s.add_argument("--tx-gain", type=float, help="transmit antenna gain dBi (default: rig value)")
    s.add_argument("--rx-gain", type=float, help="receive antenna gain dBi (default: rig value)")
    s.add_argument("--dynamic-range", type=float, default=pdp.DYNAMIC_RANGE_DB,
                   help="clip bins this far below the peak before delay spread (default 30 dB)")
    s.add_argument("--out", help="write the summary row as campaign CSV")
    s.set_defaults(func=cmd_pdp_stats)

    s = sub.add_parser("simulate-pdp", help="write a synthetic PDP file from taps")
    s.add_argument("--taps", required=True, type=_taps,
                   help="comma-separated delay_ns:power_mw pairs, e.g. 0:1,20:0.25")
    s.add_argument("--delta-tau", type=float, default=pdp.DELTA_TAU_NS, help="bin width ns (default 2.5)")
    s.add_argument("--noise-floor", type=float, default=0.0, help="constant mW added to every bin")
    s.add_argument("--bins", type=int, help="number of bins (default: just enough)")
    s.add_argument("--jitter-db", type=float, default=0.0,
                   help="Gaussian dB perturbation of each tap power (uses --seed)")
    s.add_argument("--seed", type=int, default=0, help="seed for --jitter-db (default 0)")
    s.add_argument("--location", help="location id header")
    s.add_argument("--band", type=_band, help="band header in GHz")
    s.add_argument("--position", type=int, help="track position header")
    s.add_argument("--p-cal-dbm", type=float, help="embed a calibration power header")
    s.add_argument("--cal-integral", type=float, help="embed a calibration integral header")
    s.add_argument("--out", help="output path (default stdout)")
    s.set_defaults(func=cmd_simulate_pdp)

    s = sub.add_parser("report", help="campaign tables, exponent fit and partition losses")
    s.add_argument("--campaign", help="campaign CSV (default: bundled table for --band)")
    s.add_argument("--band", type=_band, help="band in GHz (overrides the CSV header)")
    s.add_argument("--d0", type=float, default=1.0, help="reference distance in metres (default 1)")
    s.add_argument("--pl-d0", type=float, help="path loss at d0 (default free space at d0)")
    s.add_argument("--links", help="link observation CSV for the partition section")
    s.add_argument("--method", choices=("composite", "nnls"), default="composite",
                   help="partition estimator (default composite)")
    s.add_argument("--site", help="site file providing material thicknesses")
    s.add_argument("--out-dir", help="directory for campaign.csv, scatter.csv, partitions.csv")
    s.set_defaults(func=cmd_report)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (DataError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"femtoprop {args.command}: error: {msg}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
