"""Command-line entry point.

Subcommands: ``synth`` (simulate a data bundle), ``index`` (transaction
records to activity index), ``nowcast`` (one vintage), ``evaluate`` (the
monthly pseudo-real-time exercise), ``daily`` (the daily exercise), and
``select`` (variable preselection shares).

Exit codes: 0 on success, 2 for configuration/usage errors, 3 for data
errors.  Failures print one machine-readable line ``error: <kind>: <msg>``
to stderr.
"""
from __future__ import annotations

import argparse
import configparser
import datetime as dt
import sys
from pathlib import Path

from . import combine, dataio, evaluate, synth, txnindex
from .series import ConfigError, DataError, parse_quarter, quarter_index, quarter_label


def _parse_date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise ConfigError(f"bad date {text!r} (expected YYYY-MM-DD)") from exc


def _read_config(path: str | None) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path!r} not found")
        cp.read(path)
    return cp


def _cfg(cp: configparser.ConfigParser, section: str, key: str, fallback=None):
    if cp.has_option(section, key):
        return cp.get(section, key)
    return fallback


def _pick(arg_value, cp, section, key, fallback=None):
    """Command-line flag wins, then config file, then the fallback."""
    if arg_value is not None:
        return arg_value
    return _cfg(cp, section, key, fallback)


def _model_list(text: str) -> tuple[str, ...]:
    models = tuple(m.strip() for m in text.split(",") if m.strip())
    if not models:
        raise ConfigError("--models must name at least one model")
    for m in models:
        if m not in evaluate.MODELS:
            raise ConfigError(
                f"unknown model {m!r} (choose from {', '.join(evaluate.MODELS)})"
            )
    return models


def _exercise_options(cp: configparser.ConfigParser) -> dict:
    """Per-model keyword overrides from ``[options.<name>]`` sections."""
    options: dict[str, dict] = {}
    for section in cp.sections():
        if not section.startswith("options."):
            continue
        name = section.split(".", 1)[1]
        opts: dict[str, object] = {}
        for key, raw in cp.items(section):
            try:
                opts[key] = int(raw)
            except ValueError:
                try:
                    opts[key] = float(raw)
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}") from exc
        options[name] = opts
    return options


def _load_bundle(args, cp) -> tuple[dict, dict]:
    data_dir = _pick(getattr(args, "data_dir", None), cp, "data", "dir")
    if data_dir is None:
        raise ConfigError("no data directory (use --data-dir or [data] dir in the config)")
    if not Path(data_dir).is_dir():
        raise DataError(f"data directory {data_dir!r} not found")
    return dataio.load_bundle(data_dir)


def _strip_bigdata(series: dict, meta: dict) -> tuple[dict, dict]:
    keep = [n for n, m in meta.items() if m.kind != "bigdata"]
    return {n: series[n] for n in keep if n in series}, {n: meta[n] for n in keep}


def _out_dir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, cp) -> int:
    spec = synth.SynthSpec(
        n_years=args.years,
        start_year=args.start_year,
        include_bigdata=not args.no_bigdata,
    )
    data = synth.gen_factor_panel(spec, args.seed)
    out = _out_dir(args)
    dataio.write_bundle(out, data.series, data.meta)
    qs = sorted(data.truth["quarterly"])
    print(f"wrote bundle with {len(data.series)} series to {out}")
    print(f"target quarters {quarter_label(qs[0])}..{quarter_label(qs[-1])}")
    if args.transactions:
        for purpose in txnindex.PURPOSES:
            targets = synth.index_targets(data, purpose, inflation=args.inflation)
            records, manifest = synth.gen_transactions(targets, purpose, seed=args.seed + 1)
            path = out / f"transactions_{purpose}.csv"
            dataio.write_transactions_csv(records, path)
            print(f"wrote {manifest['n_clean']} {purpose} transactions to {path}")
    return 0


def cmd_index(args, cp) -> int:
    path = _pick(args.transactions, cp, "index", "transactions")
    if path is None:
        raise ConfigError("no transactions file (use --transactions)")
    if not Path(path).is_file():
        raise DataError(f"transactions file {path!r} not found")
    purpose = _pick(args.purpose, cp, "index", "purpose", "consumption")
    deflator_raw = _pick(args.deflator, cp, "index", "deflator", "0")
    try:
        deflator = float(deflator_raw)
    except ValueError as exc:
        raise ConfigError(f"--deflator must be a number, got {deflator_raw!r}") from exc
    weights = None
    weights_raw = _pick(args.weights, cp, "index", "weights")
    if weights_raw:
        weights = {}
        for part in weights_raw.split(","):
            if "=" not in part:
                raise ConfigError(f"bad weights entry {part!r} (expected bucket=share)")
            bucket, share = part.split("=", 1)
            try:
                weights[bucket.strip()] = float(share)
            except ValueError as exc:
                raise ConfigError(f"bad weight share {share!r}") from exc
    records = dataio.read_transactions_csv(path)
    idx, report = txnindex.build_index(
        records, purpose, deflators=deflator, weights=weights, winsorize=args.winsorize
    )
    out = _out_dir(args)
    target = out / f"index_{purpose}.csv"
    dataio.write_series_csv(idx.combined, target)
    for bucket, g in sorted(idx.bucket_growth.items()):
        dataio.write_series_csv(g, out / f"index_{purpose}_{bucket}.csv")
    kept = f"{report.n_kept}/{report.n_input}"
    drops = ", ".join(f"{k}={v}" for k, v in sorted(report.excluded.items())) or "none"
    print(f"kept {kept} records (excluded: {drops})")
    print(f"wrote {target}")
    return 0


def cmd_nowcast(args, cp) -> int:
    series, meta = _load_bundle(args, cp)
    as_of = _parse_date(args.as_of)
    if args.quarter is not None:
        ref_q = parse_quarter(args.quarter)
    else:
        ref_q = quarter_index(as_of)
    models_raw = _pick(args.models, cp, "exercise", "models", "ar,lm,rf,gbm,dfm")
    models = _model_list(models_raw)
    values = evaluate.nowcast_once(
        series, meta, ref_q, as_of, models,
        seed=args.seed, options=_exercise_options(cp),
    )
    out = _out_dir(args)
    rows = [
        (quarter_label(ref_q), model, values[model], as_of.isoformat())
        for model in sorted(values)
    ]
    dataio.write_table_csv(out / "nowcasts.csv", ["ref_quarter", "model", "value", "vintage_date"], rows)
    for label, model, value, _ in rows:
        print(f"{label} {model:8s} {value:+.3f}")
    return 0


def _span(args, cp) -> tuple[int, int]:
    start = _pick(args.start, cp, "exercise", "start")
    end = _pick(args.end, cp, "exercise", "end")
    if start is None or end is None:
        raise ConfigError("need --start and --end quarters (e.g. 2018Q1)")
    qs, qe = parse_quarter(start), parse_quarter(end)
    if qe < qs:
        raise ConfigError(f"end quarter {end} precedes start quarter {start}")
    return qs, qe


def _build_eval_config(args, cp, series, meta) -> evaluate.EvalConfig:
    qs, qe = _span(args, cp)
    models = _model_list(_pick(args.models, cp, "exercise", "models", "ar,lm,rf,gbm,dfm"))
    combos_raw = _pick(getattr(args, "combos", None), cp, "exercise", "combos", "")
    combos = tuple(c.strip() for c in combos_raw.split(",") if c.strip())
    for c in combos:
        if c not in combine.SCHEMES:
            raise ConfigError(
                f"unknown combination scheme {c!r} (choose from {', '.join(combine.SCHEMES)})"
            )
    preselect = bool(getattr(args, "preselect", False) or _cfg(cp, "exercise", "preselect") == "1")
    return evaluate.EvalConfig(
        series=series, meta=meta, start_quarter=qs, end_quarter=qe,
        models=models, combos=combos, preselect=preselect,
        seed=args.seed, jobs=args.jobs, options=_exercise_options(cp),
    )


def _write_nowcasts(out: Path, name: str, records) -> None:
    rows = [
        (quarter_label(r.ref_quarter), r.horizon, r.model, r.value, r.vintage.isoformat())
        for r in records
    ]
    dataio.write_table_csv(out / name, ["ref_quarter", "horizon", "model", "value", "vintage_date"], rows)


def _write_selection(out: Path, result) -> None:
    rows = [
        (e.vintage.isoformat(), quarter_label(e.ref_quarter), e.horizon,
         int(e.bigdata_chosen), "|".join(e.active))
        for e in result.selection
    ]
    dataio.write_table_csv(
        out / "selection.csv",
        ["vintage_date", "ref_quarter", "horizon", "bigdata_chosen", "active"],
        rows,
    )


def cmd_evaluate(args, cp) -> int:
    series, meta = _load_bundle(args, cp)
    cfg = _build_eval_config(args, cp, series, meta)
    result = evaluate.run_exercise(cfg)
    out = _out_dir(args)
    _write_nowcasts(out, "nowcasts.csv", result.records)

    scores = evaluate.score_table(result)
    if args.ablate_bigdata:
        red_series, red_meta = _strip_bigdata(series, meta)
        red_cfg = _build_eval_config(args, cp, red_series, red_meta)
        red = evaluate.run_exercise(red_cfg)
        _write_nowcasts(out, "nowcasts_reduced.csv", red.records)
        red_mae = {(m, h): v for m, h, v in evaluate.score_table(red)}
        rows = [
            (m, h, v, red_mae[(m, h)] - v)
            for m, h, v in scores
            if (m, h) in red_mae
        ]
        dataio.write_table_csv(out / "scores.csv", ["model", "horizon", "mae", "maed"], rows)
    else:
        dataio.write_table_csv(out / "scores.csv", ["model", "horizon", "mae"], scores)
    if cfg.preselect:
        _write_selection(out, result)
    print(f"wrote {len(result.records)} nowcasts and scores to {out}")
    for row in evaluate.score_table(result, horizons=(1,)):
        print(f"  h1 MAE {row[0]:8s} {row[2]:.3f}")
    return 0


def cmd_daily(args, cp) -> int:
    series, meta = _load_bundle(args, cp)
    cfg = _build_eval_config(args, cp, series, meta)
    result, curve = evaluate.daily_exercise(cfg)
    out = _out_dir(args)
    _write_nowcasts(out, "nowcasts_daily.csv", result.records)
    dataio.write_table_csv(out / "daily_mae.csv", ["day", "mae", "ma7"], curve)
    if args.ablate_bigdata:
        red_series, red_meta = _strip_bigdata(series, meta)
        red_cfg = _build_eval_config(args, cp, red_series, red_meta)
        _, red_curve = evaluate.daily_exercise(red_cfg)
        dataio.write_table_csv(out / "daily_mae_reduced.csv", ["day", "mae", "ma7"], red_curve)
    print(f"wrote daily curve ({len(curve)} days) to {out}")
    return 0


def cmd_select(args, cp) -> int:
    series, meta = _load_bundle(args, cp)
    if args.models is None:
        args.models = "lm"
    args.preselect = True
    cfg = _build_eval_config(args, cp, series, meta)
    result = evaluate.run_exercise(cfg)
    summary = evaluate.selection_ratios(result.selection, names=tuple(n for n in cfg.series if not cfg.meta[n].target))
    out = _out_dir(args)
    _write_selection(out, result)
    dataio.write_table_csv(
        out / "selection_shares.csv", ["name", "share"],
        sorted(summary.shares.items()),
    )
    print(f"wrote selection records for {len(result.selection)} vintages to {out}")
    for name, share in sorted(summary.shares.items(), key=lambda kv: -kv[1])[:8]:
        print(f"  {name:24s} {share:.2f}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nowcastkit",
        description="Mixed-frequency GDP nowcasting toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output-dir", default="out")
        if data:
            p.add_argument("--data-dir", help="bundle directory from `synth`")

    p = sub.add_parser("synth", help="simulate a data bundle")
    common(p, data=False)
    p.add_argument("--years", type=int, default=9)
    p.add_argument("--start-year", type=int, default=2011)
    p.add_argument("--no-bigdata", action="store_true")
    p.add_argument("--transactions", action="store_true", help="also write transaction files")
    p.add_argument("--inflation", type=float, default=8.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("index", help="build an activity index from transactions")
    common(p, data=False)
    p.add_argument("--transactions", help="transactions CSV")
    p.add_argument("--purpose", choices=txnindex.PURPOSES)
    p.add_argument("--deflator", help="constant yoy inflation in percent")
    p.add_argument("--weights", help="bucket shares, e.g. goods=0.6,services=0.4")
    p.add_argument("--winsorize", action="store_true")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("nowcast", help="nowcast one quarter at a given date")
    common(p)
    p.add_argument("--as-of", required=True, help="vintage date YYYY-MM-DD")
    p.add_argument("--quarter", help="reference quarter, e.g. 2019Q2 (default: quarter of --as-of)")
    p.add_argument("--models")
    p.set_defaults(func=cmd_nowcast)

    p = sub.add_parser("evaluate", help="run the monthly pseudo-real-time exercise")
    common(p)
    p.add_argument("--start", help="first reference quarter, e.g. 2018Q1")
    p.add_argument("--end", help="last reference quarter")
    p.add_argument("--models")
    p.add_argument("--combos", help="comma list of mean,median,rpw,rank")
    p.add_argument("--preselect", action="store_true")
    p.add_argument("--ablate-bigdata", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("daily", help="run the daily-vintage exercise")
    common(p)
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--models")
    p.add_argument("--ablate-bigdata", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_daily)

    p = sub.add_parser("select", help="variable preselection shares per vintage")
    common(p)
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--models")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_select)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cp = _read_config(getattr(args, "config", None))
        return args.func(args, cp)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
