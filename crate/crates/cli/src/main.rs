//! Command-line front end for the up-link QKD toolkit.
//!
//! Exit codes: 0 success, 1 no valid result (e.g. insufficient statistics),
//! 2 usage or validation error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use uplink_qkd::coincidence::{count_coincidences, rescan_windows, StatsRecord};
use uplink_qkd::overpass::{
    integrate_pass, load_profile_path, optimize_pass, Bounds, LeoPass, OverpassProfile, OverpassResult,
};
use uplink_qkd::rates::loss_shoulder_sweep;
use uplink_qkd::timetag::format::{read_csv, write_csv, write_qtag_header, write_qtag_record, QtagReader};
use uplink_qkd::timetag::{Party, Synthesizer, TagEvent, TagStream};
use uplink_qkd::{estimate, Error, LinkParams, TwoQubitState};

#[derive(Parser, Debug)]
#[command(name = "uplink-qkd", version, about = "Entanglement-based QKD up-link emulation and analysis")]
struct Cli {
    /// Link parameter file (JSON, or TOML with a .toml extension). Keys left
    /// out keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    params: Option<PathBuf>,

    #[command(flatten)]
    link: LinkOverrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct LinkOverrides {
    #[arg(long, global = true, allow_negative_numbers = true)]
    pump_mw: Option<f64>,
    /// Added free-space (up-link) loss.
    #[arg(long, global = true, allow_negative_numbers = true)]
    loss_db: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    fiber_km: Option<f64>,
    /// Full coincidence window.
    #[arg(long, global = true, allow_negative_numbers = true)]
    window_ps: Option<f64>,
    /// Satellite-side dark count rate summed over the four detectors.
    #[arg(long, global = true, allow_negative_numbers = true)]
    dark_sat_hz: Option<f64>,
    /// Fiber-side dark count rate summed over the four detectors.
    #[arg(long, global = true, allow_negative_numbers = true)]
    dark_fib_hz: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    dispersion_ps_per_km: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analytic rate estimate at one operating point (JSON).
    Rates {
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Key rate versus added loss for one or more pump powers.
    Shoulder {
        #[arg(long, default_value_t = 0.0)]
        loss_min_db: f64,
        #[arg(long, default_value_t = 50.0)]
        loss_max_db: f64,
        #[arg(long, default_value_t = 1.0)]
        loss_step_db: f64,
        /// Pump powers; defaults to the link's pump power.
        #[arg(long, value_delimiter = ',')]
        pumps_mw: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Synthesize time-tag files for both parties.
    Simulate {
        #[arg(long)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = TagFormat::Qtag)]
        tag_format: TagFormat,
        #[arg(long)]
        sat_out: PathBuf,
        #[arg(long)]
        fib_out: PathBuf,
    },
    /// Coincidence statistics from two tag files (JSON).
    Coincidences {
        #[arg(long)]
        sat: PathBuf,
        #[arg(long)]
        fib: PathBuf,
        /// Window scan `start:stop:step` in ps, stop inclusive. Overrides --window-ps.
        #[arg(long)]
        windows: Option<String>,
        /// Acquisition time; defaults to the last timestamp.
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Integrated key over a satellite pass.
    Overpass {
        /// `t_s,loss_db` CSV; a synthetic 400 km pass is used when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        correction_db: f64,
        /// Optimize pump power and window at every step.
        #[arg(long)]
        optimize: bool,
        #[arg(long, default_value_t = 0.1)]
        pump_min_mw: f64,
        #[arg(long, default_value_t = 100.0)]
        pump_max_mw: f64,
        #[arg(long, default_value_t = 50.0)]
        window_min_ps: f64,
        #[arg(long, default_value_t = 5000.0)]
        window_max_ps: f64,
        /// Per-step CSV: t_s,loss_db,skr_bps,pump_mw,window_ps.
        #[arg(long)]
        steps_csv: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TagFormat {
    Qtag,
    Csv,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn no_result(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::usage(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InsufficientStatistics(_) => Self::no_result(e.to_string()),
            _ => Self::usage(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Writes `value` over the matching keys of `base`, recursing into tables.
fn merge(base: &mut Value, value: Value) {
    match (base, value) {
        (Value::Object(b), Value::Object(v)) => {
            for (k, v) in v {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn load_link(params: Option<&Path>, o: &LinkOverrides) -> CliResult<LinkParams> {
    let mut link = LinkParams::default();
    if let Some(path) = params {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let value: Value = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        };
        let mut base = serde_json::to_value(&link).expect("defaults serialize");
        merge(&mut base, value);
        link = serde_json::from_value(base).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(v) = o.pump_mw {
        link.source.pump_power_mw = v;
    }
    if let Some(v) = o.loss_db {
        link.channel.freespace_loss_db = v;
    }
    if let Some(v) = o.fiber_km {
        link.channel.fiber_length_km = v;
    }
    if let Some(v) = o.window_ps {
        link.channel.coincidence_window_s = v * 1e-12;
    }
    if let Some(v) = o.dark_sat_hz {
        link.det_sat.dark_rate_hz = v;
    }
    if let Some(v) = o.dark_fib_hz {
        link.det_fib.dark_rate_hz = v;
    }
    if let Some(v) = o.dispersion_ps_per_km {
        link.channel.dispersion_ps_per_km = v;
    }
    link.validate()?;
    Ok(link)
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Failure::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::usage(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Failure::usage(e.to_string()))
}

/// Header from the field names, one row per element.
fn write_csv_rows<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_rates(link: &LinkParams, output: Option<&Path>) -> CliResult<()> {
    write_json(output, &estimate(link)?)
}

#[derive(Serialize)]
struct ShoulderRow {
    loss_db: f64,
    pump_mw: f64,
    skr_bps: f64,
    qber: f64,
    qx: f64,
}

fn linear_grid(field: &str, lo: f64, hi: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite() && hi >= lo) {
        return Err(Failure::usage(format!("{field}: need start <= stop and step > 0")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + i as f64 * step).collect())
}

fn cmd_shoulder(
    link: &LinkParams,
    (lo, hi, step): (f64, f64, f64),
    pumps: &[f64],
    format: Format,
    output: Option<&Path>,
) -> CliResult<()> {
    let losses = linear_grid("loss grid", lo, hi, step)?;
    let pumps = if pumps.is_empty() {
        vec![link.source.pump_power_mw]
    } else {
        pumps.to_vec()
    };
    let rows: Vec<ShoulderRow> = loss_shoulder_sweep(link, &losses, &pumps)?
        .into_iter()
        .map(|p| ShoulderRow {
            loss_db: p.loss_db,
            pump_mw: p.pump_mw,
            skr_bps: p.estimate.skr,
            qber: p.estimate.qber,
            qx: p.estimate.qx,
        })
        .collect();
    match format {
        Format::Json => write_json(output, &rows),
        Format::Csv => write_csv_rows(open_output(output)?, &rows)
            .map_err(|e| Failure::usage(e.to_string())),
    }
}

fn cmd_simulate(
    link: &LinkParams,
    duration_s: f64,
    seed: u64,
    format: TagFormat,
    sat_out: &Path,
    fib_out: &Path,
) -> CliResult<()> {
    let state = TwoQubitState::from_error_rates(link.source.intrinsic_qber, link.source.intrinsic_qx)?;
    let synth = Synthesizer::new(link, &state, duration_s, seed)?;
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Failure::io(p, e));
    let (mut ws, mut wf) = (create(sat_out)?, create(fib_out)?);
    let write_all = |ws: &mut BufWriter<File>, wf: &mut BufWriter<File>| -> io::Result<()> {
        match format {
            TagFormat::Qtag => {
                write_qtag_header(ws, Party::Satellite)?;
                write_qtag_header(wf, Party::Fiber)?;
                for slice in synth {
                    for &e in &slice.sat {
                        write_qtag_record(ws, e)?;
                    }
                    for &e in &slice.fib {
                        write_qtag_record(wf, e)?;
                    }
                }
            }
            TagFormat::Csv => {
                write_csv(ws, &[])?;
                write_csv(wf, &[])?;
                for slice in synth {
                    for e in &slice.sat {
                        writeln!(ws, "{},{}", e.timestamp_ps, e.channel)?;
                    }
                    for e in &slice.fib {
                        writeln!(wf, "{},{}", e.timestamp_ps, e.channel)?;
                    }
                }
            }
        }
        ws.flush()?;
        wf.flush()
    };
    write_all(&mut ws, &mut wf).map_err(|e| Failure::usage(e.to_string()))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Opens a tag file as a stream of events; CSV files are read whole.
fn open_tags(path: &Path) -> CliResult<Box<dyn Iterator<Item = uplink_qkd::Result<TagEvent>>>> {
    let file = File::open(path).map_err(|e| Failure::io(path, e))?;
    let reader = BufReader::with_capacity(1 << 20, file);
    let tagged = |e: Error| Failure::usage(format!("{}: {e}", path.display()));
    if is_csv(path) {
        let events = read_csv(reader).map_err(tagged)?;
        Ok(Box::new(events.into_iter().map(Ok)))
    } else {
        Ok(Box::new(QtagReader::new(reader).map_err(tagged)?))
    }
}

fn read_tags(path: &Path, party: Party) -> CliResult<TagStream> {
    let events = open_tags(path)?
        .collect::<uplink_qkd::Result<Vec<_>>>()
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let stream = TagStream {
        party,
        duration_s: 0.0,
        seed: 0,
        events,
    };
    stream.validate()?;
    Ok(stream)
}

fn parse_window_scan(scan: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = scan.split(':').collect();
    let [a, b, c] = parts[..] else {
        return Err(Failure::usage(format!("--windows: expected start:stop:step, got `{scan}`")));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Failure::usage(format!("--windows: `{s}`: {e}")))
    };
    let (lo, hi, step) = (num(a)?, num(b)?, num(c)?);
    if lo < 0.0 {
        return Err(Failure::usage("--windows: start must be >= 0"));
    }
    Ok(linear_grid("--windows", lo, hi, step)?
        .into_iter()
        .map(|w| w * 1e-12)
        .collect())
}

fn cmd_coincidences(
    link: &LinkParams,
    sat: &Path,
    fib: &Path,
    windows: Option<&str>,
    duration_s: Option<f64>,
    output: Option<&Path>,
) -> CliResult<()> {
    if let Some(d) = duration_s {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Failure::usage(format!("--duration-s must be > 0, got {d}")));
        }
    }
    let records: Vec<StatsRecord> = match windows {
        Some(scan) => {
            let windows = parse_window_scan(scan)?;
            let (a, b) = (read_tags(sat, Party::Satellite)?, read_tags(fib, Party::Fiber)?);
            let last = |s: &TagStream| s.events.last().map_or(0, |e| e.timestamp_ps);
            let duration = duration_s.unwrap_or(last(&a).max(last(&b)) as f64 * 1e-12);
            rescan_windows(&a, &b, &windows)?
                .into_iter()
                .map(|mut s| {
                    s.duration_s = duration;
                    StatsRecord::from(&s)
                })
                .collect()
        }
        None => {
            let window = link.channel.coincidence_window_s;
            let last = std::cell::Cell::new(0u64);
            let track = |r: &uplink_qkd::Result<TagEvent>| {
                if let Ok(e) = r {
                    last.set(last.get().max(e.timestamp_ps));
                }
            };
            let mut stats = count_coincidences(
                open_tags(sat)?.inspect(track),
                open_tags(fib)?.inspect(track),
                window,
                0.0,
            )?;
            stats.duration_s = duration_s.unwrap_or(last.get() as f64 * 1e-12);
            vec![StatsRecord::from(&stats)]
        }
    };
    write_json(output, &records)?;
    if records.iter().all(|r| r.skr_bps.is_none()) {
        return Err(Failure::no_result(
            "insufficient statistics: no window has coincidences in both bases",
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct OverpassStep {
    t_s: f64,
    loss_db: f64,
    skr_bps: f64,
    pump_mw: f64,
    window_ps: f64,
}

#[derive(Serialize)]
struct OverpassReport {
    total_key_bits: f64,
    peak_skr_bps: f64,
    correction_db: f64,
    optimized: bool,
    series: Vec<OverpassStep>,
}

fn report(profile: &OverpassProfile, link: &LinkParams, result: OverpassResult, optimized: bool) -> OverpassReport {
    let series = result
        .skr_series
        .iter()
        .enumerate()
        .map(|(i, &(t_s, skr_bps))| {
            let (pump_mw, window_s) = match &result.settings_series {
                Some(s) => (s[i].pump_mw, s[i].window_s),
                None => (link.source.pump_power_mw, link.channel.coincidence_window_s),
            };
            OverpassStep {
                t_s,
                loss_db: profile.corrected_loss_db(i),
                skr_bps,
                pump_mw,
                window_ps: window_s * 1e12,
            }
        })
        .collect();
    OverpassReport {
        total_key_bits: result.total_key_bits,
        peak_skr_bps: result.peak_skr,
        correction_db: profile.correction_db(),
        optimized,
        series,
    }
}

struct OverpassArgs<'a> {
    profile: Option<&'a Path>,
    correction_db: f64,
    optimize: bool,
    pump: Bounds,
    window: Bounds,
    steps_csv: Option<&'a Path>,
    output: Option<&'a Path>,
}

fn cmd_overpass(link: &LinkParams, args: OverpassArgs) -> CliResult<()> {
    let profile = match args.profile {
        Some(p) => load_profile_path(p, args.correction_db).map_err(|e| match e {
            Error::Io(io) => Failure::io(p, io),
            e => Failure::usage(format!("{}: {e}", p.display())),
        })?,
        None => LeoPass::default().profile(args.correction_db)?,
    };
    let result = if args.optimize {
        optimize_pass(&profile, link, args.pump, args.window)?
    } else {
        integrate_pass(&profile, link)?
    };
    let rep = report(&profile, link, result, args.optimize);
    if let Some(path) = args.steps_csv {
        let file = File::create(path).map_err(|e| Failure::io(path, e))?;
        write_csv_rows(file, &rep.series).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    }
    write_json(args.output, &rep)
}

fn run(cli: Cli) -> CliResult<()> {
    let link = load_link(cli.params.as_deref(), &cli.link)?;
    match cli.command {
        Command::Rates { output } => cmd_rates(&link, output.as_deref()),
        Command::Shoulder {
            loss_min_db,
            loss_max_db,
            loss_step_db,
            pumps_mw,
            format,
            output,
        } => cmd_shoulder(
            &link,
            (loss_min_db, loss_max_db, loss_step_db),
            &pumps_mw,
            format,
            output.as_deref(),
        ),
        Command::Simulate {
            duration_s,
            seed,
            tag_format,
            sat_out,
            fib_out,
        } => cmd_simulate(&link, duration_s, seed, tag_format, &sat_out, &fib_out),
        Command::Coincidences {
            sat,
            fib,
            windows,
            duration_s,
            output,
        } => cmd_coincidences(
            &link,
            &sat,
            &fib,
            windows.as_deref(),
            duration_s,
            output.as_deref(),
        ),
        Command::Overpass {
            profile,
            correction_db,
            optimize,
            pump_min_mw,
            pump_max_mw,
            window_min_ps,
            window_max_ps,
            steps_csv,
            output,
        } => cmd_overpass(
            &link,
            OverpassArgs {
                profile: profile.as_deref(),
                correction_db,
                optimize,
                pump: Bounds::new(pump_min_mw, pump_max_mw),
                window: Bounds::new(window_min_ps * 1e-12, window_max_ps * 1e-12),
                steps_csv: steps_csv.as_deref(),
                output: output.as_deref(),
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
