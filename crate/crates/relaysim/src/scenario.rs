//! Experiment orchestration: scenario configs, sweep execution, CSV and
//! plot-script emission, figure presets, and the self-test suite behind the
//! command-line binary.

use std::fmt;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;

use crate::bounds::{
    self, ceiling_fixed_hop1, ceiling_fixed_hop2, rate_loss_bound_first_term,
    rate_loss_bound_high_snr, scale_bits,
};
use crate::precoder::SystemConfig;
use crate::ratesim::{monte_carlo_rate, paired_run, FeedbackMode, PairedRates, RateEstimate};
use crate::{SimError, SimResult};

/// `P = 10^(dB/10)`.
pub fn power_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Trials used when a config does not say otherwise.
pub const DEFAULT_TRIALS: usize = 20_000;
/// Seed used when a config does not say otherwise.
pub const DEFAULT_SEED: u64 = 1;
/// Monte Carlo trials for the rate-loss bound constant term.
const FIRST_TERM_TRIALS: usize = 10_000;

// ---------------------------------------------------------------------------
// Scenario description
// ---------------------------------------------------------------------------

/// What the sweep axis ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// BS power in dB, relay power fixed.
    P1Db,
    /// Relay power in dB, BS power fixed.
    P2Db,
    /// Both powers together in dB.
    JointDb,
    /// Hop-1 feedback bits, powers fixed.
    B1,
    /// Hop-2 feedback bits, powers fixed.
    B2,
}

impl SweepAxis {
    fn parse(s: &str) -> Option<SweepAxis> {
        match s.to_ascii_lowercase().as_str() {
            "p1_db" => Some(SweepAxis::P1Db),
            "p2_db" => Some(SweepAxis::P2Db),
            "joint_db" | "p1p2_db" => Some(SweepAxis::JointDb),
            "b1" => Some(SweepAxis::B1),
            "b2" => Some(SweepAxis::B2),
            _ => None,
        }
    }

    fn covers_p1(self) -> bool {
        matches!(self, SweepAxis::P1Db | SweepAxis::JointDb)
    }

    fn covers_p2(self) -> bool {
        matches!(self, SweepAxis::P2Db | SweepAxis::JointDb)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweepAxis::P1Db => "p1_db",
            SweepAxis::P2Db => "p2_db",
            SweepAxis::JointDb => "joint_db",
            SweepAxis::B1 => "b1",
            SweepAxis::B2 => "b2",
        };
        f.write_str(name)
    }
}

/// Which curves a scenario produces. At most one quantized variant per
/// scenario, so every CSV row has a single unambiguous set of R_Q columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ModeSet {
    pub perfect: bool,
    pub quantized_fixed: bool,
    pub quantized_scaled: bool,
}

impl ModeSet {
    fn any_quantized(self) -> bool {
        self.quantized_fixed || self.quantized_scaled
    }
}

/// A parsed experiment: base system plus one sweep.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub bs_antennas: usize,
    pub relay_antennas: usize,
    /// Fixed BS power in dB (required unless the axis covers it).
    pub p1_db: Option<f64>,
    /// Fixed relay power in dB (required unless the axis covers it).
    pub p2_db: Option<f64>,
    /// Fixed feedback bits for the quantized-fixed-bits mode.
    pub b1: Option<u32>,
    pub b2: Option<u32>,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub modes: ModeSet,
    /// Loss-budget factor of the scaled-bits mode.
    pub b: f64,
    /// Budget split of the scaled-bits mode.
    pub theta: f64,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

/// Config parse failure, pointing at the offending line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// 1-based line number; 0 for file-level problems.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config error: {}", self.message)
        } else {
            write!(f, "config error at line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ParseError {}

fn err(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// Parse `start:step:stop` or a comma-separated list of numbers.
fn parse_values(text: &str, line: usize) -> Result<Vec<f64>, ParseError> {
    let parse_one = |s: &str| -> Result<f64, ParseError> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| err(line, format!("expected a number, got '{}'", s.trim())))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(err(line, "range syntax is start:step:stop"));
        }
        let start = parse_one(parts[0])?;
        let step = parse_one(parts[1])?;
        let stop = parse_one(parts[2])?;
        if step <= 0.0 {
            return Err(err(line, "range step must be positive"));
        }
        if stop < start {
            return Err(err(line, "range stop must not precede start"));
        }
        let count = ((stop - start) / step).round() + 1.0;
        if !count.is_finite() || count > 10_000.0 {
            return Err(err(line, "range describes more than 10000 sweep points"));
        }
        let mut values = Vec::with_capacity(count as usize);
        let mut v = start;
        while v <= stop + 1e-9 {
            values.push(v);
            v = start + step * values.len() as f64;
        }
        Ok(values)
    } else {
        text.split(',').map(parse_one).collect()
    }
}

/// Parse a line-oriented `key = value` scenario config.
///
/// Keys: `M`, `N`, `P1_dB`, `P2_dB`, `sweep_axis`, `sweep_values`, `B1`,
/// `B2`, `b`, `theta`, `trials`, `seed`, `modes`, `output_dir`. Blank lines
/// and `#` comments are ignored; unknown keys are rejected. Defaults:
/// trials 20000, theta 0.5, b 2, seed 1, modes perfect + scaled bits,
/// output_dir `out`.
pub fn parse_config(text: &str) -> Result<Scenario, ParseError> {
    let mut m: Option<usize> = None;
    let mut n: Option<usize> = None;
    let mut p1_db: Option<f64> = None;
    let mut p2_db: Option<f64> = None;
    let mut b1: Option<u32> = None;
    let mut b2: Option<u32> = None;
    let mut axis: Option<(SweepAxis, usize)> = None;
    let mut values: Option<Vec<f64>> = None;
    let mut modes: Option<(ModeSet, usize)> = None;
    let mut b: f64 = 2.0;
    let mut theta: (f64, usize) = (0.5, 0);
    let mut trials: usize = DEFAULT_TRIALS;
    let mut seed: u64 = DEFAULT_SEED;
    let mut output_dir = PathBuf::from("out");

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, "expected 'key = value'"))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(err(line_no, format!("key '{key}' has no value")));
        }
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| err(line_no, format!("'{v}' is not a nonnegative integer")))
        };
        let parse_u32 = |v: &str| {
            v.parse::<u32>()
                .map_err(|_| err(line_no, format!("'{v}' is not a nonnegative integer")))
        };
        let parse_f64 = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| err(line_no, format!("'{v}' is not a number")))
        };
        match key {
            "M" => m = Some(parse_usize(value)?),
            "N" => n = Some(parse_usize(value)?),
            "P1_dB" => p1_db = Some(parse_f64(value)?),
            "P2_dB" => p2_db = Some(parse_f64(value)?),
            "B1" => b1 = Some(parse_u32(value)?),
            "B2" => b2 = Some(parse_u32(value)?),
            "sweep_axis" => {
                let parsed = SweepAxis::parse(value).ok_or_else(|| {
                    err(
                        line_no,
                        format!("unknown sweep_axis '{value}' (p1_db, p2_db, joint_db, b1, b2)"),
                    )
                })?;
                axis = Some((parsed, line_no));
            }
            "sweep_values" => values = Some(parse_values(value, line_no)?),
            "b" => b = parse_f64(value)?,
            "theta" => theta = (parse_f64(value)?, line_no),
            "trials" => trials = parse_usize(value)?,
            "seed" => {
                seed = value
                    .parse::<u64>()
                    .map_err(|_| err(line_no, format!("'{value}' is not a valid seed")))?;
            }
            "modes" => {
                let mut set = ModeSet::default();
                for mode in value.split(',') {
                    match mode.trim().to_ascii_lowercase().as_str() {
                        "perfect" => set.perfect = true,
                        "quantized-fixed-bits" => set.quantized_fixed = true,
                        "quantized-scaled-bits" => set.quantized_scaled = true,
                        other => {
                            return Err(err(line_no, format!("unknown mode '{other}'")));
                        }
                    }
                }
                modes = Some((set, line_no));
            }
            "output_dir" => output_dir = PathBuf::from(value),
            unknown => {
                return Err(err(line_no, format!("unknown key '{unknown}'")));
            }
        }
    }

    let m = m.ok_or_else(|| err(0, "missing required key 'M'"))?;
    let n = n.ok_or_else(|| err(0, "missing required key 'N'"))?;
    let (axis, axis_line) = axis.ok_or_else(|| err(0, "missing required key 'sweep_axis'"))?;
    let values = values.ok_or_else(|| err(0, "missing required key 'sweep_values'"))?;
    let (modes, modes_line) = modes.unwrap_or((
        ModeSet {
            perfect: true,
            quantized_fixed: false,
            quantized_scaled: true,
        },
        0,
    ));

    if n < 2 || m < n {
        return Err(err(0, format!("antenna counts must satisfy M >= N >= 2, got M={m}, N={n}")));
    }
    if values.is_empty() {
        return Err(err(axis_line, "sweep_values must be nonempty"));
    }
    if theta.0.is_nan() || theta.0 <= 0.0 || theta.0 >= 1.0 {
        return Err(err(
            theta.1,
            format!("theta must lie strictly inside (0, 1), got {}", theta.0),
        ));
    }
    if b.is_nan() || b <= 1.0 {
        return Err(err(0, format!("loss factor b must exceed 1, got {b}")));
    }
    if trials < 1 {
        return Err(err(0, "trials must be >= 1"));
    }
    if modes.quantized_fixed && modes.quantized_scaled {
        return Err(err(
            modes_line,
            "choose one quantized mode per scenario (fixed or scaled bits)",
        ));
    }
    if !modes.perfect && !modes.any_quantized() {
        return Err(err(modes_line, "modes must name at least one curve"));
    }
    if !axis.covers_p1() && p1_db.is_none() {
        return Err(err(0, "P1_dB is required when the sweep axis does not set it"));
    }
    if !axis.covers_p2() && p2_db.is_none() {
        return Err(err(0, "P2_dB is required when the sweep axis does not set it"));
    }
    if matches!(axis, SweepAxis::B1 | SweepAxis::B2) {
        if modes.quantized_scaled {
            return Err(err(
                axis_line,
                "bit-axis sweeps need the quantized-fixed-bits mode",
            ));
        }
        if !modes.quantized_fixed {
            return Err(err(axis_line, "bit-axis sweeps without a quantized mode are empty"));
        }
        for v in &values {
            if *v < 0.0 || v.fract() != 0.0 {
                return Err(err(axis_line, format!("bit sweep values must be nonnegative integers, got {v}")));
            }
        }
    }
    if modes.quantized_fixed {
        if !matches!(axis, SweepAxis::B1) && b1.is_none() {
            return Err(err(0, "quantized-fixed-bits mode needs B1"));
        }
        if !matches!(axis, SweepAxis::B2) && b2.is_none() {
            return Err(err(0, "quantized-fixed-bits mode needs B2"));
        }
    }

    Ok(Scenario {
        bs_antennas: m,
        relay_antennas: n,
        p1_db,
        p2_db,
        b1,
        b2,
        axis,
        values,
        modes,
        b,
        theta: theta.0,
        trials,
        seed,
        output_dir,
    })
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

/// One sweep point of a scenario run. Columns are filled per active mode and
/// left empty otherwise.
#[derive(Debug, Clone, Default)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub r_p: Option<f64>,
    pub r_p_stderr: Option<f64>,
    pub r_q: Option<f64>,
    pub r_q_stderr: Option<f64>,
    pub delta_r_per_user: Option<f64>,
    pub delta_r_stderr: Option<f64>,
    /// High-SNR (dominant) term of the per-user rate-loss bound.
    pub loss_bound_high_snr: Option<f64>,
    /// Full per-user rate-loss bound: constant-term estimate plus the
    /// high-SNR term.
    pub loss_bound_total: Option<f64>,
    /// Sum-rate ceiling for the fixed hop-1 bits (perfect hop-2 feedback).
    pub ceiling_b1: Option<f64>,
    /// Sum-rate ceiling for the fixed hop-2 bits (perfect hop-1 feedback).
    pub ceiling_b2: Option<f64>,
    pub b1_used: Option<u32>,
    pub b2_used: Option<u32>,
    pub discards: usize,
}

pub const CSV_HEADER: &str = "sweep_value,R_P,R_P_stderr,R_Q,R_Q_stderr,delta_R_per_user,delta_R_stderr,loss_bound_high_snr,loss_bound_total,ceiling_B1,ceiling_B2,B1,B2,discards";

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_u32(v: Option<u32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.sweep_value,
            fmt_opt_f64(self.r_p),
            fmt_opt_f64(self.r_p_stderr),
            fmt_opt_f64(self.r_q),
            fmt_opt_f64(self.r_q_stderr),
            fmt_opt_f64(self.delta_r_per_user),
            fmt_opt_f64(self.delta_r_stderr),
            fmt_opt_f64(self.loss_bound_high_snr),
            fmt_opt_f64(self.loss_bound_total),
            fmt_opt_f64(self.ceiling_b1),
            fmt_opt_f64(self.ceiling_b2),
            fmt_opt_u32(self.b1_used),
            fmt_opt_u32(self.b2_used),
            self.discards
        )
    }
}

/// Render rows as a CSV document (UTF-8, comma-delimited, full-precision
/// floats). Optional `comments` become leading `#` lines.
pub fn rows_to_csv(comments: &[String], rows: &[ResultRow]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Materialize the system config for one sweep point.
fn point_config(s: &Scenario, value: f64) -> SimResult<(SystemConfig, Option<u32>, Option<u32>)> {
    let p1_db = match s.axis {
        SweepAxis::P1Db | SweepAxis::JointDb => value,
        _ => s.p1_db.expect("validated"),
    };
    let p2_db = match s.axis {
        SweepAxis::P2Db | SweepAxis::JointDb => value,
        _ => s.p2_db.expect("validated"),
    };
    let (b1, b2) = match s.axis {
        SweepAxis::B1 => (Some(value as u32), s.b2),
        SweepAxis::B2 => (s.b1, Some(value as u32)),
        _ => (s.b1, s.b2),
    };
    let cfg = SystemConfig::new(
        s.bs_antennas,
        s.relay_antennas,
        power_from_db(p1_db),
        power_from_db(p2_db),
    )?
    .with_trials(s.trials)
    .with_seed(s.seed);
    Ok((cfg, b1, b2))
}

fn evaluate_point(s: &Scenario, value: f64) -> SimResult<ResultRow> {
    let (mut cfg, fixed_b1, fixed_b2) = point_config(s, value)?;
    let mut row = ResultRow {
        sweep_value: value,
        ..ResultRow::default()
    };

    // resolve the bit budget of the quantized curve, if any
    let bits = if s.modes.quantized_scaled {
        let plan = scale_bits(
            s.bs_antennas,
            s.relay_antennas,
            cfg.bs_power,
            cfg.relay_power,
            s.b,
            s.theta,
        )?;
        Some((plan.b1, plan.b2))
    } else if s.modes.quantized_fixed {
        Some((
            fixed_b1.expect("validated fixed bits"),
            fixed_b2.expect("validated fixed bits"),
        ))
    } else {
        None
    };

    match bits {
        Some((b1, b2)) => {
            cfg = cfg.with_bits(b1, b2);
            row.b1_used = Some(b1);
            row.b2_used = Some(b2);
            let pair = paired_run(&cfg, FeedbackMode::Quantized)?;
            if s.modes.perfect {
                row.r_p = Some(pair.perfect.mean);
                row.r_p_stderr = Some(pair.perfect.std_error);
                row.delta_r_per_user = Some(pair.loss_per_user.mean);
                row.delta_r_stderr = Some(pair.loss_per_user.std_error);
            }
            row.r_q = Some(pair.quantized.mean);
            row.r_q_stderr = Some(pair.quantized.std_error);
            row.discards = pair.quantized.discards;

            row.loss_bound_high_snr = Some(rate_loss_bound_high_snr(
                s.bs_antennas,
                s.relay_antennas,
                cfg.bs_power,
                cfg.relay_power,
                b1 as f64,
                b2 as f64,
            ));
            let first = rate_loss_bound_first_term(
                s.bs_antennas,
                s.relay_antennas,
                b1,
                FIRST_TERM_TRIALS,
                s.seed ^ 0xB0DD,
            )?;
            row.loss_bound_total =
                Some(first.bound + row.loss_bound_high_snr.expect("just set"));
            if s.modes.quantized_fixed {
                // ceilings apply to fixed-bit curves; convert to sum-rate units
                let half_n = s.relay_antennas as f64 / 2.0;
                row.ceiling_b1 =
                    Some(half_n * ceiling_fixed_hop1(s.bs_antennas, s.relay_antennas, b1)?.value);
                row.ceiling_b2 =
                    Some(half_n * ceiling_fixed_hop2(s.bs_antennas, s.relay_antennas, b2)?.value);
            }
        }
        None => {
            let est = monte_carlo_rate(&cfg, FeedbackMode::Perfect)?;
            row.r_p = Some(est.mean);
            row.r_p_stderr = Some(est.std_error);
            row.discards = est.discards;
        }
    }
    Ok(row)
}

/// Run every sweep point of a scenario (points in parallel, rows in sweep
/// order) and write `sweep.csv` into the output directory. On a module error
/// the rows completed so far are written alongside a `sweep.csv.partial`
/// marker before the error propagates.
pub fn run_scenario(s: &Scenario) -> SimResult<Vec<ResultRow>> {
    let results: Vec<SimResult<ResultRow>> = s
        .values
        .par_iter()
        .map(|&v| evaluate_point(s, v))
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut failure: Option<SimError> = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }

    fs::create_dir_all(&s.output_dir)
        .map_err(|e| SimError::Config(format!("cannot create output dir: {e}")))?;
    let csv_path = s.output_dir.join("sweep.csv");
    let mut comments = vec![
        format!(
            "two-hop relay downlink sweep: M={} N={} axis={} trials={} seed={}",
            s.bs_antennas, s.relay_antennas, s.axis, s.trials, s.seed
        ),
        format!(
            "modes: perfect={} quantized-fixed={} quantized-scaled={} (b={}, theta={})",
            s.modes.perfect, s.modes.quantized_fixed, s.modes.quantized_scaled, s.b, s.theta
        ),
    ];
    if rows.iter().any(|r| {
        r.discards as f64 / (s.trials + r.discards).max(1) as f64 > 0.01
    }) {
        comments.push("warning: discard ratio above 1% at one or more sweep points".into());
    }
    let csv = rows_to_csv(&comments, &rows);
    fs::write(&csv_path, csv)
        .map_err(|e| SimError::Config(format!("cannot write {}: {e}", csv_path.display())))?;

    if let Some(e) = failure {
        let marker = s.output_dir.join("sweep.csv.partial");
        let _ = fs::write(&marker, format!("aborted: {e}\n"));
        return Err(e);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Figure presets
// ---------------------------------------------------------------------------

/// Output of a figure preset: the CSV data and a gnuplot script that
/// consumes it.
#[derive(Debug, Clone)]
pub struct FigureOutput {
    pub csv_path: PathBuf,
    pub script_path: PathBuf,
}

/// Options shared by all figure presets.
#[derive(Debug, Clone)]
pub struct FigureOptions {
    pub out_dir: PathBuf,
    pub trials: usize,
    pub seed: u64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions {
            out_dir: PathBuf::from("figures"),
            trials: DEFAULT_TRIALS,
            seed: DEFAULT_SEED,
        }
    }
}

fn write_figure(
    opts: &FigureOptions,
    id: u8,
    comments: &[String],
    header: &str,
    lines: &[String],
    script_body: &str,
) -> SimResult<FigureOutput> {
    fs::create_dir_all(&opts.out_dir)
        .map_err(|e| SimError::Config(format!("cannot create output dir: {e}")))?;
    let csv_path = opts.out_dir.join(format!("figure_{id}.csv"));
    let script_path = opts.out_dir.join(format!("figure_{id}.gp"));
    let mut csv = String::new();
    for c in comments {
        csv.push_str("# ");
        csv.push_str(c);
        csv.push('\n');
    }
    csv.push_str(header);
    csv.push('\n');
    for l in lines {
        csv.push_str(l);
        csv.push('\n');
    }
    fs::write(&csv_path, csv)
        .map_err(|e| SimError::Config(format!("cannot write {}: {e}", csv_path.display())))?;
    fs::write(&script_path, script_body)
        .map_err(|e| SimError::Config(format!("cannot write {}: {e}", script_path.display())))?;
    Ok(FigureOutput {
        csv_path,
        script_path,
    })
}

fn gnuplot_preamble(id: u8, title: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        "# gnuplot script for figure_{id}.csv\n\
         set datafile separator \",\"\n\
         set datafile commentschars \"#\"\n\
         set terminal pngcairo size 900,620\n\
         set output 'figure_{id}.png'\n\
         set title '{title}'\n\
         set xlabel '{xlabel}'\n\
         set ylabel '{ylabel}'\n\
         set key left top\n\
         set grid\n"
    )
}

fn joint_cfg(m: usize, n: usize, snr_db: f64, trials: usize, seed: u64) -> SimResult<SystemConfig> {
    Ok(SystemConfig::new(m, n, power_from_db(snr_db), power_from_db(snr_db))?
        .with_trials(trials)
        .with_seed(seed))
}

/// Rate-loss accuracy grid: simulated per-user loss against the analytical
/// bound over hop-1/hop-2 bit budgets at 25 dB.
fn figure_loss_grid(opts: &FigureOptions) -> SimResult<FigureOutput> {
    let (m, n) = (4, 2);
    let snr_db = 25.0;
    let b1_values: Vec<u32> = (4..=14).collect();
    let b2_values: Vec<u32> = vec![2, 4, 6, 8, 10];

    // the constant bound term depends on B1 alone; estimate it once per value
    let first_terms: Vec<SimResult<f64>> = b1_values
        .par_iter()
        .map(|&b1| {
            rate_loss_bound_first_term(m, n, b1, FIRST_TERM_TRIALS, opts.seed ^ 0xB0DD)
                .map(|ft| ft.bound)
        })
        .collect();
    let first_terms = first_terms.into_iter().collect::<SimResult<Vec<_>>>()?;

    let points: Vec<(usize, u32)> = (0..b1_values.len())
        .flat_map(|i| b2_values.iter().map(move |&b2| (i, b2)))
        .collect();
    let rows: Vec<SimResult<String>> = points
        .par_iter()
        .map(|&(i, b2)| {
            let b1 = b1_values[i];
            let cfg = joint_cfg(m, n, snr_db, opts.trials, opts.seed)?.with_bits(b1, b2);
            let pair = paired_run(&cfg, FeedbackMode::Quantized)?;
            let high = rate_loss_bound_high_snr(
                m,
                n,
                cfg.bs_power,
                cfg.relay_power,
                b1 as f64,
                b2 as f64,
            );
            Ok(format!(
                "{},{},{},{},{},{}",
                b1,
                b2,
                pair.loss_per_user.mean,
                pair.loss_per_user.std_error,
                high,
                first_terms[i] + high
            ))
        })
        .collect();
    let lines = rows.into_iter().collect::<SimResult<Vec<_>>>()?;

    let script = format!(
        "{}plot for [b2 in \"2 4 6 8 10\"] 'figure_2.csv' using 1:($2 == b2+0 ? $3 : 1/0) \
         with linespoints title sprintf('simulated, B2=%s', b2), \\\n     \
         for [b2 in \"2 4 6 8 10\"] 'figure_2.csv' using 1:($2 == b2+0 ? $6 : 1/0) \
         with lines dashtype 2 title sprintf('bound, B2=%s', b2)\n",
        gnuplot_preamble(2, "Per-user rate loss vs feedback bits (M=4, N=2, 25 dB)",
            "B1 (bits)", "rate loss (b/s/Hz per user)")
    );
    write_figure(
        opts,
        2,
        &[format!(
            "per-user rate loss and bound at P1=P2={snr_db} dB, M={m}, N={n}, trials={}",
            opts.trials
        )],
        "B1,B2,delta_R_sim,delta_R_stderr,loss_bound_high_snr,loss_bound_total",
        &lines,
        &script,
    )
}

/// Interference-limited effect: quantized rate vs very high SNR with fixed
/// bits on one hop and perfect feedback on the other, against the ceilings.
fn figure_ceilings(opts: &FigureOptions) -> SimResult<FigureOutput> {
    let (m, n) = (4, 2);
    let snrs: Vec<f64> = (0..=12).map(|i| 5.0 * i as f64).collect(); // 0..60 dB
    let b2_cases = [2u32, 4];
    let b1_cases = [6u32, 9];
    let half_n = n as f64 / 2.0;

    let rows: Vec<SimResult<String>> = snrs
        .par_iter()
        .map(|&snr| {
            let mut fields = vec![snr.to_string()];
            for &b2 in &b2_cases {
                let cfg = joint_cfg(m, n, snr, opts.trials, opts.seed)?.with_bits(0, b2);
                let est = monte_carlo_rate(&cfg, FeedbackMode::QuantizedHop2Only)?;
                fields.push(est.mean.to_string());
                fields.push(est.std_error.to_string());
            }
            for &b1 in &b1_cases {
                let cfg = joint_cfg(m, n, snr, opts.trials, opts.seed)?.with_bits(b1, 0);
                let est = monte_carlo_rate(&cfg, FeedbackMode::QuantizedHop1Only)?;
                fields.push(est.mean.to_string());
                fields.push(est.std_error.to_string());
            }
            Ok(fields.join(","))
        })
        .collect();
    let lines = rows.into_iter().collect::<SimResult<Vec<_>>>()?;

    let mut comments = vec![format!(
        "quantized rate vs joint SNR, M={m}, N={n}, trials={}; ceilings in sum-rate units",
        opts.trials
    )];
    for &b2 in &b2_cases {
        let c = ceiling_fixed_hop2(m, n, b2)?;
        comments.push(format!("ceiling_B2_{b2} = {}", half_n * c.value));
    }
    for &b1 in &b1_cases {
        let c = ceiling_fixed_hop1(m, n, b1)?;
        comments.push(format!("ceiling_B1_{b1} = {}", half_n * c.value));
    }

    let mut elements = vec![
        "'figure_3.csv' using 1:2 with linespoints title 'B2=2, perfect V'".to_string(),
        "'figure_3.csv' using 1:4 with linespoints title 'B2=4, perfect V'".to_string(),
        "'figure_3.csv' using 1:6 with linespoints title 'B1=6, perfect g'".to_string(),
        "'figure_3.csv' using 1:8 with linespoints title 'B1=9, perfect g'".to_string(),
    ];
    for &b2 in &b2_cases {
        let c = ceiling_fixed_hop2(m, n, b2)?;
        elements.push(format!(
            "{} with lines dashtype 3 title 'ceiling B2={}'",
            half_n * c.value,
            b2
        ));
    }
    for &b1 in &b1_cases {
        let c = ceiling_fixed_hop1(m, n, b1)?;
        elements.push(format!(
            "{} with lines dashtype 4 title 'ceiling B1={}'",
            half_n * c.value,
            b1
        ));
    }
    let mut plot = gnuplot_preamble(
        3,
        "Interference-limited rate ceilings (M=4, N=2)",
        "P1 = P2 (dB)",
        "sum rate (b/s/Hz)",
    );
    plot.push_str("plot ");
    plot.push_str(&elements.join(", \\\n     "));
    plot.push('\n');

    write_figure(
        opts,
        3,
        &comments,
        "snr_db,R_Q_B2_2,se_B2_2,R_Q_B2_4,se_B2_4,R_Q_B1_6,se_B1_6,R_Q_B1_9,se_B1_9",
        &lines,
        &plot,
    )
}

/// Fixed-bit bits for the comparison figures: the scaled plan evaluated at
/// the 15 dB midpoint of the sweep.
fn midpoint_bits(m: usize, n: usize, p1_db: f64, p2_db: f64) -> SimResult<(u32, u32)> {
    let plan = scale_bits(
        m,
        n,
        power_from_db(p1_db),
        power_from_db(p2_db),
        2.0,
        0.5,
    )?;
    Ok((plan.b1, plan.b2))
}

/// Triple-curve comparison (perfect / scaled bits / fixed bits) over a power
/// sweep. `axis` decides which power(s) the sweep drives.
fn figure_comparison(
    opts: &FigureOptions,
    id: u8,
    m: usize,
    n: usize,
    axis: SweepAxis,
    fixed_p1_db: Option<f64>,
    fixed_p2_db: Option<f64>,
) -> SimResult<FigureOutput> {
    let sweep: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect(); // 0..30 dB
    let mid = 15.0;
    let (fb1, fb2) = midpoint_bits(
        m,
        n,
        fixed_p1_db.unwrap_or(mid),
        fixed_p2_db.unwrap_or(mid),
    )?;

    let rows: Vec<SimResult<String>> = sweep
        .par_iter()
        .map(|&v| {
            let p1_db = if axis.covers_p1() { v } else { fixed_p1_db.expect("fixed P1") };
            let p2_db = if axis.covers_p2() { v } else { fixed_p2_db.expect("fixed P2") };
            let base = SystemConfig::new(m, n, power_from_db(p1_db), power_from_db(p2_db))?
                .with_trials(opts.trials)
                .with_seed(opts.seed);

            let plan = scale_bits(m, n, base.bs_power, base.relay_power, 2.0, 0.5)?;
            let scaled_cfg = base.clone().with_bits(plan.b1, plan.b2);
            let scaled = paired_run(&scaled_cfg, FeedbackMode::Quantized)?;

            let fixed_cfg = base.clone().with_bits(fb1, fb2);
            let fixed = monte_carlo_rate(&fixed_cfg, FeedbackMode::Quantized)?;

            Ok(format!(
                "{},{},{},{},{},{},{},{},{}",
                v,
                scaled.perfect.mean,
                scaled.perfect.std_error,
                scaled.quantized.mean,
                scaled.quantized.std_error,
                fixed.mean,
                fixed.std_error,
                plan.b1,
                plan.b2
            ))
        })
        .collect();
    let lines = rows.into_iter().collect::<SimResult<Vec<_>>>()?;

    let xlabel = match axis {
        SweepAxis::JointDb => "P1 = P2 (dB)",
        SweepAxis::P2Db => "P2 (dB)",
        SweepAxis::P1Db => "P1 (dB)",
        _ => unreachable!("power axes only"),
    };
    let title = format!("Sum rate with perfect, scaled-bit, and fixed-bit feedback (M={m}, N={n})");
    let mut script = gnuplot_preamble(id, &title, xlabel, "sum rate (b/s/Hz)");
    script.push_str(&format!(
        "plot 'figure_{id}.csv' using 1:2 with linespoints title 'perfect CSI', \\\n     \
         'figure_{id}.csv' using 1:4 with linespoints title 'scaled B1, B2', \\\n     \
         'figure_{id}.csv' using 1:6 with linespoints title 'fixed B1={fb1}, B2={fb2}'\n"
    ));

    let mut comments = vec![format!(
        "rate comparison, M={m}, N={n}, trials={}, seed={}",
        opts.trials, opts.seed
    )];
    comments.push(format!(
        "fixed-bit curve uses the scaled plan at the 15 dB midpoint: B1={fb1}, B2={fb2}"
    ));
    if let Some(p) = fixed_p1_db {
        comments.push(format!("P1 fixed at {p} dB"));
    }
    if let Some(p) = fixed_p2_db {
        comments.push(format!("P2 fixed at {p} dB"));
    }

    write_figure(
        opts,
        id,
        &comments,
        "sweep_db,R_P,R_P_stderr,R_scaled,R_scaled_stderr,R_fixed,R_fixed_stderr,B1_scaled,B2_scaled",
        &lines,
        &script,
    )
}

/// Fixed-bit saturation for two antenna configurations on one set of axes.
fn figure_fixed_bits_two_configs(opts: &FigureOptions) -> SimResult<FigureOutput> {
    let sweep: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect();
    let configs = [(4usize, 2usize), (4, 4)];
    let mut bit_choices = Vec::new();
    for &(m, n) in &configs {
        bit_choices.push(midpoint_bits(m, n, 15.0, 15.0)?);
    }

    let rows: Vec<SimResult<String>> = sweep
        .par_iter()
        .map(|&snr| {
            let mut fields = vec![snr.to_string()];
            for (idx, &(m, n)) in configs.iter().enumerate() {
                let (b1, b2) = bit_choices[idx];
                let cfg = joint_cfg(m, n, snr, opts.trials, opts.seed)?.with_bits(b1, b2);
                let pair = paired_run(&cfg, FeedbackMode::Quantized)?;
                fields.push(pair.perfect.mean.to_string());
                fields.push(pair.quantized.mean.to_string());
                fields.push(pair.quantized.std_error.to_string());
            }
            Ok(fields.join(","))
        })
        .collect();
    let lines = rows.into_iter().collect::<SimResult<Vec<_>>>()?;

    let mut comments = vec![format!(
        "fixed-bit quantized feedback vs perfect CSI, trials={}",
        opts.trials
    )];
    for (idx, &(m, n)) in configs.iter().enumerate() {
        let (b1, b2) = bit_choices[idx];
        comments.push(format!("config M={m} N={n}: fixed B1={b1}, B2={b2} (scaled plan at 15 dB)"));
    }

    let mut script = gnuplot_preamble(
        4,
        "Fixed-bit feedback saturates at high SNR",
        "P1 = P2 (dB)",
        "sum rate (b/s/Hz)",
    );
    script.push_str(
        "plot 'figure_4.csv' using 1:2 with linespoints title 'M=4 N=2 perfect', \\\n     \
         'figure_4.csv' using 1:3 with linespoints title 'M=4 N=2 fixed bits', \\\n     \
         'figure_4.csv' using 1:5 with linespoints title 'M=4 N=4 perfect', \\\n     \
         'figure_4.csv' using 1:6 with linespoints title 'M=4 N=4 fixed bits'\n",
    );

    write_figure(
        opts,
        4,
        &comments,
        "snr_db,R_P_4x2,R_fixed_4x2,se_4x2,R_P_4x4,R_fixed_4x4,se_4x4",
        &lines,
        &script,
    )
}

/// Run one figure preset by id.
pub fn reproduce_figure(id: u8, opts: &FigureOptions) -> SimResult<FigureOutput> {
    match id {
        2 => figure_loss_grid(opts),
        3 => figure_ceilings(opts),
        4 => figure_fixed_bits_two_configs(opts),
        5 => figure_comparison(opts, 5, 4, 2, SweepAxis::JointDb, None, None),
        6 => figure_comparison(opts, 6, 4, 4, SweepAxis::JointDb, None, None),
        7 => figure_comparison(opts, 7, 4, 2, SweepAxis::P2Db, Some(10.0), None),
        8 => figure_comparison(opts, 8, 4, 2, SweepAxis::P1Db, None, Some(20.0)),
        other => Err(SimError::Config(format!(
            "unknown figure id {other}; valid ids are 2-8"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Self test
// ---------------------------------------------------------------------------

/// One named check of the self-test suite.
#[derive(Debug, Clone)]
pub struct SelftestCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Condensed invariant suite behind `relaysim selftest`: structural
/// identities at reduced trial counts. The full statistical suites live in
/// the crate's integration tests.
pub fn run_selftest(trials: usize, seed: u64) -> Vec<SelftestCheck> {
    let mut checks = Vec::new();
    let mut push = |name: &str, result: Result<String, String>| {
        checks.push(match result {
            Ok(detail) => SelftestCheck {
                name: name.into(),
                passed: true,
                detail,
            },
            Err(detail) => SelftestCheck {
                name: name.into(),
                passed: false,
                detail,
            },
        });
    };

    // SVD reconstruction and unitarity
    push("svd-reconstruction", {
        let mut worst = 0.0f64;
        let mut rng = crate::cmatrix::RngStream::new(seed, 101);
        let mut failed = None;
        for _ in 0..50 {
            let h = crate::cmatrix::sample_gaussian_matrix(2, 4, &mut rng);
            match crate::cmatrix::thin_svd(&h) {
                Ok(svd) => {
                    let rec = svd
                        .u
                        .mul(&crate::cmatrix::ComplexMatrix::from_diagonal(&svd.sigma))
                        .mul(&svd.v.hermitian());
                    let rel = rec.sub(&h).frobenius_norm() / h.frobenius_norm();
                    worst = worst.max(rel);
                }
                Err(e) => failed = Some(e.to_string()),
            }
        }
        match failed {
            None if worst <= 1e-9 => Ok(format!("worst relative residual {worst:.2e}")),
            None => Err(format!("worst relative residual {worst:.2e} exceeds 1e-9")),
            Some(e) => Err(e),
        }
    });

    // zero-error quantization collapses the loss to exactly zero
    push("zero-error-loss", {
        match SystemConfig::new(4, 2, 10.0, 10.0) {
            Ok(cfg) => {
                let cfg = cfg.with_trials(trials.min(200)).with_seed(seed);
                match paired_run(&cfg, FeedbackMode::ZeroError) {
                    Ok(pair) if pair.loss_per_user.mean == 0.0 => {
                        Ok("paired loss identically zero".into())
                    }
                    Ok(pair) => Err(format!("loss {} != 0", pair.loss_per_user.mean)),
                    Err(e) => Err(e.to_string()),
                }
            }
            Err(e) => Err(e.to_string()),
        }
    });

    // scaling-law closure identity
    push("bit-plan-closure", {
        match scale_bits(4, 2, 316.0, 316.0, 2.0, 0.5) {
            Ok(plan) => {
                let bound =
                    rate_loss_bound_high_snr(4, 2, 316.0, 316.0, plan.b1_exact, plan.b2_exact);
                let gap = (bound - 0.5).abs();
                if gap <= 1e-9 {
                    Ok(format!("closure gap {gap:.2e}"))
                } else {
                    Err(format!("closure gap {gap:.2e} exceeds 1e-9"))
                }
            }
            Err(e) => Err(e.to_string()),
        }
    });

    // determinism across repeated runs
    push("determinism", {
        match SystemConfig::new(4, 2, 31.6, 31.6) {
            Ok(cfg) => {
                let cfg = cfg.with_bits(4, 4).with_trials(trials.min(500)).with_seed(seed);
                let a = paired_run(&cfg, FeedbackMode::Quantized);
                let b = paired_run(&cfg, FeedbackMode::Quantized);
                match (a, b) {
                    (Ok(x), Ok(y)) if x.quantized.mean.to_bits() == y.quantized.mean.to_bits() => {
                        Ok("bit-identical reruns".into())
                    }
                    (Ok(x), Ok(y)) => {
                        Err(format!("means differ: {} vs {}", x.quantized.mean, y.quantized.mean))
                    }
                    (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                }
            }
            Err(e) => Err(e.to_string()),
        }
    });

    // scaled bits keep the simulated loss under budget at one SNR point
    push("scaled-bits-loss-budget", {
        let snr = power_from_db(20.0);
        match scale_bits(4, 2, snr, snr, 2.0, 0.5).and_then(|plan| {
            let cfg = SystemConfig::new(4, 2, snr, snr)?
                .with_bits(plan.b1, plan.b2)
                .with_trials(trials)
                .with_seed(seed);
            paired_run(&cfg, FeedbackMode::Quantized)
        }) {
            Ok(pair) => {
                let total = 2.0 * pair.loss_per_user.mean;
                let slack = 3.0 * 2.0 * pair.loss_per_user.std_error;
                if total <= 1.0 + slack {
                    Ok(format!("overall loss {total:.3} <= 1.0 (+{slack:.3})"))
                } else {
                    Err(format!("overall loss {total:.3} exceeds 1.0 (+{slack:.3})"))
                }
            }
            Err(e) => Err(e.to_string()),
        }
    });

    // theta optimum against a coarse grid
    push("theta-optimum", {
        let (m, n) = (5, 3);
        let star = bounds::optimal_theta(m, n);
        let grid: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        match grid
            .iter()
            .map(|&t| bounds::sum_feedback(m, n, 10.0, 100.0, 2.0, t).map(|v| (t, v)))
            .collect::<SimResult<Vec<_>>>()
        {
            Ok(vals) => {
                let argmin = vals
                    .iter()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap()
                    .0;
                if (argmin - star).abs() <= 1.5e-3 {
                    Ok(format!("grid argmin {argmin:.4} vs theta* {star:.4}"))
                } else {
                    Err(format!("grid argmin {argmin:.4} vs theta* {star:.4}"))
                }
            }
            Err(e) => Err(e.to_string()),
        }
    });

    checks
}

/// Print selftest results one line per check; returns true when all passed.
pub fn report_selftest(checks: &[SelftestCheck], mut out: impl std::io::Write) -> bool {
    let mut all = true;
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{status}] {}: {}", c.name, c.detail);
        all &= c.passed;
    }
    all
}

/// Write a `PairedRates` summary line; used by the CLI for ad-hoc runs.
pub fn describe_pair(pair: &PairedRates) -> String {
    format!(
        "R_P = {:.4} (se {:.4}), R_Q = {:.4} (se {:.4}), per-user loss = {:.4} (se {:.4}), discards = {}",
        pair.perfect.mean,
        pair.perfect.std_error,
        pair.quantized.mean,
        pair.quantized.std_error,
        pair.loss_per_user.mean,
        pair.loss_per_user.std_error,
        pair.quantized.discards
    )
}

/// Summarize a single estimate.
pub fn describe_estimate(label: &str, est: &RateEstimate) -> String {
    format!(
        "{label} = {:.4} b/s/Hz (se {:.4}, trials {}, discards {})",
        est.mean, est.std_error, est.trials, est.discards
    )
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
