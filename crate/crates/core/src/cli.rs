//! Command-line front end. `run` parses arguments, dispatches and maps
//! errors to exit codes: 0 ok, 1 I/O or failed round trip, 2 validation or
//! class error, 3 ambiguous zero decision, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bandmatrix::BandMatrixError;
use crate::forward::{moment_stabilization, spectral_function, ForwardError};
use crate::inverse::{reconstruct, InverseError, ReconstructionOptions, Termination, AMBIGUITY_FACTOR, DEFAULT_BAND_TOL};
use crate::io::{self, format_real, InitialConditionsFile, IoError, MatrixFile, MeasureFile, FORMAT_VERSION};
use crate::measure::{MatrixMeasure, DEFAULT_EPS_ZERO};
use crate::random::RandomSpecError;
use crate::recurrence::InitialConditions;
use crate::roundtrip::{matrix_round_trip, seeded_case, RoundTripError, RoundTripReport, RoundTripTolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_AMBIGUOUS: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "bandspec", version, about = "Band matrices with degenerations and their matrix spectral functions")]
pub struct Cli {
    /// Worker threads for sweeps over seeds or sizes.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
pub struct TSource {
    /// Initial-condition matrix file.
    #[arg(long = "t", value_name = "FILE")]
    pub t_file: Option<PathBuf>,
    /// Use 𝒯 = I (the default).
    #[arg(long)]
    pub identity: bool,
}

#[derive(Debug, Args)]
pub struct InverseFlags {
    /// Stop after this many orthonormal polynomials.
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_EPS_ZERO)]
    pub eps_zero: f64,
    #[arg(long, default_value_t = DEFAULT_BAND_TOL)]
    pub band_tol: f64,
    #[arg(long, default_value_t = AMBIGUITY_FACTOR)]
    pub ambiguity_factor: f64,
    /// Check every skipped slot for zero norm.
    #[arg(long)]
    pub verify_skips: bool,
}

impl InverseFlags {
    fn options(&self) -> Result<ReconstructionOptions, CliError> {
        for (name, v) in [("eps-zero", self.eps_zero), ("band-tol", self.band_tol), ("ambiguity-factor", self.ambiguity_factor)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("--{name} must be positive and finite")));
            }
        }
        Ok(ReconstructionOptions {
            k_max: self.kmax,
            eps_zero: self.eps_zero,
            ambiguity_factor: self.ambiguity_factor,
            verify_skips: self.verify_skips,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check class membership and report the degeneration profile.
    Validate { matrix: PathBuf },
    /// Spectral function of the top N×N block.
    Forward {
        matrix: PathBuf,
        #[command(flatten)]
        t: TSource,
        /// Truncation size; defaults to the matrix size.
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a band matrix and 𝒯 from a measure.
    Inverse {
        measure: PathBuf,
        #[command(flatten)]
        flags: InverseFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward then inverse, compared against the input matrix.
    Roundtrip {
        /// Matrix file; omit with --random.
        matrix: Option<PathBuf>,
        #[command(flatten)]
        t: TSource,
        /// Draw a seeded random member instead of reading a file.
        #[arg(long, conflicts_with = "matrix", requires_all = ["n", "size"])]
        random: bool,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        /// Degeneration indices of the random member, comma separated.
        #[arg(long, value_delimiter = ',')]
        profile: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds starting at --seed.
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 1e-7)]
        entry_tol: f64,
        #[arg(long, default_value_t = 1e-7)]
        moment_tol: f64,
        #[command(flatten)]
        flags: InverseFlags,
        /// Also write the per-case reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Carleman and block-diagonal dominance tables of the block Jacobi tail.
    Diagnose {
        matrix: PathBuf,
        /// Number of blocks to report.
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Moments of a measure, or of a matrix's spectral functions over sizes.
    Moments {
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        measure: Option<PathBuf>,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[command(flatten)]
        t: TSource,
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', requires = "matrix")]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Ambiguous(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Ambiguous(_) => EXIT_AMBIGUOUS,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Read { .. } | IoError::Write { .. } | IoError::Csv(_) => CliError::Failure(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<BandMatrixError> for CliError {
    fn from(e: BandMatrixError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ForwardError> for CliError {
    fn from(e: ForwardError) -> Self {
        match e {
            ForwardError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<InverseError> for CliError {
    fn from(e: InverseError) -> Self {
        match e {
            InverseError::ToleranceAmbiguous { .. } => CliError::Ambiguous(e.to_string()),
            InverseError::SkipNotZero { .. } | InverseError::NoMatchingHeight { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RandomSpecError> for CliError {
    fn from(e: RandomSpecError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<RoundTripError> for CliError {
    fn from(e: RoundTripError) -> Self {
        match e {
            RoundTripError::Forward(e) => e.into(),
            RoundTripError::Inverse(e) => e.into(),
            RoundTripError::Matrix(e) => e.into(),
            RoundTripError::Random(e) => e.into(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failure(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(cli.command, &mut buf));
    if let Err(e) = out.write_all(&buf) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_FAILURE;
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Validate { matrix } => cmd_validate(&matrix, out),
        Command::Forward { matrix, t, size, out: dir } => cmd_forward(&matrix, &t, size, &dir, out),
        Command::Inverse { measure, flags, out: dir } => cmd_inverse(&measure, &flags, &dir, out),
        Command::Roundtrip { matrix, t, random, n, size, profile, seed, count, entry_tol, moment_tol, flags, out: dir } => {
            let tol = RoundTripTolerances { entry: entry_tol, moment: moment_tol, band: flags.band_tol };
            let source = if random {
                CaseSource::Random { n: n.unwrap_or(1), size: size.unwrap_or(0), profile, seed, count }
            } else {
                let matrix = matrix.ok_or_else(|| CliError::Validation("give a matrix file or --random".into()))?;
                CaseSource::File { matrix, t, size }
            };
            cmd_roundtrip(source, &flags, &tol, dir.as_deref(), out)
        }
        Command::Diagnose { matrix, blocks, out: file } => cmd_diagnose(&matrix, blocks, file.as_deref(), out),
        Command::Moments { measure, matrix, t, k, sizes, out: file } => {
            cmd_moments(measure.as_deref(), matrix.as_deref(), &t, k, &sizes, file.as_deref(), out)
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Failure(e.to_string()))
}

fn emit(file: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match file {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => write_out(out, text),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn load_t(src: &TSource, n: usize) -> Result<InitialConditions, CliError> {
    let t = match &src.t_file {
        Some(path) => io::read_initial(path)?,
        None => InitialConditions::identity(n),
    };
    if t.n() != n {
        return Err(CliError::Validation(format!("initial conditions are {0}x{0}, matrix half-width is {n}", t.n())));
    }
    Ok(t)
}

fn fmt_list(m: &[usize]) -> String {
    let list: Vec<String> = m.iter().map(|v| v.to_string()).collect();
    format!("[{}]", list.join(","))
}

fn profile_line(m: &[usize], n: usize) -> String {
    format!("j0={}, m={}, n0={}", m.len(), fmt_list(m), n - m.len())
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let (a, file) = io::read_matrix(path)?;
    let profile = a.validate()?;
    if !file.degenerations.is_empty() && file.degenerations != profile.m {
        return Err(CliError::Validation(format!(
            "declared degenerations {:?} differ from the inferred profile {:?}",
            file.degenerations, profile.m
        )));
    }
    write_out(out, &format!("{}\n", profile_line(&profile.m, profile.n)))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct ForwardReport {
    format_version: u32,
    n: usize,
    #[serde(rename = "N")]
    size: usize,
    degenerations: Vec<usize>,
    t_identity: bool,
    atoms: usize,
    total_rank: usize,
    /// max |𝒯ᵀ S_0 𝒯 − I|
    t_identity_error: f64,
    seed: Option<u64>,
}

pub fn t_identity_error(sigma: &MatrixMeasure, t: &InitialConditions) -> f64 {
    let n = sigma.n();
    (t.matrix().transpose() * sigma.moment(0) * t.matrix() - DMatrix::<f64>::identity(n, n)).amax()
}

pub fn cmd_forward(
    path: &Path,
    src: &TSource,
    size: Option<usize>,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let (a, file) = io::read_matrix(path)?;
    let profile = a.validate()?;
    let t = load_t(src, a.n())?;
    let size = size.unwrap_or(a.size());
    let sigma = spectral_function(&a, &t, size)?;
    ensure_dir(dir)?;
    io::write_json(&dir.join("measure.json"), &MeasureFile::from_measure(&sigma, file.seed))?;
    let step = dir.join("step.csv");
    let f = fs::File::create(&step).map_err(|e| io_failure(&step, e))?;
    io::write_step_function(f, &sigma)?;
    let report = ForwardReport {
        format_version: FORMAT_VERSION,
        n: a.n(),
        size,
        degenerations: profile.m,
        t_identity: src.t_file.is_none(),
        atoms: sigma.atoms().len(),
        total_rank: sigma.total_rank(),
        t_identity_error: t_identity_error(&sigma, &t),
        seed: file.seed,
    };
    io::write_json(&dir.join("report.json"), &report)?;
    write_out(
        out,
        &format!(
            "N={} atoms={} total_rank={} t_identity_error={:e}\n",
            size, report.atoms, report.total_rank, report.t_identity_error
        ),
    )?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GeneratorEntry {
    height: usize,
    structural: bool,
}

#[derive(Serialize)]
struct InverseReport {
    format_version: u32,
    n: usize,
    polynomials: usize,
    termination: &'static str,
    certified_rows: usize,
    degenerations: Vec<usize>,
    j0: usize,
    n0: usize,
    detected_degenerations: Vec<usize>,
    p_heights: Vec<usize>,
    generators: Vec<GeneratorEntry>,
    skipped: Vec<usize>,
    orthonormality_defect: f64,
    asymmetry: f64,
    max_out_of_band: f64,
    eps_zero: f64,
    band_tol: f64,
    certification: String,
    seed: Option<u64>,
}

pub fn cmd_inverse(path: &Path, flags: &InverseFlags, dir: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let file: MeasureFile = io::read_json(path)?;
    let sigma = file.to_measure()?;
    let options = flags.options()?;
    let rec = reconstruct(&sigma, &options, flags.band_tol)?;
    if rec.degenerations != rec.profile.m {
        return Err(CliError::Numerical(format!(
            "generator heights give degenerations {:?}, the assembled matrix has {:?}",
            rec.degenerations, rec.profile.m
        )));
    }
    let n = sigma.n();
    let certified = rec.table.certified_rows;
    let kp = rec.state.p.len();
    let certification = if certified >= kp {
        format!("all {kp} rows certified (space exhausted)")
    } else {
        format!("rows 1..={certified} of {kp} certified; rows above may miss band partners")
    };
    ensure_dir(dir)?;
    io::write_json(&dir.join("matrix.json"), &MatrixFile::from_matrix(&rec.matrix, rec.profile.m.clone(), file.seed))?;
    io::write_json(&dir.join("t.json"), &InitialConditionsFile::from_initial(&rec.t))?;
    let report = InverseReport {
        format_version: FORMAT_VERSION,
        n,
        polynomials: kp,
        termination: match rec.state.termination {
            Termination::KmaxReached => "kmax",
            Termination::Exhausted => "exhausted",
        },
        certified_rows: certified,
        degenerations: rec.profile.m.clone(),
        j0: rec.profile.j0(),
        n0: rec.profile.n0(),
        detected_degenerations: rec.degenerations.clone(),
        p_heights: rec.state.p_heights.clone(),
        generators: rec.state.q.iter().map(|g| GeneratorEntry { height: g.height, structural: g.structural }).collect(),
        skipped: rec.state.skipped.clone(),
        orthonormality_defect: rec.state.orthonormality_defect(),
        asymmetry: rec.table.asymmetry,
        max_out_of_band: rec.table.max_out_of_band(),
        eps_zero: options.eps_zero,
        band_tol: flags.band_tol,
        certification: certification.clone(),
        seed: file.seed,
    };
    io::write_json(&dir.join("report.json"), &report)?;
    write_out(out, &format!("{}\nK_p={kp} {certification}\n", profile_line(&rec.profile.m, n)))?;
    Ok(EXIT_OK)
}

pub enum CaseSource {
    File { matrix: PathBuf, t: TSource, size: Option<usize> },
    Random { n: usize, size: usize, profile: Vec<usize>, seed: u64, count: u64 },
}

#[derive(Serialize)]
struct CaseReport {
    seed: Option<u64>,
    #[serde(flatten)]
    report: RoundTripReport,
}

fn case_line(seed: Option<u64>, r: &RoundTripReport) -> String {
    let tag = seed.map(|s| format!("seed={s} ")).unwrap_or_default();
    format!(
        "{tag}n={} N={} m={} {} max_entry_error={:e} max_moment_error={:e} (K={}) recovered_m={}",
        r.n,
        r.size,
        fmt_list(&r.expected_profile),
        if r.pass { "PASS" } else { "FAIL" },
        r.max_entry_error,
        r.max_moment_error,
        r.moment_order,
        fmt_list(&r.recovered_profile)
    )
}

pub fn cmd_roundtrip(
    source: CaseSource,
    flags: &InverseFlags,
    tol: &RoundTripTolerances,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let options = flags.options()?;
    let cases: Vec<(Option<u64>, RoundTripReport)> = match source {
        CaseSource::File { matrix, t, size } => {
            let (a, file) = io::read_matrix(&matrix)?;
            a.validate()?;
            let t = load_t(&t, a.n())?;
            let size = size.unwrap_or(a.size());
            vec![(file.seed, matrix_round_trip(&a, &t, size, &options, tol)?)]
        }
        CaseSource::Random { n, size, profile, seed, count } => (seed..seed.saturating_add(count))
            .into_par_iter()
            .map(|s| {
                let (a, t) = seeded_case(n, size, profile.clone(), s)?;
                Ok((Some(s), matrix_round_trip(&a, &t, size, &options, tol)?))
            })
            .collect::<Result<_, CliError>>()?,
    };
    let mut text = String::new();
    for (seed, r) in &cases {
        text.push_str(&case_line(*seed, r));
        text.push('\n');
    }
    let passed = cases.iter().filter(|(_, r)| r.pass).count();
    let all = passed == cases.len();
    if cases.len() > 1 {
        text.push_str(&format!("{} {passed}/{} cases\n", if all { "PASS" } else { "FAIL" }, cases.len()));
    }
    write_out(out, &text)?;
    if let Some(dir) = dir {
        ensure_dir(dir)?;
        let reports: Vec<CaseReport> = cases.into_iter().map(|(seed, report)| CaseReport { seed, report }).collect();
        io::write_json(&dir.join("roundtrip.json"), &reports)?;
    }
    Ok(if all { EXIT_OK } else { EXIT_FAILURE })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn cmd_diagnose(path: &Path, blocks: Option<usize>, file: Option<&Path>, out: &mut dyn Write) -> Result<i32, CliError> {
    let (a, _) = io::read_matrix(path)?;
    let profile = a.validate()?;
    let tail = a.block_jacobi_tail(&profile)?;
    let carleman = tail.carleman_report();
    let records = tail.mirzoev_report();
    let limit = blocks.unwrap_or(carleman.len()).min(carleman.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Failure(e.to_string());
    w.write_record(["k", "carleman_partial_sum", "q_invertible", "q_inverse_norm", "coupling"]).map_err(csv_err)?;
    for (s, r) in carleman.iter().zip(&records).take(limit) {
        w.write_record([r.k.to_string(), format_real(*s), r.invertible.to_string(), fmt_opt(r.q_inverse_norm), fmt_opt(r.coupling)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failure(e.to_string()))?;
    emit(file, &String::from_utf8_lossy(&bytes), out)?;
    Ok(EXIT_OK)
}

fn moment_header(first: &[&str], n: usize) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|s| s.to_string()).collect();
    for i in 1..=n {
        for j in i..=n {
            h.push(format!("s_{i}_{j}"));
        }
    }
    h
}

fn upper(m: &DMatrix<f64>) -> impl Iterator<Item = String> + '_ {
    let n = m.nrows();
    (0..n).flat_map(move |i| (i..n).map(move |j| format_real(m[(i, j)])))
}

pub fn cmd_moments(
    measure: Option<&Path>,
    matrix: Option<&Path>,
    src: &TSource,
    k: usize,
    sizes: &[usize],
    file: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Failure(e.to_string());
    match (measure, matrix) {
        (Some(path), _) => {
            let sigma = io::read_measure(path)?;
            w.write_record(moment_header(&["k"], sigma.n())).map_err(csv_err)?;
            for (order, s) in sigma.moments(k).moments.iter().enumerate() {
                w.write_record(std::iter::once(order.to_string()).chain(upper(s))).map_err(csv_err)?;
            }
        }
        (None, Some(path)) => {
            let (a, _) = io::read_matrix(path)?;
            let t = load_t(src, a.n())?;
            let sizes: Vec<usize> = if sizes.is_empty() { vec![a.size()] } else { sizes.to_vec() };
            let rows = moment_stabilization(&a, &t, k, &sizes)?;
            w.write_record(moment_header(&["N", "k", "stable_order", "stable", "change"], a.n())).map_err(csv_err)?;
            for row in &rows {
                for (order, s) in row.moments.iter().enumerate() {
                    let change = row.change.as_ref().map(|c| c[order]);
                    let head = [
                        row.size.to_string(),
                        order.to_string(),
                        row.stable_order.to_string(),
                        row.is_stable_for(order).to_string(),
                        fmt_opt(change),
                    ];
                    w.write_record(head.into_iter().chain(upper(s))).map_err(csv_err)?;
                }
            }
        }
        (None, None) => return Err(CliError::Validation("give --measure or --matrix".into())),
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failure(e.to_string()))?;
    emit(file, &String::from_utf8_lossy(&bytes), out)?;
    Ok(EXIT_OK)
}
