//! Command-line front end: argument grammar, config files, run manifests and exit codes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::estimator::estimate_coupling;
use crate::ingest::{
    linear_ramp, serialize_touchstone, sweep_from_csv, sweep_to_csv, synthesize_sweep,
    variance_curve_ports, DataFormat, FrequencyUnit, SweepDataset, TouchstoneOptions,
};
use crate::multiport::{
    ensemble_variance, ensemble_variance_direct, make_port_forms, ModelKind, Orthogonality,
    PortForms, VarianceTable,
};
use crate::rng::{ordered_map, tags, SeedStream};
use crate::sie::{
    moments_from_matrices, parse_quadruple_list, sample_sie, EigenvalueLaw, SieConfig, VectorMode,
};
use crate::sphere::{isotropic_samples, Field, IsotropicSampleConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_PARSE: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;

pub const THREADS_ENV: &str = "ISOSCATTER_THREADS";
pub const MANIFEST_NAME: &str = "run-manifest.json";

#[derive(Debug, Parser)]
#[command(name = "isoscatter", version, about = "Isotropic random scattering ensembles and multi-port variance checks")]
struct Cli {
    /// Worker threads (falls back to ISOSCATTER_THREADS, then the core count).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    /// TOML file supplying defaults for any flag not given on the command line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw isotropic unit vectors.
    SampleSphere(SampleSphereArgs),
    /// Draw scattering matrices from the isotropic ensemble.
    GenEnsemble(GenEnsembleArgs),
    /// Second moments of an ensemble written by gen-ensemble.
    Moments(MomentsArgs),
    /// Variance table of dA = L S L^T from full ensemble samples.
    Perturb(PerturbArgs),
    /// Ensemble variances of dA against the universal-ratio prediction.
    VarianceCheck(VarianceCheckArgs),
    /// Estimate rho and the cross-variance prediction from a sweep.
    Estimate(EstimateArgs),
    /// Write a synthetic stir-state sweep as Touchstone files.
    Synthesize(SynthesizeArgs),
    /// Per-frequency variance curves of a directory of Touchstone files.
    AnalyzeTouchstone(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FieldArg {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LawArg {
    FixedModulus,
    Gaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    /// Independent isotropic directions.
    #[value(alias = "independent")]
    Paper,
    /// Columns of one random unitary frame.
    Frame,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FormsArg {
    /// Hermitian-orthogonal rows.
    Orthogonal,
    /// Rows orthogonal only in the real part of the inner product.
    RealPart,
    /// Every row equal to the first.
    Identical,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelArg {
    Thevenin,
    Norton,
    Hybrid,
    Scattering,
}

#[derive(Debug, Args, Serialize)]
struct EnsembleArgs {
    /// Wave-space dimension N.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Effective reflection coefficient rho in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = LawArg::FixedModulus)]
    law: LawArg,
    /// Rank-one terms per sample (defaults to N).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    terms: Option<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Paper)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EnsembleArgs {
    fn config(&self) -> Result<SieConfig, Error> {
        let n = self.dim as usize;
        let cfg = SieConfig::new(n, self.rho)
            .with_law(match self.law {
                LawArg::FixedModulus => EigenvalueLaw::FixedModulusUniformPhase,
                LawArg::Gaussian => EigenvalueLaw::ComplexGaussian,
            })
            .with_mode(match self.mode {
                ModeArg::Paper => VectorMode::IndependentIsotropic,
                ModeArg::Frame => VectorMode::OrthonormalFrame,
            })
            .with_terms(self.terms.map_or(n, |t| t as usize));
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
struct PortArgs {
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    ports: u64,
    /// Comma-separated row norms |L_p| (default: all 1).
    #[arg(long)]
    norms: Option<String>,
    #[arg(long, value_enum, default_value_t = FormsArg::Orthogonal)]
    forms: FormsArg,
}

impl PortArgs {
    fn build(&self, dim: usize, stream: &SeedStream) -> Result<PortForms, Error> {
        let p = self.ports as usize;
        let norms = match &self.norms {
            Some(s) => parse_f64_list(s, "--norms")?,
            None => vec![1.0; p],
        };
        if norms.len() != p {
            return Err(Error::Config(format!("--norms has {} values for {p} ports", norms.len())));
        }
        let mut rng = stream.child(tags::PORT_FORMS).rng(0);
        match self.forms {
            FormsArg::Orthogonal => make_port_forms(p, dim, &norms, Orthogonality::Hermitian, &mut rng),
            FormsArg::RealPart => make_port_forms(p, dim, &norms, Orthogonality::RealPart, &mut rng),
            FormsArg::Identical => {
                let base = make_port_forms(1, dim, &[1.0], Orthogonality::Hermitian, &mut rng)?;
                let row = base.entries().row(0).to_owned();
                let rows = Array2::from_shape_fn((p, dim), |(i, k)| row[k] * norms[i]);
                PortForms::new(rows)
            }
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SampleSphereArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    #[arg(long, value_enum, default_value_t = FieldArg::Complex)]
    field: FieldArg,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GenEnsembleArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct MomentsArgs {
    /// CSV written by gen-ensemble.
    #[arg(long = "in")]
    #[serde(skip)]
    input: PathBuf,
    /// Semicolon-separated 1-based quadruples k,l,m,n.
    #[arg(long, default_value = "1,1,1,1;1,2,1,2;1,2,2,1;1,1,2,2;1,2,1,3")]
    quadruples: String,
    /// rho used for the predicted column.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PerturbArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    ports: PortArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Scattering)]
    model: ModelArg,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(100..))]
    count: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct VarianceCheckArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    ports: PortArgs,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(100..))]
    count: u64,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EstimateArgs {
    /// Long-format sweep CSV or a directory of Touchstone files.
    #[arg(long = "in")]
    #[serde(skip)]
    input: PathBuf,
    /// Reference port pair, 1-based.
    #[arg(long, default_value = "1,2")]
    ref_ports: String,
    /// Wave-space dimension N for the normalised rho estimate.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SynthesizeArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    ports: PortArgs,
    /// rho at the last frequency; rho ramps linearly from --rho.
    #[arg(long)]
    rho_end: Option<f64>,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    stirs: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    freqs: u64,
    /// First frequency in hertz.
    #[arg(long, default_value_t = 1e9)]
    f_start: f64,
    /// Last frequency in hertz.
    #[arg(long, default_value_t = 2e9)]
    f_stop: f64,
    /// Output directory.
    #[arg(long)]
    #[serde(skip)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    #[serde(skip)]
    dir: PathBuf,
    /// Port pair, 1-based.
    #[arg(long, default_value = "1,2")]
    ports: String,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) => EXIT_IO,
            Error::Parse { .. } => EXIT_PARSE,
            _ => EXIT_VALIDATION,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

/// Parses `argv` (including the program name), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match run_inner(argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            e.code
        }
    }
}

fn run_inner(argv: Vec<OsString>) -> Result<(), CliError> {
    let argv = apply_config_file(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return if code == EXIT_OK {
                Ok(())
            } else {
                Err(CliError {
                    code,
                    message: String::new(),
                })
            };
        }
    };
    let threads = match cli.threads {
        Some(t) => t as usize,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse::<usize>().ok().filter(|&t| t >= 1).ok_or_else(|| {
                CliError::usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))
            })?,
            Err(_) => 0,
        },
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

/// Appends `--key value` for every config-file entry whose flag is absent from `argv`.
///
/// Top-level keys apply to every subcommand; a table named after the
/// subcommand overrides them.
fn apply_config_file(mut argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path: Option<PathBuf> = None;
    let mut present: Vec<String> = Vec::new();
    let mut iter = argv.iter().skip(1);
    let mut subcommand: Option<String> = None;
    while let Some(arg) = iter.next() {
        let Some(s) = arg.to_str() else { continue };
        if let Some(flag) = s.strip_prefix("--") {
            let (name, inline) = match flag.split_once('=') {
                Some((n, v)) => (n, Some(v)),
                None => (flag, None),
            };
            if name == "config" {
                let value = match inline {
                    Some(v) => Some(OsString::from(v)),
                    None => iter.next().cloned(),
                };
                path = value.map(PathBuf::from);
            }
            present.push(name.to_string());
        } else if subcommand.is_none() && !s.starts_with('-') {
            subcommand = Some(s.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::from(Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::from(Error::Config(format!("{}: {e}", path.display()))))?;
    let mut entries: Vec<(String, toml::Value)> = Vec::new();
    for (k, v) in &table {
        if !v.is_table() {
            entries.push((k.clone(), v.clone()));
        }
    }
    if let Some(toml::Value::Table(sub)) = subcommand.as_ref().and_then(|s| table.get(s)) {
        for (k, v) in sub {
            entries.retain(|(e, _)| e != k);
            entries.push((k.clone(), v.clone()));
        }
    }
    for (key, value) in entries {
        let key = key.replace('_', "-");
        if present.iter().any(|p| *p == key) {
            continue;
        }
        let rendered = match value {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(true) => {
                argv.push(format!("--{key}").into());
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => {
                return Err(CliError::from(Error::Config(format!(
                    "config key '{key}' has unsupported value {other}"
                ))))
            }
        };
        argv.push(format!("--{key}").into());
        argv.push(rendered.into());
    }
    Ok(argv)
}

fn parse_f64_list(s: &str, flag: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(str::trim)
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("{flag}: '{t}' is not a number")))
        })
        .collect()
}

fn parse_port_pair(s: &str, flag: &str) -> Result<(usize, usize), Error> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("{flag}: expected two port numbers like 1,2, got '{s}'")))?;
    match parts[..] {
        [p, q] if p >= 1 && q >= 1 && p != q => Ok((p, q)),
        _ => Err(Error::Config(format!("{flag}: expected two distinct 1-based ports, got '{s}'"))),
    }
}

#[derive(Serialize)]
struct Artifact {
    name: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a C,
    artifacts: Vec<Artifact>,
    warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Collects output files and writes them together with a manifest.
struct Outputs<'a, C: Serialize> {
    subcommand: &'a str,
    config: &'a C,
    files: Vec<(PathBuf, Vec<u8>)>,
    warnings: Vec<String>,
}

impl<'a, C: Serialize> Outputs<'a, C> {
    fn new(subcommand: &'a str, config: &'a C) -> Self {
        Self {
            subcommand,
            config,
            files: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    fn warn(&mut self, w: String) {
        eprintln!("warning: {w}");
        self.warnings.push(w);
    }

    fn manifest(&self) -> Result<String, CliError> {
        let manifest = Manifest {
            tool: "isoscatter",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config: self.config,
            artifacts: self
                .files
                .iter()
                .map(|(p, b)| Artifact {
                    name: p
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    bytes: b.len(),
                    sha256: sha256_hex(b),
                })
                .collect(),
            warnings: self.warnings.clone(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::from(Error::Config(format!("manifest: {e}"))))?;
        s.push('\n');
        Ok(s)
    }

    fn write(self, manifest_path: &Path) -> Result<(), CliError> {
        let manifest = self.manifest()?;
        for (path, bytes) in &self.files {
            write_file(path, bytes)?;
        }
        write_file(manifest_path, manifest.as_bytes())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| {
        CliError::from(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn manifest_beside(file: &Path) -> PathBuf {
    let name = file
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.with_file_name(format!("{name}.{MANIFEST_NAME}"))
}

/// Writes `csv` to `out` plus its manifest, or to stdout when `out` is absent.
fn emit_csv<C: Serialize>(
    subcommand: &str,
    config: &C,
    out: Option<&Path>,
    csv: String,
    warnings: Vec<String>,
) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let mut outputs = Outputs::new(subcommand, config);
            for w in warnings {
                outputs.warn(w);
            }
            outputs.add(path.to_path_buf(), csv.into_bytes());
            outputs.write(&manifest_beside(path))
        }
        None => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(csv.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        CliError::from(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::SampleSphere(a) => sample_sphere(&a),
        Command::GenEnsemble(a) => gen_ensemble(&a),
        Command::Moments(a) => moments(&a),
        Command::Perturb(a) => perturb_cmd(&a),
        Command::VarianceCheck(a) => variance_check(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Synthesize(a) => synthesize(&a),
        Command::AnalyzeTouchstone(a) => analyze(&a),
    }
}

fn sample_sphere(a: &SampleSphereArgs) -> Result<(), CliError> {
    let config = IsotropicSampleConfig {
        dimension: a.dim as usize,
        field: match a.field {
            FieldArg::Real => Field::Real,
            FieldArg::Complex => Field::Complex,
        },
        seed: a.seed,
        sample_count: a.count,
    };
    let samples = isotropic_samples(&config)?;
    let mut csv = String::from("index");
    for k in 0..config.dimension {
        let _ = write!(csv, ",c{k}_re,c{k}_im");
    }
    csv.push('\n');
    for (i, v) in samples.iter().enumerate() {
        let _ = write!(csv, "{i}");
        for z in v.to_complex() {
            let _ = write!(csv, ",{:e},{:e}", z.re, z.im);
        }
        csv.push('\n');
    }
    emit_csv("sample-sphere", a, a.out.as_deref(), csv, Vec::new())
}

fn matrix_rows(csv: &mut String, sample: u64, m: &Array2<Complex64>) {
    for ((r, c), z) in m.indexed_iter() {
        let _ = writeln!(csv, "{sample},{},{},{:e},{:e}", r + 1, c + 1, z.re, z.im);
    }
}

const MATRIX_CSV_HEADER: &str = "sample,row,col,re,im";

fn gen_ensemble(a: &GenEnsembleArgs) -> Result<(), CliError> {
    let config = a.ensemble.config()?;
    let stream = SeedStream::new(a.ensemble.seed).child(tags::ENSEMBLE);
    let matrices = ordered_map(a.count, |i| {
        sample_sie(&config, &mut stream.rng(i))
            .expect("validated config")
            .into_matrix()
            .into_array()
    });
    let mut csv = format!("{MATRIX_CSV_HEADER}\n");
    for (i, m) in matrices.iter().enumerate() {
        matrix_rows(&mut csv, i as u64, m);
    }
    emit_csv("gen-ensemble", a, a.out.as_deref(), csv, Vec::new())
}

/// Reads a `sample,row,col,re,im` CSV into square matrices ordered by sample index.
fn read_matrix_csv(text: &str) -> Result<Vec<Array2<Complex64>>, Error> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == MATRIX_CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header '{MATRIX_CSV_HEADER}'"))),
    }
    let mut entries = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = raw.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(line, format!("expected 5 fields, found {}", f.len())));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(line, format!("'{s}' is not a nonnegative integer")))
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line, format!("'{s}' is not a finite number")))
        };
        let (sample, row, col) = (int(f[0])?, int(f[1])?, int(f[2])?);
        if row == 0 || col == 0 {
            return Err(Error::parse(line, "row and col are 1-based"));
        }
        entries.push((sample, row - 1, col - 1, Complex64::new(num(f[3])?, num(f[4])?)));
    }
    let n = entries.iter().map(|e| e.1.max(e.2) + 1).max().unwrap_or(0);
    let count = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let mut out = vec![Array2::<Complex64>::zeros((n, n)); count];
    let mut seen = vec![0usize; count];
    for (s, r, c, z) in entries {
        out[s][(r, c)] = z;
        seen[s] += 1;
    }
    if let Some(s) = seen.iter().position(|&k| k != n * n) {
        return Err(Error::Shape(format!("sample {s} has {} of {} entries", seen[s], n * n)));
    }
    Ok(out)
}

fn moments(a: &MomentsArgs) -> Result<(), CliError> {
    let matrices = read_matrix_csv(&read_input(&a.input)?)?;
    let n = matrices.first().map_or(0, |m| m.nrows());
    if n == 0 {
        return Err(Error::InsufficientData("ensemble file holds no samples".into()).into());
    }
    let quads = parse_quadruple_list(&a.quadruples)?;
    let config = SieConfig::new(n, a.rho);
    config.validate()?;
    let report = moments_from_matrices(n, &matrices, &quads, |q| config.predicted_covariance(q))?;
    let mut csv = String::from("k,l,m,n,empirical_re,empirical_im,predicted,stderr\n");
    for q in &report.quadruples {
        let x = q.quadruple;
        let _ = writeln!(
            csv,
            "{},{},{},{},{:e},{:e},{:e},{:e}",
            x.k, x.l, x.m, x.n, q.empirical.re, q.empirical.im, q.predicted, q.stderr
        );
    }
    emit_csv("moments", a, a.out.as_deref(), csv, Vec::new())
}

fn perturb_cmd(a: &PerturbArgs) -> Result<(), CliError> {
    let config = a.ensemble.config()?;
    let root = SeedStream::new(a.ensemble.seed);
    let forms = a.ports.build(config.dimension, &root)?;
    let kind = match a.model {
        ModelArg::Thevenin => ModelKind::Thevenin,
        ModelArg::Norton => ModelKind::Norton,
        ModelArg::Hybrid => ModelKind::Hybrid,
        ModelArg::Scattering => ModelKind::Scattering,
    };
    let table = ensemble_variance_direct(&forms, &config, a.count, &root.child(tags::ENSEMBLE))?;
    let note = format!("variances are in ({})^2", kind.units());
    emit_csv("perturb", a, a.out.as_deref(), variance_table_csv(&table), vec![note])
}

fn variance_table_csv(table: &VarianceTable) -> String {
    let p = table.port_count();
    let mut csv = String::from("p,q,empirical_var,predicted_var,stderr,rel_residual\n");
    for i in 0..p {
        for j in i..p {
            let _ = write!(
                csv,
                "{},{},{:e},{:e},{:e},",
                i + 1,
                j + 1,
                table.empirical[(i, j)],
                table.predicted[(i, j)],
                table.stderr[(i, j)]
            );
            if i != j {
                if let Ok(r) = table.ratio_residual(i + 1, j + 1) {
                    let _ = write!(csv, "{r:e}");
                }
            }
            csv.push('\n');
        }
    }
    csv
}

fn variance_check(a: &VarianceCheckArgs) -> Result<(), CliError> {
    let config = a.ensemble.config()?;
    let root = SeedStream::new(a.ensemble.seed);
    let forms = a.ports.build(config.dimension, &root)?;
    let table = ensemble_variance(&forms, &config, a.count, &root.child(tags::ENSEMBLE))?;
    emit_csv("variance-check", a, a.out.as_deref(), variance_table_csv(&table), Vec::new())
}

fn load_sweep(input: &Path) -> Result<SweepDataset, CliError> {
    if input.is_dir() {
        Ok(SweepDataset::load_dir(input)?)
    } else {
        Ok(sweep_from_csv(&read_input(input)?)?)
    }
}

fn estimate(a: &EstimateArgs) -> Result<(), CliError> {
    let (p, q) = parse_port_pair(&a.ref_ports, "--ref-ports")?;
    let dataset = load_sweep(&a.input)?;
    let grid = dataset.frequency_grid()?;
    let ports = dataset.port_count().unwrap_or(0);
    if p > ports || q > ports {
        return Err(Error::Index(format!("--ref-ports {p},{q} outside 1..={ports}")).into());
    }
    let (pi, qi) = (p - 1, q - 1);
    let column = |fi: usize, r: usize, c: usize| -> Vec<Complex64> {
        dataset.stir_states.iter().map(|s| s.records[fi].s[(r, c)]).collect()
    };
    let dim = a.dim.map(|d| d as usize);
    let mut csv = String::from(
        "freq_hz,rho_hat,rho_hat_half_width,rho_normalized,rho_normalized_half_width,var_pp,var_qq,var_pq,predicted_var_pq,rel_residual\n",
    );
    let opt = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
    for (fi, f) in grid.iter().enumerate() {
        let est = estimate_coupling(&column(fi, pi, pi), &column(fi, qi, qi), &column(fi, pi, qi), dim)?;
        let _ = writeln!(
            csv,
            "{f:e},{:e},{},{},{},{:e},{:e},{:e},{:e},{}",
            est.rho.raw,
            opt(est.rho.raw_half_width()),
            opt(est.rho.normalized),
            opt(est.rho.normalized_half_width()),
            est.var_pp,
            est.var_qq,
            est.var_pq,
            est.predicted_var_pq,
            opt(est.rel_residual),
        );
    }
    let mut warnings = Vec::new();
    if dim.is_none() {
        warnings.push("rho_hat is sqrt(var S_pq) and absorbs 1/sqrt(N); pass --dim to normalise".into());
    }
    emit_csv("estimate", a, a.out.as_deref(), csv, warnings)
}

fn synthesize(a: &SynthesizeArgs) -> Result<(), CliError> {
    let config = a.ensemble.config()?;
    let ports = a.ports.ports as usize;
    if ports > crate::ingest::MAX_PORTS {
        return Err(Error::Unsupported(format!(
            "Touchstone output for {ports} ports (at most {})",
            crate::ingest::MAX_PORTS
        ))
        .into());
    }
    if !(a.f_start > 0.0 && a.f_stop >= a.f_start) {
        return Err(Error::Config(format!(
            "--f-start/--f-stop must satisfy 0 < start <= stop, got {} and {}",
            a.f_start, a.f_stop
        ))
        .into());
    }
    let k = a.freqs as usize;
    if k > 1 && a.f_stop == a.f_start {
        return Err(Error::Config("--f-stop must exceed --f-start for more than one frequency".into()).into());
    }
    let root = SeedStream::new(a.ensemble.seed);
    let forms = a.ports.build(config.dimension, &root)?;
    let grid = linear_ramp(a.f_start, a.f_stop, k);
    let rho = linear_ramp(config.rho, a.rho_end.unwrap_or(config.rho), k);
    let dataset = synthesize_sweep(
        &config,
        &forms,
        a.stirs as usize,
        &grid,
        Some(&rho),
        &root.child(tags::SWEEP),
    )?;
    std::fs::create_dir_all(&a.out).map_err(|e| {
        CliError::from(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", a.out.display()),
        )))
    })?;
    let options = TouchstoneOptions {
        unit: FrequencyUnit::Hz,
        format: DataFormat::Ri,
        reference: 50.0,
    };
    let mut outputs = Outputs::new("synthesize", a);
    for state in &dataset.stir_states {
        let text = serialize_touchstone(&state.records, &options)?;
        outputs.add(a.out.join(format!("{}.s{ports}p", state.label)), text.into_bytes());
    }
    outputs.add(a.out.join("sweep.csv"), sweep_to_csv(&dataset).into_bytes());
    outputs.write(&a.out.join(MANIFEST_NAME))
}

fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let (p, q) = parse_port_pair(&a.ports, "--ports")?;
    let dataset = SweepDataset::load_dir(&a.dir)?;
    let curve = variance_curve_ports(&dataset, p, q)?;
    let mut warnings = Vec::new();
    if curve.low_confidence {
        warnings.push(format!(
            "only {} stir states: variances and residuals are low-confidence",
            curve.stir_count
        ));
    }
    emit_csv("analyze-touchstone", a, a.out.as_deref(), curve.to_csv(), warnings)
}
