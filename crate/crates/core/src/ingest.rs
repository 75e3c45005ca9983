//! Touchstone 1.0 S-parameter files, stir-state sweep datasets and per-frequency variance curves.
//!
//! Two-port data lines use the Touchstone 1.0 column order `S11 S21 S12 S22`;
//! three- and four-port files put one matrix row per line, row-major.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::multiport::PortForms;
use crate::rng::{ordered_map, SeedStream};
use crate::sie::{sample_spectral, SieConfig};
use crate::stats::ComplexAccumulator;

/// Largest port count accepted by the parser and serializer.
pub const MAX_PORTS: usize = 4;

/// Magnitude written as this many dB when a DB-format entry is exactly zero.
pub const DB_FLOOR: f64 = -400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyUnit {
    Hz,
    KHz,
    MHz,
    GHz,
}

impl FrequencyUnit {
    pub fn scale(self) -> f64 {
        match self {
            FrequencyUnit::Hz => 1.0,
            FrequencyUnit::KHz => 1e3,
            FrequencyUnit::MHz => 1e6,
            FrequencyUnit::GHz => 1e9,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FrequencyUnit::Hz => "HZ",
            FrequencyUnit::KHz => "KHZ",
            FrequencyUnit::MHz => "MHZ",
            FrequencyUnit::GHz => "GHZ",
        }
    }

    fn parse(token: &str) -> Option<Self> {
        match token.to_ascii_uppercase().as_str() {
            "HZ" => Some(FrequencyUnit::Hz),
            "KHZ" => Some(FrequencyUnit::KHz),
            "MHZ" => Some(FrequencyUnit::MHz),
            "GHZ" => Some(FrequencyUnit::GHz),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Real, imaginary.
    Ri,
    /// Magnitude, angle in degrees.
    Ma,
    /// `20 log10` magnitude, angle in degrees.
    Db,
}

impl DataFormat {
    pub fn label(self) -> &'static str {
        match self {
            DataFormat::Ri => "RI",
            DataFormat::Ma => "MA",
            DataFormat::Db => "DB",
        }
    }

    fn parse(token: &str) -> Option<Self> {
        match token.to_ascii_uppercase().as_str() {
            "RI" => Some(DataFormat::Ri),
            "MA" => Some(DataFormat::Ma),
            "DB" => Some(DataFormat::Db),
            _ => None,
        }
    }

    fn decode(self, a: f64, b: f64) -> Complex64 {
        match self {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        }
    }

    fn encode(self, z: Complex64) -> (f64, f64) {
        match self {
            DataFormat::Ri => (z.re, z.im),
            DataFormat::Ma => (z.norm(), z.arg().to_degrees()),
            DataFormat::Db => {
                let mag = z.norm();
                let db = if mag > 0.0 {
                    (20.0 * mag.log10()).max(DB_FLOOR)
                } else {
                    DB_FLOOR
                };
                (db, z.arg().to_degrees())
            }
        }
    }
}

/// The `#` option line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchstoneOptions {
    pub unit: FrequencyUnit,
    pub format: DataFormat,
    pub reference: f64,
}

impl Default for TouchstoneOptions {
    fn default() -> Self {
        Self {
            unit: FrequencyUnit::GHz,
            format: DataFormat::Ma,
            reference: 50.0,
        }
    }
}

/// One frequency point: `P x P` S-matrix at `frequency` hertz.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRecord {
    pub frequency: f64,
    pub s: Array2<Complex64>,
    pub reference_impedance: f64,
}

impl NetworkRecord {
    pub fn port_count(&self) -> usize {
        self.s.nrows()
    }
}

/// Port count from a `.sNp` extension.
pub fn ports_from_filename(name: &str) -> Option<usize> {
    let ext = Path::new(name).extension()?.to_str()?.to_ascii_lowercase();
    let digits = ext.strip_prefix('s')?.strip_suffix('p')?;
    digits.parse().ok().filter(|&p| p >= 1)
}

fn parse_options(body: &str, line: usize) -> Result<TouchstoneOptions> {
    let mut opts = TouchstoneOptions::default();
    let mut tokens = body.split_whitespace();
    while let Some(tok) = tokens.next() {
        if let Some(unit) = FrequencyUnit::parse(tok) {
            opts.unit = unit;
        } else if let Some(format) = DataFormat::parse(tok) {
            opts.format = format;
        } else if tok.eq_ignore_ascii_case("S") {
        } else if ["Y", "Z", "H", "G"].iter().any(|p| tok.eq_ignore_ascii_case(p)) {
            return Err(Error::parse(
                line,
                format!("only S parameters are supported, option line declares {tok}"),
            ));
        } else if tok.eq_ignore_ascii_case("R") {
            let value = tokens
                .next()
                .ok_or_else(|| Error::parse(line, "option R needs a reference impedance"))?;
            let r: f64 = value
                .parse()
                .map_err(|_| Error::parse(line, format!("bad reference impedance '{value}'")))?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::parse(line, format!("reference impedance must be positive, got {r}")));
            }
            opts.reference = r;
        } else {
            return Err(Error::parse(line, format!("unknown option '{tok}'")));
        }
    }
    Ok(opts)
}

fn parse_numbers(tokens: &[&str], line: usize) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line, format!("'{t}' is not a finite number")))
        })
        .collect()
}

/// Parses a Touchstone 1.0 file; the port count comes from the `.sNp` filename hint.
pub fn parse_touchstone(bytes: &[u8], filename: &str) -> Result<Vec<NetworkRecord>> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
        Error::parse(line, "file is not valid UTF-8 text")
    })?;
    let ports = ports_from_filename(filename).ok_or_else(|| {
        Error::Config(format!("cannot infer a port count from '{filename}' (expected .sNp)"))
    })?;
    if ports > MAX_PORTS {
        return Err(Error::Unsupported(format!(
            "{ports}-port files (at most {MAX_PORTS} ports)"
        )));
    }
    parse_touchstone_str(text, ports)
}

/// Parses Touchstone 1.0 text holding `ports`-port data.
pub fn parse_touchstone_str(text: &str, ports: usize) -> Result<Vec<NetworkRecord>> {
    if ports == 0 || ports > MAX_PORTS {
        return Err(Error::Unsupported(format!("{ports}-port data (supported: 1..={MAX_PORTS})")));
    }
    // Values per data line: everything on one line up to two ports, one row per line beyond.
    let (first_len, cont_len, cont_lines) = if ports <= 2 {
        (1 + 2 * ports * ports, 0, 0)
    } else {
        (1 + 2 * ports, 2 * ports, ports - 1)
    };
    let mut options: Option<TouchstoneOptions> = None;
    let mut records = Vec::new();
    let mut pending: Option<(usize, Vec<f64>, usize)> = None;
    let mut last_freq: Option<f64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('!').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            return Err(Error::parse(
                line,
                format!("Touchstone 2.0 keyword '{}' is not supported", content.split_whitespace().next().unwrap_or(content)),
            ));
        }
        if let Some(body) = content.strip_prefix('#') {
            if pending.is_some() {
                return Err(Error::parse(line, "option line inside an unfinished data record"));
            }
            if records.is_empty() && options.is_none() {
                options = Some(parse_options(body, line)?);
            } else if options.is_some() {
                return Err(Error::parse(line, "duplicate option line"));
            } else {
                return Err(Error::parse(line, "option line must precede the data"));
            }
            continue;
        }
        let opts = *options.get_or_insert_with(TouchstoneOptions::default);
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let values = parse_numbers(&tokens, line)?;
        match pending.take() {
            None => {
                if values.len() != first_len {
                    return Err(Error::parse(
                        line,
                        format!(
                            "expected {first_len} values for a {ports}-port record, found {}",
                            values.len()
                        ),
                    ));
                }
                let freq = values[0] * opts.unit.scale();
                if freq <= 0.0 {
                    return Err(Error::parse(line, format!("frequency must be positive, got {}", values[0])));
                }
                if let Some(prev) = last_freq {
                    if freq <= prev {
                        return Err(Error::parse(
                            line,
                            format!("frequencies must increase strictly ({freq} Hz after {prev} Hz)"),
                        ));
                    }
                }
                last_freq = Some(freq);
                if cont_lines == 0 {
                    records.push(build_record(&values, ports, opts));
                } else {
                    pending = Some((line, values, cont_lines));
                }
            }
            Some((start, mut acc, remaining)) => {
                if values.len() != cont_len {
                    return Err(Error::parse(
                        line,
                        format!(
                            "expected {cont_len} values on a continuation line of the record at line {start}, found {}",
                            values.len()
                        ),
                    ));
                }
                acc.extend(values);
                if remaining == 1 {
                    records.push(build_record(&acc, ports, opts));
                } else {
                    pending = Some((start, acc, remaining - 1));
                }
            }
        }
    }
    if let Some((start, _, remaining)) = pending {
        return Err(Error::parse(
            start,
            format!("record is missing {remaining} continuation line(s) at end of file"),
        ));
    }
    Ok(records)
}

fn build_record(values: &[f64], ports: usize, opts: TouchstoneOptions) -> NetworkRecord {
    let mut s = Array2::<Complex64>::zeros((ports, ports));
    for (idx, pair) in values[1..].chunks_exact(2).enumerate() {
        let (row, col) = file_position(idx, ports);
        s[(row, col)] = opts.format.decode(pair[0], pair[1]);
    }
    NetworkRecord {
        frequency: values[0] * opts.unit.scale(),
        s,
        reference_impedance: opts.reference,
    }
}

/// Matrix position of the `idx`-th value pair in a data record.
fn file_position(idx: usize, ports: usize) -> (usize, usize) {
    if ports == 2 {
        // S11 S21 S12 S22
        (idx % 2, idx / 2)
    } else {
        (idx / ports, idx % ports)
    }
}

/// Writes records as Touchstone 1.0 text; frequencies are expressed in `options.unit`.
pub fn serialize_touchstone(records: &[NetworkRecord], options: &TouchstoneOptions) -> Result<String> {
    if let Some(first) = records.first() {
        let p = first.port_count();
        if p == 0 || p > MAX_PORTS {
            return Err(Error::Unsupported(format!("{p}-port data (supported: 1..={MAX_PORTS})")));
        }
        if let Some(bad) = records.iter().find(|r| r.port_count() != p || r.s.ncols() != p) {
            return Err(Error::Shape(format!(
                "mixed port counts: {p} and {}x{}",
                bad.s.nrows(),
                bad.s.ncols()
            )));
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} S {} R {}",
        options.unit.label(),
        options.format.label(),
        options.reference
    );
    for rec in records {
        let p = rec.port_count();
        let _ = write!(out, "{:e}", rec.frequency / options.unit.scale());
        for idx in 0..p * p {
            if p > 2 && idx > 0 && idx % p == 0 {
                out.push('\n');
            }
            let (row, col) = file_position(idx, p);
            let (a, b) = options.format.encode(rec.s[(row, col)]);
            let _ = write!(out, " {a:e} {b:e}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// One stirrer position: a frequency-sorted sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct StirState {
    pub label: String,
    pub records: Vec<NetworkRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepMetadata {
    pub sources: Vec<PathBuf>,
    pub format: Option<DataFormat>,
    pub unit: Option<FrequencyUnit>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepDataset {
    pub stir_states: Vec<StirState>,
    pub metadata: SweepMetadata,
}

impl SweepDataset {
    pub fn from_states(stir_states: Vec<StirState>) -> Self {
        Self {
            stir_states,
            metadata: SweepMetadata::default(),
        }
    }

    pub fn stir_count(&self) -> usize {
        self.stir_states.len()
    }

    pub fn port_count(&self) -> Option<usize> {
        self.stir_states
            .iter()
            .flat_map(|s| s.records.first())
            .map(NetworkRecord::port_count)
            .next()
    }

    /// The common frequency grid, or an alignment error listing every frequency not shared by all states.
    pub fn frequency_grid(&self) -> Result<Vec<f64>> {
        let Some(first) = self.stir_states.first() else {
            return Ok(Vec::new());
        };
        let grid: Vec<f64> = first.records.iter().map(|r| r.frequency).collect();
        let aligned = self.stir_states.iter().all(|s| {
            s.records.len() == grid.len()
                && s.records.iter().zip(&grid).all(|(r, f)| r.frequency.to_bits() == f.to_bits())
        });
        if aligned {
            return Ok(grid);
        }
        let mut all: Vec<f64> = self
            .stir_states
            .iter()
            .flat_map(|s| s.records.iter().map(|r| r.frequency))
            .collect();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|a, b| a.to_bits() == b.to_bits());
        let offending = all
            .into_iter()
            .filter(|f| {
                !self
                    .stir_states
                    .iter()
                    .all(|s| s.records.iter().any(|r| r.frequency.to_bits() == f.to_bits()))
            })
            .collect();
        Err(Error::Alignment(offending))
    }

    /// Loads every `.sNp` file in `dir` as one stir state, ordered by filename.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.file_name()
                        .and_then(|n| n.to_str())
                        .and_then(ports_from_filename)
                        .is_some()
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InsufficientData(format!(
                "no Touchstone files in {}",
                dir.display()
            )));
        }
        let states = files
            .par_iter()
            .map(|path| -> Result<StirState> {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                let bytes = std::fs::read(path)?;
                let records = parse_touchstone(&bytes, name).map_err(|e| match e {
                    Error::Parse { line, message } => Error::Parse {
                        line,
                        message: format!("{}: {message}", path.display()),
                    },
                    other => other,
                })?;
                let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or(name);
                Ok(StirState {
                    label: stem.to_string(),
                    records,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stir_states: states,
            metadata: SweepMetadata {
                sources: files,
                format: None,
                unit: None,
            },
        })
    }
}

/// Stir-state counts at or below this are flagged low-confidence.
pub const LOW_CONFIDENCE_STIRS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    pub frequency: f64,
    pub var_pp: f64,
    pub var_qq: f64,
    pub var_pq: f64,
    pub predicted_var_pq: f64,
    /// `|var_pq - predicted| / var_pq`; absent when `var_pq = 0`.
    pub rel_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    pub rows: Vec<VarianceRow>,
    pub stir_count: usize,
    pub ports: (usize, usize),
    pub low_confidence: bool,
}

pub const VARIANCE_CSV_HEADER: &str = "freq_hz,var_s11,var_s22,var_s12,predicted_var_s12,rel_residual";

impl VarianceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(VARIANCE_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:e},{:e},{:e},{:e},{:e},",
                r.frequency, r.var_pp, r.var_qq, r.var_pq, r.predicted_var_pq
            );
            if let Some(res) = r.rel_residual {
                let _ = write!(out, "{res:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn median_residual(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.rows.iter().filter_map(|r| r.rel_residual).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }
}

/// Per-frequency variances of `S11`, `S22`, `S12` across stir states.
pub fn variance_curve(dataset: &SweepDataset) -> Result<VarianceCurve> {
    variance_curve_ports(dataset, 1, 2)
}

/// As [`variance_curve`] for an arbitrary 1-based port pair.
pub fn variance_curve_ports(dataset: &SweepDataset, p: usize, q: usize) -> Result<VarianceCurve> {
    let m = dataset.stir_count();
    if m == 0 {
        return Err(Error::InsufficientData("variance curves need stir states".into()));
    }
    let grid = dataset.frequency_grid()?;
    let ports = dataset.port_count().unwrap_or(0);
    if dataset
        .stir_states
        .iter()
        .flat_map(|s| &s.records)
        .any(|r| r.port_count() != ports)
    {
        return Err(Error::Shape("stir states have different port counts".into()));
    }
    if p == q || p == 0 || q == 0 || p > ports || q > ports {
        return Err(Error::Index(format!(
            "port pair ({p},{q}) needs two distinct ports in 1..={ports}"
        )));
    }
    let (a, b) = (p - 1, q - 1);
    let rows = (0..grid.len())
        .into_par_iter()
        .map(|fi| {
            let mut acc = [ComplexAccumulator::new(); 3];
            for state in &dataset.stir_states {
                let s = &state.records[fi].s;
                acc[0].push(s[(a, a)]);
                acc[1].push(s[(b, b)]);
                acc[2].push(s[(a, b)]);
            }
            let var = |a: &ComplexAccumulator| if m < 2 { 0.0 } else { a.variance() };
            let (var_pp, var_qq, var_pq) = (var(&acc[0]), var(&acc[1]), var(&acc[2]));
            let predicted_var_pq = 0.5 * (var_pp * var_qq).sqrt();
            VarianceRow {
                frequency: grid[fi],
                var_pp,
                var_qq,
                var_pq,
                predicted_var_pq,
                rel_residual: (var_pq > 0.0).then(|| (var_pq - predicted_var_pq).abs() / var_pq),
            }
        })
        .collect();
    Ok(VarianceCurve {
        rows,
        stir_count: m,
        ports: (p, q),
        low_confidence: m <= LOW_CONFIDENCE_STIRS,
    })
}

/// `count` evenly spaced values from `start` to `end` inclusive.
pub fn linear_ramp(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Synthetic sweep: at every (frequency, stir) pair `A = A0 + dA` with `A0 = 0`
/// and `dA = L S L^T` from an independent ensemble draw.
///
/// `rho_profile`, when given, sets `rho` per frequency. The draw for frequency
/// `f` and stir state `m` uses substream `f * stir_count + m`, so two sweeps that
/// differ only in `rho` are paired draw for draw.
pub fn synthesize_sweep(
    config: &SieConfig,
    forms: &PortForms,
    stir_count: usize,
    frequencies: &[f64],
    rho_profile: Option<&[f64]>,
    stream: &SeedStream,
) -> Result<SweepDataset> {
    config.validate()?;
    if forms.wave_dim() != config.dimension {
        return Err(Error::Shape(format!(
            "port forms act on dimension {}, ensemble has dimension {}",
            forms.wave_dim(),
            config.dimension
        )));
    }
    if stir_count == 0 {
        return Err(Error::Config("stir count must be >= 1".into()));
    }
    if let Some(bad) = frequencies.iter().find(|f| !(**f > 0.0 && f.is_finite())) {
        return Err(Error::Config(format!("frequencies must be positive, got {bad}")));
    }
    if frequencies.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("frequency grid must increase strictly".into()));
    }
    let rhos: Vec<f64> = match rho_profile {
        Some(r) if r.len() != frequencies.len() => {
            return Err(Error::Config(format!(
                "rho profile has {} values for {} frequencies",
                r.len(),
                frequencies.len()
            )))
        }
        Some(r) => r.to_vec(),
        None => vec![config.rho; frequencies.len()],
    };
    let configs = rhos
        .iter()
        .map(|&rho| {
            let c = config.clone().with_rho(rho);
            c.validate().map(|_| c)
        })
        .collect::<Result<Vec<_>>>()?;
    let view = forms.entries();
    let total = (frequencies.len() * stir_count) as u64;
    let draws = ordered_map(total, |i| {
        let fi = i as usize / stir_count;
        let sample = sample_spectral(&configs[fi], &mut stream.rng(i)).expect("validated config");
        sample.project(view).expect("shape checked")
    });
    let width = stir_count.saturating_sub(1).to_string().len().max(4);
    let mut states: Vec<StirState> = (0..stir_count)
        .map(|m| StirState {
            label: format!("stir_{m:0width$}"),
            records: Vec::with_capacity(frequencies.len()),
        })
        .collect();
    for (i, s) in draws.into_iter().enumerate() {
        let (fi, m) = (i / stir_count, i % stir_count);
        states[m].records.push(NetworkRecord {
            frequency: frequencies[fi],
            s,
            reference_impedance: 50.0,
        });
    }
    Ok(SweepDataset::from_states(states))
}

/// Matrix size bound for long-format sweep CSV input.
pub const MAX_CSV_PORTS: usize = 64;

pub const SWEEP_CSV_HEADER: &str = "stir,freq_hz,row,col,re,im";

/// Long-format CSV with one line per matrix entry; rows and columns are 1-based.
pub fn sweep_to_csv(dataset: &SweepDataset) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for (m, state) in dataset.stir_states.iter().enumerate() {
        for rec in &state.records {
            for ((r, c), z) in rec.s.indexed_iter() {
                let _ = writeln!(out, "{m},{:e},{},{},{:e},{:e}", rec.frequency, r + 1, c + 1, z.re, z.im);
            }
        }
    }
    out
}

/// Reads [`sweep_to_csv`] output back into a dataset.
pub fn sweep_from_csv(text: &str) -> Result<SweepDataset> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_CSV_HEADER => {}
        _ => return Err(Error::parse(1, format!("expected header '{SWEEP_CSV_HEADER}'"))),
    }
    let mut entries: Vec<(usize, f64, usize, usize, Complex64, usize)> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::parse(line, format!("expected 6 fields, found {}", fields.len())));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(line, format!("'{s}' is not a nonnegative integer")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line, format!("'{s}' is not a finite number")))
        };
        let (stir, freq, row, col) = (int(fields[0])?, float(fields[1])?, int(fields[2])?, int(fields[3])?);
        if freq <= 0.0 {
            return Err(Error::parse(line, format!("frequency must be positive, got {freq}")));
        }
        if row == 0 || col == 0 || row > MAX_CSV_PORTS || col > MAX_CSV_PORTS {
            return Err(Error::parse(line, format!("row/col ({row},{col}) out of range")));
        }
        entries.push((stir, freq, row, col, Complex64::new(float(fields[4])?, float(fields[5])?), line));
    }
    let ports = entries.iter().map(|e| e.2.max(e.3)).max().unwrap_or(0);
    let stirs = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let mut states: Vec<Vec<(f64, Array2<Complex64>, Vec<bool>)>> = vec![Vec::new(); stirs];
    for (stir, freq, row, col, z, line) in entries {
        let recs = &mut states[stir];
        let pos = match recs.iter().position(|(f, _, _)| f.to_bits() == freq.to_bits()) {
            Some(p) => p,
            None => {
                recs.push((freq, Array2::zeros((ports, ports)), vec![false; ports * ports]));
                recs.len() - 1
            }
        };
        let (_, s, seen) = &mut recs[pos];
        let k = (row - 1) * ports + (col - 1);
        if seen[k] {
            return Err(Error::parse(line, format!("duplicate entry ({row},{col}) for stir {stir} at {freq} Hz")));
        }
        seen[k] = true;
        s[(row - 1, col - 1)] = z;
    }
    let mut out = Vec::with_capacity(stirs);
    for (m, recs) in states.into_iter().enumerate() {
        let mut records = Vec::with_capacity(recs.len());
        for (freq, s, seen) in recs {
            if seen.iter().any(|x| !x) {
                return Err(Error::Shape(format!("stir {m} at {freq} Hz is missing matrix entries")));
            }
            records.push(NetworkRecord {
                frequency: freq,
                s,
                reference_impedance: 50.0,
            });
        }
        records.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        out.push(StirState {
            label: format!("stir_{m}"),
            records,
        });
    }
    Ok(SweepDataset::from_states(out))
}
