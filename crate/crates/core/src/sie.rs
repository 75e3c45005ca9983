//! Spectrally isotropic random scattering matrices.
//!
//! A sample is `S = sum_l s_l v_l v_l^T` with independent isotropic complex
//! unit vectors `v_l` and independent zero-mean multipliers `E|s_l|^2 = rho^2`.
//! The outer product uses the plain transpose, so every sample is exactly
//! complex symmetric. Unitarity is not imposed.

use std::f64::consts::TAU;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::rng::{ordered_fold, SeedStream};
use crate::sphere::{sample_complex_prefix, sample_complex_unit_vector};
use crate::stats::{ComplexAccumulator, CovarianceAccumulator};

/// Law of the spectral multipliers `s_l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenvalueLaw {
    /// `s = rho * exp(i phi)`, `phi` uniform on `[0, 2 pi)`.
    FixedModulusUniformPhase,
    /// Circular complex Gaussian with `E|s|^2 = rho^2`.
    ComplexGaussian,
}

/// How the rank-one directions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorMode {
    /// Mutually independent isotropic unit vectors.
    IndependentIsotropic,
    /// Columns of one Haar-random unitary matrix (orthonormal directions).
    OrthonormalFrame,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SieConfig {
    pub dimension: usize,
    pub rho: f64,
    pub eigenvalue_law: EigenvalueLaw,
    pub term_count: usize,
    pub vector_mode: VectorMode,
}

impl SieConfig {
    /// Default ensemble: `term_count = N`, fixed-modulus multipliers, independent vectors.
    pub fn new(dimension: usize, rho: f64) -> Self {
        Self {
            dimension,
            rho,
            eigenvalue_law: EigenvalueLaw::FixedModulusUniformPhase,
            term_count: dimension,
            vector_mode: VectorMode::IndependentIsotropic,
        }
    }

    pub fn with_law(mut self, law: EigenvalueLaw) -> Self {
        self.eigenvalue_law = law;
        self
    }

    pub fn with_mode(mut self, mode: VectorMode) -> Self {
        self.vector_mode = mode;
        self
    }

    pub fn with_terms(mut self, term_count: usize) -> Self {
        self.term_count = term_count;
        self
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        if self.term_count == 0 {
            return Err(Error::Config("term_count must be >= 1".into()));
        }
        if self.vector_mode == VectorMode::OrthonormalFrame && self.term_count > self.dimension {
            return Err(Error::Config(format!(
                "orthonormal frame has only {} directions, term_count is {}",
                self.dimension, self.term_count
            )));
        }
        Ok(())
    }

    /// Second-moment prediction `(d_km d_ln + d_kn d_lm) rho^2 / N` for 1-based indices.
    pub fn predicted_covariance(&self, q: Quadruple) -> f64 {
        let d = |a: usize, b: usize| (a == b) as u8 as f64;
        (d(q.k, q.m) * d(q.l, q.n) + d(q.k, q.n) * d(q.l, q.m)) * self.rho * self.rho
            / self.dimension as f64
    }
}

/// Random scattering matrix of the fluctuating environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringMatrix(ComplexMatrix);

impl ScatteringMatrix {
    pub fn new(matrix: ComplexMatrix) -> Self {
        Self(matrix)
    }

    pub fn dimension(&self) -> usize {
        self.0.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0.get(row, col)
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }
}

/// The rank-one decomposition behind one sample: multipliers and directions (one per row).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    multipliers: Vec<Complex64>,
    vectors: Array2<Complex64>,
}

impl SpectralSample {
    /// Assembles a sample from explicit parts; `vectors` holds one direction per row.
    pub fn from_parts(multipliers: Vec<Complex64>, vectors: Array2<Complex64>) -> Result<Self> {
        if multipliers.len() != vectors.nrows() {
            return Err(Error::Shape(format!(
                "{} multipliers for {} vectors",
                multipliers.len(),
                vectors.nrows()
            )));
        }
        Ok(Self {
            multipliers,
            vectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn multipliers(&self) -> &[Complex64] {
        &self.multipliers
    }

    pub fn vectors(&self) -> ArrayView2<'_, Complex64> {
        self.vectors.view()
    }

    /// `S_kl = sum_l s v_k v_l` for 0-based `(k, l)`.
    pub fn entry(&self, k: usize, l: usize) -> Complex64 {
        self.multipliers
            .iter()
            .zip(self.vectors.rows())
            .map(|(s, v)| s * v[k] * v[l])
            .sum()
    }

    pub fn to_matrix(&self) -> ScatteringMatrix {
        let n = self.dimension();
        let mut data = Array2::<Complex64>::zeros((n, n));
        for (s, v) in self.multipliers.iter().zip(self.vectors.rows()) {
            for k in 0..n {
                let sv = s * v[k];
                for l in k..n {
                    data[(k, l)] += sv * v[l];
                }
            }
        }
        ScatteringMatrix(
            ComplexMatrix::symmetrized_from_upper(data).expect("square by construction"),
        )
    }

    /// `L S L^T` evaluated term by term as `sum_l s (L v)(L v)^T`.
    pub fn project(&self, forms: ArrayView2<'_, Complex64>) -> Result<Array2<Complex64>> {
        let (p, n) = forms.dim();
        if n != self.dimension() {
            return Err(Error::Shape(format!(
                "port forms act on dimension {n}, scattering matrix has dimension {}",
                self.dimension()
            )));
        }
        let mut out = Array2::<Complex64>::zeros((p, p));
        let mut w = vec![Complex64::new(0.0, 0.0); p];
        for (s, v) in self.multipliers.iter().zip(self.vectors.rows()) {
            for (wp, row) in w.iter_mut().zip(forms.rows()) {
                *wp = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            }
            for a in 0..p {
                let sw = s * w[a];
                for b in a..p {
                    out[(a, b)] += sw * w[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                out[(a, b)] = out[(b, a)];
            }
        }
        Ok(out)
    }
}

pub(crate) fn sample_multiplier<R: Rng + ?Sized>(law: EigenvalueLaw, rho: f64, rng: &mut R) -> Complex64 {
    match law {
        EigenvalueLaw::FixedModulusUniformPhase => {
            Complex64::from_polar(rho, rng.random::<f64>() * TAU)
        }
        EigenvalueLaw::ComplexGaussian => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * (rho / std::f64::consts::SQRT_2)
        }
    }
}

/// Haar-random unitary via modified Gram-Schmidt on a complex Ginibre matrix; columns returned as rows.
fn haar_frame<R: Rng + ?Sized>(n: usize, take: usize, rng: &mut R) -> Array2<Complex64> {
    let mut rows = Array2::<Complex64>::zeros((n, n));
    for x in rows.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *x = Complex64::new(re, im);
    }
    for i in 0..n {
        // Two passes keep the frame orthonormal to machine precision.
        for _ in 0..2 {
            for j in 0..i {
                let proj: Complex64 = (0..n).map(|k| rows[(i, k)] * rows[(j, k)].conj()).sum();
                for k in 0..n {
                    let r = rows[(j, k)];
                    rows[(i, k)] -= proj * r;
                }
            }
        }
        let norm = (0..n).map(|k| rows[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for k in 0..n {
            rows[(i, k)] /= norm;
        }
    }
    rows.slice(ndarray::s![..take, ..]).to_owned()
}

pub fn sample_spectral<R: Rng + ?Sized>(config: &SieConfig, rng: &mut R) -> Result<SpectralSample> {
    config.validate()?;
    let (n, t) = (config.dimension, config.term_count);
    let multipliers: Vec<Complex64> = (0..t)
        .map(|_| sample_multiplier(config.eigenvalue_law, config.rho, rng))
        .collect();
    let vectors = match config.vector_mode {
        VectorMode::IndependentIsotropic => {
            let mut vs = Array2::<Complex64>::zeros((t, n));
            for mut row in vs.rows_mut() {
                let v = sample_complex_unit_vector(n, rng)?;
                row.iter_mut()
                    .zip(v.components())
                    .for_each(|(dst, src)| *dst = *src);
            }
            vs
        }
        VectorMode::OrthonormalFrame => haar_frame(n, t, rng),
    };
    Ok(SpectralSample {
        multipliers,
        vectors,
    })
}

pub fn sample_sie<R: Rng + ?Sized>(config: &SieConfig, rng: &mut R) -> Result<ScatteringMatrix> {
    Ok(sample_spectral(config, rng)?.to_matrix())
}

/// Leading `size x size` block of a sample.
///
/// In independent-vector mode only the first `size` components of each direction
/// are drawn (see [`sample_complex_prefix`]), which has exactly the law of the
/// same block of a full sample.
pub fn sample_leading_block<R: Rng + ?Sized>(
    config: &SieConfig,
    size: usize,
    rng: &mut R,
) -> Result<Array2<Complex64>> {
    config.validate()?;
    if size == 0 || size > config.dimension {
        return Err(Error::Index(format!(
            "block size {size} outside 1..={}",
            config.dimension
        )));
    }
    match config.vector_mode {
        VectorMode::IndependentIsotropic => {
            let mut block = Array2::<Complex64>::zeros((size, size));
            for _ in 0..config.term_count {
                let s = sample_multiplier(config.eigenvalue_law, config.rho, rng);
                let v = sample_complex_prefix(config.dimension, size, rng)?;
                for k in 0..size {
                    let sv = s * v[k];
                    for l in k..size {
                        block[(k, l)] += sv * v[l];
                    }
                }
            }
            for k in 0..size {
                for l in 0..k {
                    block[(k, l)] = block[(l, k)];
                }
            }
            Ok(block)
        }
        VectorMode::OrthonormalFrame => {
            let full = sample_sie(config, rng)?.into_matrix().into_array();
            Ok(full.slice(ndarray::s![..size, ..size]).to_owned())
        }
    }
}

/// Index quadruple `(k, l, m, n)` for `E(S_kl conj(S_mn))`, 1-based as in `S_12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quadruple {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub n: usize,
}

impl Quadruple {
    pub fn new(k: usize, l: usize, m: usize, n: usize) -> Self {
        Self { k, l, m, n }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        for idx in [self.k, self.l, self.m, self.n] {
            if idx == 0 || idx > dim {
                return Err(Error::Index(format!(
                    "index {idx} in {self} outside 1..={dim}"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for Quadruple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.k, self.l, self.m, self.n)
    }
}

impl std::str::FromStr for Quadruple {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Config(format!(
                "quadruple '{s}' must have four comma-separated indices"
            )));
        }
        let mut idx = [0usize; 4];
        for (dst, p) in idx.iter_mut().zip(&parts) {
            *dst = p
                .parse()
                .map_err(|_| Error::Config(format!("bad index '{p}' in quadruple '{s}'")))?;
        }
        Ok(Quadruple::new(idx[0], idx[1], idx[2], idx[3]))
    }
}

/// Parses `"1,2,1,2;1,1,1,1"` into quadruples.
pub fn parse_quadruple_list(s: &str) -> Result<Vec<Quadruple>> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrupleMoment {
    pub quadruple: Quadruple,
    pub empirical: Complex64,
    pub predicted: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct MomentReport {
    pub sample_count: u64,
    pub mean: Array2<Complex64>,
    pub mean_stderr: Array2<f64>,
    pub variance: Array2<f64>,
    pub variance_stderr: Array2<f64>,
    pub quadruples: Vec<QuadrupleMoment>,
}

struct MomentState {
    entries: Vec<ComplexAccumulator>,
    quads: Vec<CovarianceAccumulator>,
}

/// Accumulates entry means, variances and the requested cross moments over an ensemble.
pub fn moments_from_matrices<'a, I>(
    dimension: usize,
    matrices: I,
    quadruples: &[Quadruple],
    predict: impl Fn(Quadruple) -> f64,
) -> Result<MomentReport>
where
    I: IntoIterator<Item = &'a Array2<Complex64>>,
{
    for q in quadruples {
        q.validate(dimension)?;
    }
    let mut state = MomentState {
        entries: vec![ComplexAccumulator::new(); dimension * dimension],
        quads: vec![CovarianceAccumulator::new(); quadruples.len()],
    };
    for m in matrices {
        if m.dim() != (dimension, dimension) {
            return Err(Error::Shape(format!(
                "matrix of shape {:?} in a dimension-{dimension} ensemble",
                m.dim()
            )));
        }
        push_moments(&mut state, m, quadruples);
    }
    finish_report(dimension, state, quadruples, predict)
}

fn push_moments(state: &mut MomentState, s: &Array2<Complex64>, quadruples: &[Quadruple]) {
    let n = s.nrows();
    for k in 0..n {
        for l in k..n {
            state.entries[k * n + l].push(s[(k, l)]);
        }
    }
    for (acc, q) in state.quads.iter_mut().zip(quadruples) {
        acc.push(s[(q.k - 1, q.l - 1)], s[(q.m - 1, q.n - 1)]);
    }
}

fn finish_report(
    n: usize,
    state: MomentState,
    quadruples: &[Quadruple],
    predict: impl Fn(Quadruple) -> f64,
) -> Result<MomentReport> {
    let mut mean = Array2::zeros((n, n));
    let mut mean_stderr = Array2::zeros((n, n));
    let mut variance = Array2::zeros((n, n));
    let mut variance_stderr = Array2::zeros((n, n));
    let count = state.entries[0].count();
    if count < 2 {
        return Err(Error::InsufficientData(format!(
            "moments need at least 2 samples, got {count}"
        )));
    }
    for k in 0..n {
        for l in k..n {
            let acc = &state.entries[k * n + l];
            for (a, b) in [(k, l), (l, k)] {
                mean[(a, b)] = acc.mean();
                mean_stderr[(a, b)] = acc.mean_stderr();
                variance[(a, b)] = acc.variance();
                variance_stderr[(a, b)] = acc.variance_stderr();
            }
        }
    }
    let quadruples = quadruples
        .iter()
        .zip(&state.quads)
        .map(|(&q, acc)| QuadrupleMoment {
            quadruple: q,
            empirical: acc.covariance(),
            predicted: predict(q),
            stderr: acc.stderr(),
        })
        .collect();
    Ok(MomentReport {
        sample_count: count,
        mean,
        mean_stderr,
        variance,
        variance_stderr,
        quadruples,
    })
}

/// Monte Carlo first and second moments of the ensemble; sample `i` uses substream `i`.
pub fn empirical_moments(
    config: &SieConfig,
    sample_count: u64,
    quadruples: &[Quadruple],
    stream: &SeedStream,
) -> Result<MomentReport> {
    config.validate()?;
    if sample_count < 100 {
        return Err(Error::InsufficientData(format!(
            "empirical moments need at least 100 samples, got {sample_count}"
        )));
    }
    let n = config.dimension;
    for q in quadruples {
        q.validate(n)?;
    }
    let state = ordered_fold(
        sample_count,
        || MomentState {
            entries: vec![ComplexAccumulator::new(); n * n],
            quads: vec![CovarianceAccumulator::new(); quadruples.len()],
        },
        |st, i| {
            let s = sample_sie(config, &mut stream.rng(i)).expect("validated config");
            push_moments(st, s.matrix().as_array(), quadruples);
        },
        |a, b| {
            a.entries
                .iter_mut()
                .zip(&b.entries)
                .for_each(|(x, y)| x.merge(y));
            a.quads.iter_mut().zip(&b.quads).for_each(|(x, y)| x.merge(y));
        },
    );
    finish_report(n, state, quadruples, |q| config.predicted_covariance(q))
}

/// Diagonal-to-off-diagonal variance ratio `var(S_11) / var(S_12)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRatio {
    pub ratio: f64,
    pub stderr: f64,
    pub var_diagonal: f64,
    pub var_off_diagonal: f64,
}

pub fn variance_ratio(config: &SieConfig, sample_count: u64, stream: &SeedStream) -> Result<VarianceRatio> {
    config.validate()?;
    if config.dimension < 2 {
        return Err(Error::InvalidDimension(
            "variance ratio needs an off-diagonal entry (N >= 2)".into(),
        ));
    }
    if sample_count < 2 {
        return Err(Error::InsufficientData("need at least 2 samples".into()));
    }
    let (diag, off) = ordered_fold(
        sample_count,
        || (ComplexAccumulator::new(), ComplexAccumulator::new()),
        |acc, i| {
            let b = sample_leading_block(config, 2, &mut stream.rng(i)).expect("validated");
            acc.0.push(b[(0, 0)]);
            acc.1.push(b[(0, 1)]);
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        },
    );
    let (v11, v12) = (diag.variance(), off.variance());
    if v11 <= 0.0 || v12 <= 0.0 {
        return Err(Error::DegenerateEnsemble(
            "zero variance in S_11 or S_12".into(),
        ));
    }
    let ratio = v11 / v12;
    let rel = ((diag.variance_stderr() / v11).powi(2) + (off.variance_stderr() / v12).powi(2)).sqrt();
    Ok(VarianceRatio {
        ratio,
        stderr: ratio * rel,
        var_diagonal: v11,
        var_off_diagonal: v12,
    })
}
