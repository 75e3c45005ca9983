//! Isotropic stochastic unit vectors on real and complex spheres.
//!
//! Sampling normalises a vector of i.i.d. standard normals, which is uniform on
//! the sphere by rotation invariance of the Gaussian law. A complex vector in
//! `C^N` is a real vector in `R^{2N}` read as `N` (re, im) pairs.
//!
//! The closed forms here describe a single cartesian component `x_k` of a
//! uniform unit vector in `R^n`: its density, its first four moments and the
//! joint density of several components.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{ordered_fold, ordered_map, SeedStream};

#[derive(Debug, Clone, PartialEq)]
pub struct RealUnitVector(Vec<f64>);

impl RealUnitVector {
    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexUnitVector(Vec<Complex64>);

impl ComplexUnitVector {
    pub fn components(&self) -> &[Complex64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// Hermitian norm `sqrt(sum |z_k|^2)`.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicSampleConfig {
    pub dimension: usize,
    pub field: Field,
    pub seed: u64,
    pub sample_count: u64,
}

impl IsotropicSampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidDimension("dimension must be >= 1".into()));
        }
        if self.sample_count == 0 {
            return Err(Error::Config("sample_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitVector {
    Real(RealUnitVector),
    Complex(ComplexUnitVector),
}

impl UnitVector {
    /// Components as complex numbers; real vectors get zero imaginary parts.
    pub fn to_complex(&self) -> Vec<Complex64> {
        match self {
            UnitVector::Real(v) => v.0.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            UnitVector::Complex(v) => v.0.clone(),
        }
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidDimension("sphere dimension must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn gaussians<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn sample_real_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<RealUnitVector> {
    check_dimension(n)?;
    loop {
        let mut g = gaussians(n, rng);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            g.iter_mut().for_each(|x| *x /= norm);
            return Ok(RealUnitVector(g));
        }
    }
}

pub fn sample_complex_unit_vector<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<ComplexUnitVector> {
    check_dimension(n)?;
    let flat = sample_real_unit_vector(2 * n, rng)?;
    Ok(ComplexUnitVector(
        flat.0
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect(),
    ))
}

/// Draws the first `take` components of a uniform unit vector in `R^n`.
///
/// The squared norm of the `n - take` unseen Gaussians is drawn as a single
/// chi-square variate, so the result has exactly the joint law of those
/// components while costing `O(take)` instead of `O(n)`.
#[derive(Debug, Clone, Copy)]
pub struct PrefixSampler {
    take: usize,
    tail: Option<ChiSquared<f64>>,
}

impl PrefixSampler {
    pub fn new(n: usize, take: usize) -> Result<Self> {
        check_dimension(n)?;
        if take > n {
            return Err(Error::InvalidDimension(format!(
                "cannot take {take} components of a vector in dimension {n}"
            )));
        }
        let tail = (take < n)
            .then(|| ChiSquared::new((n - take) as f64).expect("positive degrees of freedom"));
        Ok(Self { take, tail })
    }

    pub fn take(&self) -> usize {
        self.take
    }

    /// Fills `out` (length `take`) with one draw.
    pub fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        assert_eq!(out.len(), self.take, "prefix buffer length");
        loop {
            for x in out.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let rest = self.tail.map_or(0.0, |d| d.sample(rng));
            let norm = (out.iter().map(|x| x * x).sum::<f64>() + rest).sqrt();
            if norm > 0.0 {
                out.iter_mut().for_each(|x| *x /= norm);
                return;
            }
        }
    }
}

/// The first `take` components of a uniform unit vector in `R^n`; see [`PrefixSampler`].
pub fn sample_real_prefix<R: Rng + ?Sized>(n: usize, take: usize, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = PrefixSampler::new(n, take)?;
    let mut out = vec![0.0; take];
    sampler.fill(&mut out, rng);
    Ok(out)
}

/// The first `take` components of a uniform unit vector in `C^n`.
pub fn sample_complex_prefix<R: Rng + ?Sized>(
    n: usize,
    take: usize,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if take > n {
        return Err(Error::InvalidDimension(format!(
            "cannot take {take} components of a vector in dimension {n}"
        )));
    }
    let flat = sample_real_prefix(2 * n, 2 * take, rng)?;
    Ok(flat
        .chunks_exact(2)
        .map(|p| Complex64::new(p[0], p[1]))
        .collect())
}

/// Draws `config.sample_count` vectors; sample `i` uses substream `i`.
pub fn isotropic_samples(config: &IsotropicSampleConfig) -> Result<Vec<UnitVector>> {
    config.validate()?;
    let stream = SeedStream::new(config.seed);
    let n = config.dimension;
    let field = config.field;
    Ok(ordered_map(config.sample_count, |i| {
        let mut rng = stream.rng(i);
        match field {
            Field::Real => UnitVector::Real(sample_real_unit_vector(n, &mut rng).expect("n >= 1")),
            Field::Complex => {
                UnitVector::Complex(sample_complex_unit_vector(n, &mut rng).expect("n >= 1"))
            }
        }
    }))
}

/// `ln(|S^{n-m-1}| / |S^{n-1}|) = lnG(n/2) - (m/2) ln(pi) - lnG((n-m)/2)`.
fn ln_sphere_area_ratio(n: usize, m: usize) -> f64 {
    ln_gamma(n as f64 / 2.0)
        - 0.5 * m as f64 * std::f64::consts::PI.ln()
        - ln_gamma((n - m) as f64 / 2.0)
}

/// `(1 - s)^e` with the boundary `s = 1` mapped to `1`, `0` or `+inf` by the sign of `e`.
fn boundary_power(one_minus: f64, exponent: f64) -> f64 {
    if one_minus > 0.0 {
        (exponent * one_minus.ln()).exp()
    } else if exponent == 0.0 {
        1.0
    } else if exponent > 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Density of one cartesian component of a uniform unit vector in `R^n`:
/// `p(z) = (1 - z^2)^{(n-3)/2} G(n/2) / (sqrt(pi) G((n-1)/2))`.
///
/// For `n = 2` the density diverges at `|z| = 1`, where `+inf` is returned.
pub fn marginal_pdf(z: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "marginal density needs n >= 2, got {n}"
        )));
    }
    if !(-1.0..=1.0).contains(&z) {
        return Err(Error::Domain(format!("component value {z} outside [-1, 1]")));
    }
    let prefactor = ln_sphere_area_ratio(n, 1).exp();
    Ok(prefactor * boundary_power(1.0 - z * z, (n as f64 - 3.0) / 2.0))
}

/// Moments `E x_k^p` of a cartesian component for `p` in `1..=4`.
pub fn moment(n: usize, order: u32) -> Result<f64> {
    check_dimension(n)?;
    let nf = n as f64;
    match order {
        1 | 3 => Ok(0.0),
        2 => Ok(1.0 / nf),
        4 => Ok(3.0 / (nf * (nf + 2.0))),
        other => Err(Error::UnsupportedOrder(other)),
    }
}

/// Exact `E(x^2 y^2)` for two distinct cartesian components, `1 / (n (n + 2))`.
pub fn cross_square_moment(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "two distinct components need n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    Ok(1.0 / (nf * (nf + 2.0)))
}

fn check_marginal(values: &[f64], n: usize) -> Result<f64> {
    let m = values.len();
    if m == 0 {
        return Err(Error::InvalidMarginal("need at least one component".into()));
    }
    if m >= n {
        return Err(Error::InvalidMarginal(format!(
            "{m} components of a vector in dimension {n} (need m < n)"
        )));
    }
    if let Some(x) = values.iter().find(|x| !(-1.0..=1.0).contains(*x)) {
        return Err(Error::Domain(format!("component value {x} outside [-1, 1]")));
    }
    let s: f64 = values.iter().map(|x| x * x).sum();
    if s > 1.0 {
        return Err(Error::Domain(format!("sum of squares {s} exceeds 1")));
    }
    Ok(s)
}

/// Joint density of `m = values.len()` cartesian components in `R^n`:
/// `|S^{n-m-1}| / |S^{n-1}| * (1 - sum x_k^2)^{(n-m-2)/2}` on the unit ball of `R^m`.
pub fn joint_marginal_pdf(values: &[f64], n: usize) -> Result<f64> {
    let s = check_marginal(values, n)?;
    let m = values.len();
    let prefactor = ln_sphere_area_ratio(n, m).exp();
    Ok(prefactor * boundary_power(1.0 - s, (n as f64 - m as f64 - 2.0) / 2.0))
}

/// Product-form variant `|S^{n-m-1}| / |S^{n-1}| * prod_k (1 - x_k^2)^{(n-k-3)/2}`,
/// with `values[k]` taking exponent `(n - k - 3) / 2`.
///
/// Identical to [`joint_marginal_pdf`] for a single component. For `m >= 2` it is
/// not a density of the cartesian components (it does not integrate to one over
/// the ball); it is kept for comparison against the exact form.
pub fn factorized_joint_pdf(values: &[f64], n: usize) -> Result<f64> {
    check_marginal(values, n)?;
    let m = values.len();
    let prefactor = ln_sphere_area_ratio(n, m).exp();
    Ok(values.iter().enumerate().fold(prefactor, |acc, (k, x)| {
        acc * boundary_power(1.0 - x * x, (n as f64 - k as f64 - 3.0) / 2.0)
    }))
}

/// Kolmogorov-Smirnov distance between sampled values of one cartesian
/// component (unscaled) and the normal law `N(0, 1/n)`.
///
/// Components are drawn with [`sample_real_prefix`], so `n` may be very large.
pub fn gaussian_limit_distance(n: usize, sample_count: usize, stream: &SeedStream) -> Result<f64> {
    check_dimension(n)?;
    if sample_count == 0 {
        return Err(Error::InsufficientData("need at least one sample".into()));
    }
    let mut xs: Vec<f64> = ordered_map(sample_count as u64, |i| {
        sample_real_prefix(n, 1, &mut stream.rng(i)).expect("valid prefix")[0]
    });
    xs.sort_by(f64::total_cmp);
    let sigma = (1.0 / n as f64).sqrt();
    let m = xs.len() as f64;
    let d = xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let cdf = 0.5 * erfc(-x / (sigma * std::f64::consts::SQRT_2));
        let hi = (i + 1) as f64 / m - cdf;
        let lo = cdf - i as f64 / m;
        d.max(hi).max(lo)
    });
    Ok(d)
}

/// Monte Carlo mean of `f(component)` over sampled vectors; used by diagnostics.
pub fn mean_over_real_samples<F>(n: usize, sample_count: u64, stream: &SeedStream, f: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (sum, sum2) = ordered_fold(
        sample_count,
        || (0.0f64, 0.0f64),
        |acc, i| {
            let v = sample_real_unit_vector(n, &mut stream.rng(i)).expect("n >= 1");
            let y = f(v.components());
            acc.0 += y;
            acc.1 += y * y;
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
        },
    );
    let m = sample_count as f64;
    let mean = sum / m;
    let var = (sum2 / m - mean * mean).max(0.0) * m / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}
