//! Streaming statistics for complex samples.
//!
//! Variance follows the complex convention `var(z) = E|z - Ez|^2` (the sum of
//! the real and imaginary part variances) with the unbiased `M - 1` divisor.
//! Accumulators are single-writer; parallel workers combine through [`ComplexAccumulator::merge`].

use num_complex::Complex64;

use crate::error::{Error, Result};

/// One-pass accumulator of the complex mean, variance and fourth central moment.
///
/// Besides `M2 = sum |z - mean|^2` it keeps the pseudo-moment `W2 = sum (z - mean)^2`,
/// the third moment `T3 = sum |z - mean|^2 (z - mean)` and `M4 = sum |z - mean|^4`,
/// which is what an exact pairwise merge of `M4` requires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexAccumulator {
    count: u64,
    mean: Complex64,
    m2: f64,
    w2: Complex64,
    t3: Complex64,
    m4: f64,
}

impl Default for ComplexAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl ComplexAccumulator {
    pub const fn new() -> Self {
        Self {
            count: 0,
            mean: Complex64::new(0.0, 0.0),
            m2: 0.0,
            w2: Complex64::new(0.0, 0.0),
            t3: Complex64::new(0.0, 0.0),
            m4: 0.0,
        }
    }

    pub fn from_samples<I: IntoIterator<Item = Complex64>>(samples: I) -> Self {
        let mut acc = Self::new();
        for z in samples {
            acc.push(z);
        }
        acc
    }

    pub fn push(&mut self, z: Complex64) {
        let n0 = self.count as f64;
        let n = n0 + 1.0;
        let delta = z - self.mean;
        let mean = self.mean + delta / n;
        // Shift of the existing centred sums, plus the new point's own contribution.
        let c = mean - self.mean;
        let (m2, w2, t3, m4) = self.shifted(c);
        let d = z - mean;
        let d2 = d.norm_sqr();
        self.count += 1;
        self.mean = mean;
        self.m2 = m2 + d2;
        self.w2 = w2 + d * d;
        self.t3 = t3 + d * d2;
        self.m4 = m4 + d2 * d2;
    }

    /// Re-centres the stored sums from `mean` to `mean + c`.
    fn shifted(&self, c: Complex64) -> (f64, Complex64, Complex64, f64) {
        let n = self.count as f64;
        let c2 = c.norm_sqr();
        let cc = c.conj();
        let m2 = self.m2 + n * c2;
        let w2 = self.w2 + c * c * n;
        let t3 = self.t3 - c * (2.0 * self.m2) - cc * self.w2 - c * (n * c2);
        let m4 = self.m4 + n * c2 * c2 + 4.0 * c2 * self.m2 + 2.0 * (self.w2 * cc * cc).re
            - 4.0 * (self.t3 * cc).re;
        (m2, w2, t3, m4)
    }

    pub fn merge(&mut self, other: &ComplexAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * (nb / n);
        let (a2, aw, at, a4) = self.shifted(mean - self.mean);
        let (b2, bw, bt, b4) = other.shifted(mean - other.mean);
        self.count += other.count;
        self.mean = mean;
        self.m2 = a2 + b2;
        self.w2 = aw + bw;
        self.t3 = at + bt;
        self.m4 = a4 + b4;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Complex64 {
        self.mean
    }

    /// Unbiased complex variance; `NaN` below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Unbiased pseudo-variance `E (z - Ez)^2`.
    pub fn pseudo_variance(&self) -> Complex64 {
        if self.count < 2 {
            Complex64::new(f64::NAN, f64::NAN)
        } else {
            self.w2 / (self.count - 1) as f64
        }
    }

    /// Standard error of [`mean`](Self::mean) as a complex magnitude, `sqrt(var / M)`.
    pub fn mean_stderr(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }

    /// Fourth central moment `E|z - Ez|^4` (biased, divisor `M`).
    pub fn fourth_central_moment(&self) -> f64 {
        self.m4 / self.count as f64
    }

    /// Standard error of [`variance`](Self::variance), `sqrt((mu4 - sigma^4) / M)`.
    ///
    /// Leading-order in `1/M`; agrees with the delete-one jackknife of the variance.
    pub fn variance_stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let s2 = self.variance();
        let spread = (self.fourth_central_moment() - s2 * s2).max(0.0);
        (spread / self.count as f64).sqrt()
    }
}

/// Accumulator of the centred cross moment `E (u - Eu) conj(v - Ev)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CovarianceAccumulator {
    count: u64,
    mean_u: Complex64,
    mean_v: Complex64,
    cross: Complex64,
    // Raw products u * conj(v), only used for the standard error.
    products: ComplexAccumulator,
}

impl CovarianceAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, u: Complex64, v: Complex64) {
        self.count += 1;
        let n = self.count as f64;
        let du = u - self.mean_u;
        self.mean_u += du / n;
        self.mean_v += (v - self.mean_v) / n;
        self.cross += du * (v - self.mean_v).conj();
        self.products.push(u * v.conj());
    }

    pub fn merge(&mut self, other: &CovarianceAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let du = other.mean_u - self.mean_u;
        let dv = other.mean_v - self.mean_v;
        self.cross += other.cross + du * dv.conj() * (na * nb / n);
        self.mean_u += du * (nb / n);
        self.mean_v += dv * (nb / n);
        self.count += other.count;
        self.products.merge(&other.products);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Unbiased centred cross moment; `NaN` below two pairs.
    pub fn covariance(&self) -> Complex64 {
        if self.count < 2 {
            Complex64::new(f64::NAN, f64::NAN)
        } else {
            self.cross / (self.count - 1) as f64
        }
    }

    /// Standard error of [`covariance`](Self::covariance) from the spread of `u conj(v)`.
    pub fn stderr(&self) -> f64 {
        self.products.mean_stderr()
    }
}

/// Centred cross moment of a finished list of pairs.
pub fn covariance_pair(pairs: &[(Complex64, Complex64)]) -> Result<Complex64> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "covariance needs at least 2 pairs, got {}",
            pairs.len()
        )));
    }
    let mut acc = CovarianceAccumulator::new();
    for &(u, v) in pairs {
        acc.push(u, v);
    }
    Ok(acc.covariance())
}

/// Delete-one jackknife of a statistic of the complex sample variance.
///
/// Returns `(full_value, jackknife_stderr)` for `f(var)`; each leave-one-out
/// variance comes from downdating the full sums, so the cost is `O(M)`.
pub fn jackknife_variance_statistic<F>(samples: &[Complex64], f: F) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let m = samples.len();
    if m < 3 {
        return Err(Error::InsufficientData(format!(
            "jackknife needs at least 3 samples, got {m}"
        )));
    }
    let acc = ComplexAccumulator::from_samples(samples.iter().copied());
    let n = m as f64;
    let mean = acc.mean();
    let m2 = acc.m2;
    let full = f(acc.variance());
    let loo: Vec<f64> = samples
        .iter()
        .map(|z| {
            let m2_i = (m2 - (z - mean).norm_sqr() * n / (n - 1.0)).max(0.0);
            f(m2_i / (n - 2.0))
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let spread: f64 = loo.iter().map(|x| (x - loo_mean).powi(2)).sum();
    Ok((full, ((n - 1.0) / n * spread).sqrt()))
}
