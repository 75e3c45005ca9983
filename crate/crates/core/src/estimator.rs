//! Estimating the environment scale and port norms from reflection statistics.
//!
//! In the reference setup (two perfectly adapted lossless ports, `|L_1| = |L_2| = 1`)
//! the observable is `var(S_12) = rho^2 / N`. The raw estimate `sqrt(var S_12)`
//! therefore carries the `1/sqrt(N)` factor; supplying `N` removes it.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stats::{jackknife_variance_statistic, ComplexAccumulator};

/// Two-sided normal quantile used for reported confidence half-widths.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PortNormModel {
    Thevenin { r_rad: f64 },
    Norton { g_rad: f64 },
    /// Reflection magnitude `|S_pp|` and efficiency `C` in `(0, 1]`.
    Scattering { reflection: f64, efficiency: f64 },
}

impl PortNormModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Model(format!("{name} must be positive, got {x}")))
            }
        };
        match *self {
            PortNormModel::Thevenin { r_rad } => positive("radiation resistance", r_rad),
            PortNormModel::Norton { g_rad } => positive("radiation conductance", g_rad),
            PortNormModel::Scattering {
                reflection,
                efficiency,
            } => {
                if !(0.0..=1.0).contains(&reflection) {
                    return Err(Error::Model(format!(
                        "reflection magnitude must lie in [0, 1], got {reflection}"
                    )));
                }
                if !(efficiency > 0.0 && efficiency <= 1.0) {
                    return Err(Error::Model(format!(
                        "efficiency must lie in (0, 1], got {efficiency}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// `|L_p|^2` implied by a port model: `R_rad`, `G_rad`, or `(1 - |S_pp|^2) C`.
pub fn port_norm(model: PortNormModel) -> Result<f64> {
    model.validate()?;
    Ok(match model {
        PortNormModel::Thevenin { r_rad } => r_rad,
        PortNormModel::Norton { g_rad } => g_rad,
        PortNormModel::Scattering {
            reflection,
            efficiency,
        } => (1.0 - reflection * reflection) * efficiency,
    })
}

/// `sqrt(var_pp var_qq) / 2`.
pub fn predict_cross_variance(var_pp: f64, var_qq: f64) -> Result<f64> {
    if !(var_pp >= 0.0 && var_qq >= 0.0) || !var_pp.is_finite() || !var_qq.is_finite() {
        return Err(Error::Domain(format!(
            "variances must be finite and nonnegative, got ({var_pp}, {var_qq})"
        )));
    }
    Ok(0.5 * (var_pp * var_qq).sqrt())
}

/// `sqrt` of the complex sample variance of reference transmission samples.
pub fn estimate_rho(samples: &[Complex64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "estimating rho needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    Ok(ComplexAccumulator::from_samples(samples.iter().copied())
        .variance()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoEstimate {
    /// `sqrt(var S_12)`, i.e. `rho / sqrt(N)` in the reference setup.
    pub raw: f64,
    /// Jackknife standard error of `raw`; absent below 3 samples.
    pub raw_stderr: Option<f64>,
    /// `raw * sqrt(N)` when `N` is supplied.
    pub normalized: Option<f64>,
    pub normalized_stderr: Option<f64>,
    pub sample_count: usize,
}

impl RhoEstimate {
    pub fn raw_half_width(&self) -> Option<f64> {
        self.raw_stderr.map(|s| Z_95 * s)
    }

    pub fn normalized_half_width(&self) -> Option<f64> {
        self.normalized_stderr.map(|s| Z_95 * s)
    }
}

/// [`estimate_rho`] with a jackknife error and an optional `N`-normalised value.
pub fn estimate_rho_detailed(samples: &[Complex64], dimension: Option<usize>) -> Result<RhoEstimate> {
    let raw = estimate_rho(samples)?;
    if dimension == Some(0) {
        return Err(Error::InvalidDimension("wave-space dimension must be >= 1".into()));
    }
    let raw_stderr = if samples.len() >= 3 {
        Some(jackknife_variance_statistic(samples, |v| v.sqrt())?.1)
    } else {
        None
    };
    let root = dimension.map(|n| (n as f64).sqrt());
    Ok(RhoEstimate {
        raw,
        raw_stderr,
        normalized: root.map(|r| raw * r),
        normalized_stderr: root.and_then(|r| raw_stderr.map(|s| s * r)),
        sample_count: samples.len(),
    })
}

/// Reflection and transmission statistics of one port pair, with the universal-ratio prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingEstimate {
    pub rho: RhoEstimate,
    pub var_pp: f64,
    pub var_qq: f64,
    pub var_pq: f64,
    pub predicted_var_pq: f64,
    /// Jackknife half-widths (95 %) of `var_pq` and of the prediction.
    pub var_pq_half_width: Option<f64>,
    pub predicted_half_width: Option<f64>,
    /// `|var_pq - predicted| / var_pq`; absent when `var_pq = 0`.
    pub rel_residual: Option<f64>,
}

/// Estimates from paired stir-state samples of `S_pp`, `S_qq` and `S_pq`.
pub fn estimate_coupling(
    s_pp: &[Complex64],
    s_qq: &[Complex64],
    s_pq: &[Complex64],
    dimension: Option<usize>,
) -> Result<CouplingEstimate> {
    let m = s_pq.len();
    if s_pp.len() != m || s_qq.len() != m {
        return Err(Error::Shape(format!(
            "sample counts differ: {} / {} / {m}",
            s_pp.len(),
            s_qq.len()
        )));
    }
    let rho = estimate_rho_detailed(s_pq, dimension)?;
    let var = |s: &[Complex64]| ComplexAccumulator::from_samples(s.iter().copied()).variance();
    let (var_pp, var_qq, var_pq) = (var(s_pp), var(s_qq), var(s_pq));
    let predicted_var_pq = predict_cross_variance(var_pp, var_qq)?;
    let (var_pq_half_width, predicted_half_width) = if m >= 3 {
        (
            Some(Z_95 * jackknife_variance_statistic(s_pq, |v| v)?.1),
            Some(Z_95 * jackknife_prediction(s_pp, s_qq)),
        )
    } else {
        (None, None)
    };
    let rel_residual = (var_pq > 0.0).then(|| (var_pq - predicted_var_pq).abs() / var_pq);
    Ok(CouplingEstimate {
        rho,
        var_pp,
        var_qq,
        var_pq,
        predicted_var_pq,
        var_pq_half_width,
        predicted_half_width,
        rel_residual,
    })
}

/// Jackknife standard error of `sqrt(var(a) var(b)) / 2` over paired samples.
fn jackknife_prediction(a: &[Complex64], b: &[Complex64]) -> f64 {
    let n = a.len() as f64;
    let loo = |s: &[Complex64]| -> Vec<f64> {
        let acc = ComplexAccumulator::from_samples(s.iter().copied());
        let (mean, m2) = (acc.mean(), acc.variance() * (n - 1.0));
        s.iter()
            .map(|z| (m2 - (z - mean).norm_sqr() * n / (n - 1.0)).max(0.0) / (n - 2.0))
            .collect()
    };
    let (va, vb) = (loo(a), loo(b));
    let values: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| 0.5 * (x * y).sqrt()).collect();
    let mean = values.iter().sum::<f64>() / n;
    ((n - 1.0) / n * values.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
}

/// `|L_p|^2` of a unit-efficiency port from its reflection variance, inverting
/// `var(S_pp) = 2 |L_p|^4 rho^2 / N`.
pub fn port_norm_from_reflection_variance(var_pp: f64, rho: f64, dimension: usize) -> Result<f64> {
    if var_pp < 0.0 || !var_pp.is_finite() {
        return Err(Error::Domain(format!("reflection variance must be nonnegative, got {var_pp}")));
    }
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    if dimension == 0 {
        return Err(Error::InvalidDimension("wave-space dimension must be >= 1".into()));
    }
    Ok((var_pp * dimension as f64 / (2.0 * rho * rho)).sqrt())
}
