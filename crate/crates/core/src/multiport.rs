//! Port-level perturbation `dA = L S L^T` and its ensemble variance structure.
//!
//! `L` holds one port-bound linear form per row (`P x N`). For rows orthogonal
//! under the Hermitian inner product the second moments of the isotropic
//! ensemble give `var(A_pq) = |L_p|^2 |L_q|^2 rho^2 / N` off the diagonal and
//! twice `|L_p|^4 rho^2 / N` on it, so `var(A_pq) = sqrt(var(A_pp) var(A_qq)) / 2`.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{ordered_fold, SeedStream};
use crate::sie::{sample_multiplier, sample_spectral, ScatteringMatrix, SieConfig, VectorMode};
use crate::sphere::PrefixSampler;
use crate::stats::ComplexAccumulator;

/// Which multi-port model the perturbed parameters belong to; only affects units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Thevenin,
    Norton,
    Hybrid,
    #[default]
    Scattering,
}

impl ModelKind {
    pub fn units(&self) -> &'static str {
        match self {
            ModelKind::Thevenin => "ohm",
            ModelKind::Norton => "siemens",
            ModelKind::Hybrid => "mixed",
            ModelKind::Scattering => "dimensionless",
        }
    }
}

/// Orthogonality notion used when generating port forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthogonality {
    /// `sum_k L_pk conj(L_qk) = 0` for `p != q`.
    Hermitian,
    /// Only `Re sum_k L_pk conj(L_qk) = 0`; exploratory.
    RealPart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortForms {
    entries: Array2<Complex64>,
}

fn hermitian_inner(a: ndarray::ArrayView1<'_, Complex64>, b: ndarray::ArrayView1<'_, Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

impl PortForms {
    /// Wraps an arbitrary `P x N` matrix; rows need not be orthogonal.
    pub fn new(entries: Array2<Complex64>) -> Result<Self> {
        let (p, n) = entries.dim();
        if p == 0 || n == 0 {
            return Err(Error::Shape(format!("port forms must be non-empty, got {p}x{n}")));
        }
        let forms = Self { entries };
        if let Some(p) = forms.row_norms().iter().position(|&x| x <= 0.0) {
            return Err(Error::Config(format!("port form {} has zero norm", p + 1)));
        }
        Ok(forms)
    }

    pub fn entries(&self) -> ArrayView2<'_, Complex64> {
        self.entries.view()
    }

    pub fn port_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn wave_dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.entries
            .rows()
            .into_iter()
            .map(|r| hermitian_inner(r, r).re.sqrt())
            .collect()
    }

    /// Hermitian inner product `sum_k L_pk conj(L_qk)` of rows `p`, `q` (0-based).
    pub fn inner(&self, p: usize, q: usize) -> Complex64 {
        hermitian_inner(self.entries.row(p), self.entries.row(q))
    }

    /// Largest normalised overlap `|<L_p, L_q>| / (|L_p| |L_q|)` over `p != q`.
    pub fn orthogonality_defect(&self) -> f64 {
        let norms = self.row_norms();
        let mut worst = 0.0f64;
        for p in 0..self.port_count() {
            for q in 0..p {
                worst = worst.max(self.inner(p, q).norm() / (norms[p] * norms[q]));
            }
        }
        worst
    }

    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.orthogonality_defect() <= tol
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            entries: self.entries.mapv(|x| x * alpha),
        }
    }
}

/// Random rows, Gram-Schmidt orthogonalised under the chosen notion, then scaled to `norms`.
pub fn make_port_forms<R: Rng + ?Sized>(
    ports: usize,
    dim: usize,
    norms: &[f64],
    orthogonality: Orthogonality,
    rng: &mut R,
) -> Result<PortForms> {
    if norms.len() != ports {
        return Err(Error::Config(format!(
            "{} norms given for {ports} ports",
            norms.len()
        )));
    }
    if let Some(x) = norms.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::Config(format!("port norms must be positive, got {x}")));
    }
    let capacity = match orthogonality {
        Orthogonality::Hermitian => dim,
        Orthogonality::RealPart => 2 * dim,
    };
    if ports == 0 || ports > capacity {
        return Err(Error::InfeasibleOrthogonality { rows: ports, dim });
    }
    let mut rows = Array2::<Complex64>::zeros((ports, dim));
    for x in rows.iter_mut() {
        *x = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    for p in 0..ports {
        for _ in 0..2 {
            for q in 0..p {
                let mut proj = hermitian_inner(rows.row(p), rows.row(q));
                if orthogonality == Orthogonality::RealPart {
                    proj = Complex64::new(proj.re, 0.0);
                }
                for k in 0..dim {
                    let r = rows[(q, k)];
                    rows[(p, k)] -= proj * r;
                }
            }
        }
        let norm = hermitian_inner(rows.row(p), rows.row(p)).re.sqrt();
        rows.row_mut(p).mapv_inplace(|x| x / norm);
    }
    for (mut row, &target) in rows.rows_mut().into_iter().zip(norms) {
        row.mapv_inplace(|x| x * target);
    }
    PortForms::new(rows)
}

pub fn make_orthogonal_port_forms<R: Rng + ?Sized>(
    ports: usize,
    dim: usize,
    norms: &[f64],
    rng: &mut R,
) -> Result<PortForms> {
    make_port_forms(ports, dim, norms, Orthogonality::Hermitian, rng)
}

/// Deviation `dA` of the multi-port parameters; the source term is fixed to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationMatrix {
    pub entries: Array2<Complex64>,
    pub kind: ModelKind,
}

impl PerturbationMatrix {
    pub fn port_count(&self) -> usize {
        self.entries.nrows()
    }

    /// Internal source term, pinned to zero.
    pub fn source(&self) -> Array1<Complex64> {
        Array1::zeros(self.port_count())
    }

    pub fn is_symmetric(&self) -> bool {
        let p = self.port_count();
        (0..p).all(|a| (0..a).all(|b| self.entries[(a, b)] == self.entries[(b, a)]))
    }
}

/// `dA_pq = sum_kl L_pk S_kl L_ql`, plain transpose on the right.
pub fn perturb(forms: &PortForms, s: &ScatteringMatrix) -> Result<PerturbationMatrix> {
    let (p, n) = forms.entries.dim();
    if n != s.dimension() {
        return Err(Error::Shape(format!(
            "port forms act on dimension {n}, scattering matrix has dimension {}",
            s.dimension()
        )));
    }
    let sa = s.matrix().as_array();
    // LS = L * S, then dA = LS * L^T.
    let ls = forms.entries.dot(sa);
    let mut out = Array2::<Complex64>::zeros((p, p));
    let symmetric = s.matrix().is_symmetric();
    for a in 0..p {
        let start = if symmetric { a } else { 0 };
        for b in start..p {
            out[(a, b)] = ls
                .row(a)
                .iter()
                .zip(forms.entries.row(b).iter())
                .map(|(x, y)| x * y)
                .sum();
        }
    }
    if symmetric {
        for a in 0..p {
            for b in 0..a {
                out[(a, b)] = out[(b, a)];
            }
        }
    }
    Ok(PerturbationMatrix {
        entries: out,
        kind: ModelKind::default(),
    })
}

/// Empirical and predicted variances of the entries of `dA`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTable {
    pub empirical: Array2<f64>,
    pub predicted: Array2<f64>,
    pub stderr: Array2<f64>,
    pub sample_count: u64,
}

impl VarianceTable {
    pub fn port_count(&self) -> usize {
        self.empirical.nrows()
    }

    /// Residual of the universal ratio on the empirical variances (1-based ports).
    pub fn ratio_residual(&self, p: usize, q: usize) -> Result<f64> {
        universal_ratio_residual(self.empirical.view(), p, q)
    }

    /// Residual of the universal ratio on the predicted variances.
    pub fn predicted_ratio_residual(&self, p: usize, q: usize) -> Result<f64> {
        universal_ratio_residual(self.predicted.view(), p, q)
    }
}

/// Closed-form variance `(|L_p|^2 |L_q|^2 + |<L_p, L_q>|^2) rho^2 / N` (0-based ports).
///
/// For orthogonal rows the overlap term vanishes off the diagonal and equals
/// `|L_p|^4` on it.
pub fn predicted_variance(forms: &PortForms, config: &SieConfig, p: usize, q: usize) -> f64 {
    let norms = forms.row_norms();
    let overlap = forms.inner(p, q).norm_sqr();
    (norms[p].powi(2) * norms[q].powi(2) + overlap) * config.rho * config.rho
        / config.dimension as f64
}

/// Factors `L = C Q` with `Q` having Hermitian-orthonormal rows; returns `C` (`P x rank`).
pub fn row_space_factor(forms: &PortForms) -> Array2<Complex64> {
    let (p, n) = forms.entries.dim();
    let mut basis: Vec<Array1<Complex64>> = Vec::new();
    let mut coeffs: Vec<Vec<Complex64>> = Vec::with_capacity(p);
    for (i, row) in forms.entries.rows().into_iter().enumerate() {
        let scale = forms.row_norms()[i];
        let mut residual = row.to_owned();
        let mut c = vec![Complex64::new(0.0, 0.0); basis.len()];
        for _ in 0..2 {
            for (cj, q) in c.iter_mut().zip(&basis) {
                let proj = hermitian_inner(residual.view(), q.view());
                *cj += proj;
                residual.zip_mut_with(q, |r, qk| *r -= proj * qk);
            }
        }
        let norm = hermitian_inner(residual.view(), residual.view()).re.sqrt();
        if norm > 1e-12 * scale && basis.len() < n {
            c.push(Complex64::new(norm, 0.0));
            basis.push(residual.mapv(|x| x / norm));
        }
        coeffs.push(c);
    }
    let rank = basis.len();
    Array2::from_shape_fn((p, rank), |(i, j)| coeffs[i].get(j).copied().unwrap_or_default())
}

/// One draw of `dA` for independent isotropic directions, given `C` from [`row_space_factor`].
///
/// `L v = C (Q v)` and `Q v` has the law of the first `rank` components of an
/// isotropic vector, so the draw is exact in distribution at `O(P)` cost per term.
pub fn sample_reduced_perturbation<R: Rng + ?Sized>(
    factor: ArrayView2<'_, Complex64>,
    config: &SieConfig,
    rng: &mut R,
) -> Result<Array2<Complex64>> {
    config.validate()?;
    if config.vector_mode != VectorMode::IndependentIsotropic {
        return Err(Error::Config(
            "reduced sampling needs independent isotropic directions".into(),
        ));
    }
    let (p, rank) = factor.dim();
    let sampler = PrefixSampler::new(2 * config.dimension, 2 * rank)?;
    let mut flat = vec![0.0; 2 * rank];
    let mut out = Array2::<Complex64>::zeros((p, p));
    let mut w = vec![Complex64::new(0.0, 0.0); p];
    for _ in 0..config.term_count {
        let s = sample_multiplier(config.eigenvalue_law, config.rho, rng);
        sampler.fill(&mut flat, rng);
        for (wp, row) in w.iter_mut().zip(factor.rows()) {
            *wp = row
                .iter()
                .zip(flat.chunks_exact(2))
                .map(|(a, u)| a * Complex64::new(u[0], u[1]))
                .sum();
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

fn check_ensemble(forms: &PortForms, config: &SieConfig, sample_count: u64) -> Result<()> {
    config.validate()?;
    if forms.wave_dim() != config.dimension {
        return Err(Error::Shape(format!(
            "port forms act on dimension {}, ensemble has dimension {}",
            forms.wave_dim(),
            config.dimension
        )));
    }
    if sample_count < 100 {
        return Err(Error::InsufficientData(format!(
            "ensemble variance needs at least 100 samples, got {sample_count}"
        )));
    }
    Ok(())
}

/// Monte Carlo variances of `dA` over the isotropic ensemble; sample `i` uses substream `i`.
///
/// Independent directions go through [`sample_reduced_perturbation`]; the
/// orthonormal-frame mode draws full samples as in [`ensemble_variance_direct`].
pub fn ensemble_variance(
    forms: &PortForms,
    config: &SieConfig,
    sample_count: u64,
    stream: &SeedStream,
) -> Result<VarianceTable> {
    check_ensemble(forms, config, sample_count)?;
    if config.vector_mode != VectorMode::IndependentIsotropic {
        return ensemble_variance_direct(forms, config, sample_count, stream);
    }
    let factor = row_space_factor(forms);
    let view = factor.view();
    Ok(variance_table(forms, config, sample_count, |i| {
        sample_reduced_perturbation(view, config, &mut stream.rng(i)).expect("validated config")
    }))
}

/// As [`ensemble_variance`], but every sample is a full `N x N` matrix pushed through `L S L^T`.
pub fn ensemble_variance_direct(
    forms: &PortForms,
    config: &SieConfig,
    sample_count: u64,
    stream: &SeedStream,
) -> Result<VarianceTable> {
    check_ensemble(forms, config, sample_count)?;
    let view = forms.entries();
    Ok(variance_table(forms, config, sample_count, |i| {
        let sample = sample_spectral(config, &mut stream.rng(i)).expect("validated config");
        sample.project(view).expect("shape checked")
    }))
}

fn variance_table<F>(forms: &PortForms, config: &SieConfig, sample_count: u64, draw: F) -> VarianceTable
where
    F: Fn(u64) -> Array2<Complex64> + Sync,
{
    let p = forms.port_count();
    let accs = ordered_fold(
        sample_count,
        || vec![ComplexAccumulator::new(); p * p],
        |acc, i| {
            let da = draw(i);
            for a in 0..p {
                for b in a..p {
                    acc[a * p + b].push(da[(a, b)]);
                }
            }
        },
        |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y)),
    );
    let mut empirical = Array2::zeros((p, p));
    let mut predicted = Array2::zeros((p, p));
    let mut stderr = Array2::zeros((p, p));
    for a in 0..p {
        for b in a..p {
            let acc = &accs[a * p + b];
            let pred = predicted_variance(forms, config, a, b);
            for (x, y) in [(a, b), (b, a)] {
                empirical[(x, y)] = acc.variance();
                stderr[(x, y)] = acc.variance_stderr();
                predicted[(x, y)] = pred;
            }
        }
    }
    VarianceTable {
        empirical,
        predicted,
        stderr,
        sample_count,
    }
}

/// `|v_pq - sqrt(v_pp v_qq) / 2| / v_pq` for 1-based ports `p != q`.
pub fn universal_ratio_residual(variances: ArrayView2<'_, f64>, p: usize, q: usize) -> Result<f64> {
    let n = variances.nrows();
    if p == q {
        return Err(Error::Index("universal ratio needs two distinct ports".into()));
    }
    if p == 0 || q == 0 || p > n || q > n {
        return Err(Error::Index(format!("ports ({p},{q}) outside 1..={n}")));
    }
    let (p, q) = (p - 1, q - 1);
    let v = variances[(p, q)];
    if v <= 0.0 || !v.is_finite() {
        return Err(Error::DegenerateEnsemble(format!(
            "var(A_{}{}) = {v} cannot normalise the residual",
            p + 1,
            q + 1
        )));
    }
    let predicted = 0.5 * (variances[(p, p)] * variances[(q, q)]).sqrt();
    Ok((v - predicted).abs() / v)
}

/// Port-level reciprocity defect `x_b^T A x_a - x_a^T A x_b`.
///
/// Vanishes for every pair of excitations when `A` is complex symmetric.
pub fn reciprocity_defect(
    model: ArrayView2<'_, Complex64>,
    x_a: &[Complex64],
    x_b: &[Complex64],
) -> Result<Complex64> {
    let n = model.nrows();
    if model.ncols() != n || x_a.len() != n || x_b.len() != n {
        return Err(Error::Shape(format!(
            "model {:?} with excitations of length {} and {}",
            model.dim(),
            x_a.len(),
            x_b.len()
        )));
    }
    let bilinear = |u: &[Complex64], v: &[Complex64]| -> Complex64 {
        (0..n)
            .map(|i| (0..n).map(|j| u[i] * model[(i, j)] * v[j]).sum::<Complex64>())
            .sum()
    };
    Ok(bilinear(x_b, x_a) - bilinear(x_a, x_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sie::sample_sie;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = SeedStream::new(seed).rng(0);
        Array2::from_shape_fn((rows, cols), |_| {
            c(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
    }

    #[test]
    fn single_unit_row() {
        let l = make_orthogonal_port_forms(1, 4, &[1.0], &mut SeedStream::new(0).rng(0)).unwrap();
        assert_eq!(l.entries().dim(), (1, 4));
        assert_relative_eq!(l.row_norms()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rows_are_orthogonal_and_scaled() {
        let l = make_orthogonal_port_forms(2, 8, &[2.0, 3.0], &mut SeedStream::new(1).rng(0)).unwrap();
        assert!(l.inner(0, 1).norm() < 1e-10);
        let norms = l.row_norms();
        assert!((norms[0] - 2.0).abs() < 1e-10);
        assert!((norms[1] - 3.0).abs() < 1e-10);

        let wide = make_orthogonal_port_forms(16, 16, &[1.5; 16], &mut SeedStream::new(2).rng(0)).unwrap();
        assert!(wide.orthogonality_defect() < 1e-10);
    }

    #[test]
    fn orthogonality_infeasible_beyond_dimension() {
        let err = make_orthogonal_port_forms(5, 4, &[1.0; 5], &mut SeedStream::new(0).rng(0));
        assert!(matches!(err, Err(Error::InfeasibleOrthogonality { rows: 5, dim: 4 })));
        assert!(make_orthogonal_port_forms(2, 4, &[1.0, -1.0], &mut SeedStream::new(0).rng(0)).is_err());
        assert!(make_orthogonal_port_forms(2, 4, &[1.0], &mut SeedStream::new(0).rng(0)).is_err());
    }

    #[test]
    fn real_part_orthogonality() {
        let l = make_port_forms(3, 4, &[1.0, 1.0, 1.0], Orthogonality::RealPart, &mut SeedStream::new(3).rng(0))
            .unwrap();
        for p in 0..3 {
            for q in 0..p {
                assert!(l.inner(p, q).re.abs() < 1e-10);
            }
        }
        // Generic rows keep an imaginary overlap.
        assert!(l.orthogonality_defect() > 1e-6);
    }

    #[test]
    fn identity_forms_reproduce_s() {
        let cfg = SieConfig::new(5, 0.9);
        let s = sample_sie(&cfg, &mut SeedStream::new(4).rng(0)).unwrap();
        let id = PortForms::new(Array2::from_shape_fn((5, 5), |(i, j)| {
            if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }
        }))
        .unwrap();
        let da = perturb(&id, &s).unwrap();
        assert_eq!(&da.entries, s.matrix().as_array());
    }

    #[test]
    fn single_port_matches_double_loop() {
        let cfg = SieConfig::new(6, 1.0);
        let s = sample_sie(&cfg, &mut SeedStream::new(5).rng(0)).unwrap();
        let l = PortForms::new(random_matrix(1, 6, 6)).unwrap();
        let da = perturb(&l, &s).unwrap();
        let mut direct = c(0.0, 0.0);
        for k in 0..6 {
            for m in 0..6 {
                direct += l.entries()[(0, k)] * s.get(k, m) * l.entries()[(0, m)];
            }
        }
        assert!((da.entries[(0, 0)] - direct).norm() < 1e-12);
    }

    #[test]
    fn symmetric_s_gives_symmetric_perturbation() {
        let cfg = SieConfig::new(7, 1.0);
        let s = sample_sie(&cfg, &mut SeedStream::new(7).rng(0)).unwrap();
        let l = PortForms::new(random_matrix(3, 7, 8)).unwrap();
        let da = perturb(&l, &s).unwrap();
        assert!(da.is_symmetric());
        // Oracle: the unsymmetrised product L S L^T and its transpose.
        let sa = s.matrix().as_array();
        let full = l.entries().dot(sa).dot(&l.entries().t());
        for a in 0..3 {
            for b in 0..3 {
                assert!((full[(a, b)] - full[(b, a)]).norm() < 1e-12);
                assert!((full[(a, b)] - da.entries[(a, b)]).norm() < 1e-12);
            }
        }
        assert_eq!(da.source().len(), 3);
        assert!(da.source().iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let s = sample_sie(&SieConfig::new(4, 1.0), &mut SeedStream::new(0).rng(0)).unwrap();
        let l = PortForms::new(random_matrix(2, 5, 1)).unwrap();
        assert!(matches!(perturb(&l, &s), Err(Error::Shape(_))));
    }

    #[test]
    fn predicted_table_satisfies_ratio_exactly() {
        let l = make_orthogonal_port_forms(3, 10, &[1.0, 2.5, 0.7], &mut SeedStream::new(9).rng(0)).unwrap();
        let cfg = SieConfig::new(10, 0.6);
        let pred = Array2::from_shape_fn((3, 3), |(a, b)| predicted_variance(&l, &cfg, a, b));
        for (p, q) in [(1, 2), (1, 3), (2, 3)] {
            assert!(universal_ratio_residual(pred.view(), p, q).unwrap() < 1e-10);
        }
        assert_relative_eq!(pred[(0, 1)], 2.5f64.powi(2) * 0.36 / 10.0, max_relative = 1e-9);
        assert_relative_eq!(pred[(1, 1)], 2.0 * 2.5f64.powi(4) * 0.36 / 10.0, max_relative = 1e-9);
    }

    #[test]
    fn residual_errors() {
        let v = ndarray::array![[2.0, 0.0], [0.0, 2.0]];
        assert!(matches!(
            universal_ratio_residual(v.view(), 1, 2),
            Err(Error::DegenerateEnsemble(_))
        ));
        assert!(matches!(universal_ratio_residual(v.view(), 1, 1), Err(Error::Index(_))));
        assert!(matches!(universal_ratio_residual(v.view(), 1, 3), Err(Error::Index(_))));
        let ok = ndarray::array![[2.0, 1.0], [1.0, 2.0]];
        assert_eq!(universal_ratio_residual(ok.view(), 1, 2).unwrap(), 0.0);
    }

    #[test]
    fn reciprocity_for_symmetric_models() {
        let cfg = SieConfig::new(4, 1.0);
        let s = sample_sie(&cfg, &mut SeedStream::new(10).rng(0)).unwrap();
        let xa: Vec<Complex64> = random_matrix(1, 4, 11).into_iter().collect();
        let xb: Vec<Complex64> = random_matrix(1, 4, 12).into_iter().collect();
        let defect = reciprocity_defect(s.matrix().as_array().view(), &xa, &xb).unwrap();
        assert!(defect.norm() < 1e-12);
        let asym = random_matrix(4, 4, 13);
        assert!(reciprocity_defect(asym.view(), &xa, &xb).unwrap().norm() > 1e-3);
    }

    #[test]
    fn row_space_factor_preserves_gram_matrix() {
        let l = PortForms::new(random_matrix(3, 7, 20)).unwrap();
        let c_ = row_space_factor(&l);
        assert_eq!(c_.dim(), (3, 3));
        let gram_l = l.entries().dot(&l.entries().t().mapv(|z| z.conj()));
        let gram_c = c_.dot(&c_.t().mapv(|z| z.conj()));
        for (x, y) in gram_l.iter().zip(gram_c.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        let row = random_matrix(1, 5, 21);
        let twice = PortForms::new(Array2::from_shape_fn((2, 5), |(_, k)| row[(0, k)])).unwrap();
        assert_eq!(row_space_factor(&twice).dim(), (2, 1));
    }

    #[test]
    fn reduced_and_direct_ensembles_agree() {
        let cfg = SieConfig::new(6, 0.9);
        let l = PortForms::new(random_matrix(2, 6, 22)).unwrap();
        let stream = SeedStream::new(23);
        let fast = ensemble_variance(&l, &cfg, 20_000, &stream).unwrap();
        let slow = ensemble_variance_direct(&l, &cfg, 20_000, &stream.child(1)).unwrap();
        for (a, b) in [(0, 0), (0, 1), (1, 1)] {
            let se = fast.stderr[(a, b)].hypot(slow.stderr[(a, b)]);
            let diff = (fast.empirical[(a, b)] - slow.empirical[(a, b)]).abs();
            assert!(diff < 5.0 * se, "({a},{b}): {diff} vs se {se}");
            let pred = fast.predicted[(a, b)];
            assert!((fast.empirical[(a, b)] - pred).abs() < 5.0 * fast.stderr[(a, b)] + 2.0 * pred / 6.0);
        }
    }

    proptest! {
        #[test]
        fn perturbation_is_quadratic_and_additive(seed in any::<u64>(), re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let cfg = SieConfig::new(5, 0.8);
            let stream = SeedStream::new(seed);
            let s1 = sample_sie(&cfg, &mut stream.rng(0)).unwrap();
            let s2 = sample_sie(&cfg, &mut stream.rng(1)).unwrap();
            let l = PortForms::new(random_matrix(2, 5, seed.wrapping_add(1))).unwrap();
            let alpha = c(re, im);
            prop_assume!(alpha.norm() > 1e-3);

            let base = perturb(&l, &s1).unwrap();
            let scaled = perturb(&l.scaled(alpha), &s1).unwrap();
            for (x, y) in scaled.entries.iter().zip(base.entries.iter()) {
                prop_assert!((x - alpha * alpha * y).norm() <= 1e-12 * (1.0 + y.norm()) * 16.0);
            }

            let sum = ScatteringMatrix::new(s1.matrix() + s2.matrix());
            let lhs = perturb(&l, &sum).unwrap();
            let rhs = &base.entries + &perturb(&l, &s2).unwrap().entries;
            for (x, y) in lhs.entries.iter().zip(rhs.iter()) {
                prop_assert!((x - y).norm() <= 1e-12 * (1.0 + y.norm()) * 16.0);
            }
        }
    }
}
