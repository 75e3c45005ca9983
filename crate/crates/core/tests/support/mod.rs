//! Independent reference values for the integration tests.
//!
//! Densities are written from scratch here (unnormalised) and normalised by
//! quadrature, so nothing below depends on library prefactors.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

/// Composite Simpson rule on `[a, b]` with `intervals` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// `int_{-1}^{1} g(z) dz` through `z = sin t`, which tames the endpoint behaviour.
pub fn integrate_on_interval<F: Fn(f64) -> f64>(g: F, intervals: usize) -> f64 {
    simpson(|t| g(t.sin()) * t.cos(), -FRAC_PI_2, FRAC_PI_2, intervals)
}

/// `E f(x_1)` for a uniform unit vector in `R^n`, from `(1 - z^2)^((n-3)/2)`.
pub fn component_expectation<F: Fn(f64) -> f64>(n: usize, f: F) -> f64 {
    assert!(n >= 2);
    let e = (n as f64 - 3.0) / 2.0;
    // On z = sin t the weight times the Jacobian is cos(t)^(n-2).
    let w = |t: f64| t.cos().powf(2.0 * e + 1.0);
    let num = simpson(|t| f(t.sin()) * w(t), -FRAC_PI_2, FRAC_PI_2, 4000);
    let den = simpson(w, -FRAC_PI_2, FRAC_PI_2, 4000);
    num / den
}

/// `E(x^2 y^2)` for two components in `R^n` from the disk density `(1 - r^2)^((n-4)/2)`,
/// in polar coordinates with `r = sin t`.
pub fn cross_square_oracle(n: usize) -> f64 {
    assert!(n >= 3);
    let e = (n as f64 - 4.0) / 2.0;
    // r dr (1 - r^2)^e = sin t cos t^(2e+1) dt.
    let radial = |power: i32| {
        simpson(
            |t| t.sin().powi(power) * t.cos().powf(2.0 * e + 1.0),
            0.0,
            FRAC_PI_2,
            4000,
        )
    };
    // Angular factors: int cos^2 sin^2 = pi/4 against int 1 = 2 pi.
    radial(5) / radial(1) / 8.0
}

/// `E |z_1|^4` for a uniform unit vector in `C^N`, assembled from real moments in `R^{2N}`.
pub fn complex_fourth_oracle(n: usize) -> f64 {
    let m = 2 * n;
    2.0 * component_expectation(m, |z| z.powi(4)) + 2.0 * cross_square_oracle(m)
}

/// `E|z_1|^2 |z_2|^2` for a uniform unit vector in `C^N` (four real cross squares in `R^{2N}`).
pub fn complex_cross_oracle(n: usize) -> f64 {
    4.0 * cross_square_oracle(2 * n)
}

/// Exact `E|S_kl|^2` of the independent-direction ensemble with `N` terms.
pub fn sie_second_moment(n: usize, rho: f64, diagonal: bool) -> f64 {
    let per_term = if diagonal { complex_fourth_oracle(n) } else { complex_cross_oracle(n) };
    n as f64 * rho * rho * per_term
}

/// Mean and standard error of a real sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Brute-force complex variance with the unbiased divisor.
pub fn complex_variance(zs: &[Complex64]) -> f64 {
    let m = zs.len() as f64;
    let mean = zs.iter().sum::<Complex64>() / m;
    zs.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (m - 1.0)
}

/// Median of a non-empty slice.
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Runs the built binary with `args`.
pub fn isoscatter<I, S>(args: I) -> std::process::Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    std::process::Command::new(env!("CARGO_BIN_EXE_isoscatter"))
        .args(args)
        .env_remove("ISOSCATTER_THREADS")
        .output()
        .expect("spawn isoscatter")
}

/// Like [`isoscatter`] but panics with stderr unless the exit status is zero.
pub fn isoscatter_ok<I, S>(args: I) -> Vec<u8>
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = isoscatter(args);
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Numeric columns of a CSV with a header row; empty fields become `NaN`.
pub fn read_csv_columns(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .expect("header")
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), header.len(), "ragged row: {line}");
        for (col, f) in cols.iter_mut().zip(fields) {
            col.push(if f.is_empty() { f64::NAN } else { f.parse().expect("number") });
        }
    }
    (header, cols)
}
