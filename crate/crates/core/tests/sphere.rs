mod support;

use std::f64::consts::{FRAC_PI_2, PI};

use isoscatter::sphere::{
    cross_square_moment, factorized_joint_pdf, gaussian_limit_distance, joint_marginal_pdf,
    marginal_pdf, mean_over_real_samples, moment, sample_complex_unit_vector,
    sample_real_unit_vector,
};
use isoscatter::{Error, SeedStream};

use support::*;

#[test]
fn zero_sphere_plus_frequency() {
    let stream = SeedStream::new(1);
    let m = 100_000u64;
    let plus = (0..m)
        .filter(|&i| {
            let x = sample_real_unit_vector(1, &mut stream.rng(i)).unwrap().components()[0];
            assert!(x == 1.0 || x == -1.0);
            x > 0.0
        })
        .count() as f64
        / m as f64;
    assert!((plus - 0.5).abs() < 5.0 * (0.25 / m as f64).sqrt(), "{plus}");
}

#[test]
fn equipartition_and_sign_symmetry_in_five_dimensions() {
    let n = 5;
    let m = 200_000u64;
    let stream = SeedStream::new(2);
    let (sq, se) = mean_over_real_samples(n, m, &stream, |x| x[0] * x[0]);
    assert!((sq - 0.2).abs() < 5.0 * se, "{sq} +- {se}");
    let bound = 5.0 * (1.0 / (n as f64 * m as f64)).sqrt();
    for k in 0..n {
        let (mean, _) = mean_over_real_samples(n, m, &stream, |x| x[k]);
        assert!(mean.abs() < bound, "coordinate {k}: {mean}");
    }
}

#[test]
fn complex_component_moments() {
    let m = 200_000u64;
    for (n, power, target) in [(4usize, 1, 0.25), (2, 2, 1.0 / 3.0)] {
        let stream = SeedStream::new(3 + n as u64);
        let xs: Vec<f64> = (0..m)
            .map(|i| {
                let v = sample_complex_unit_vector(n, &mut stream.rng(i)).unwrap();
                v.components()[0].norm_sqr().powi(power)
            })
            .collect();
        let (mean, se) = mean_se(&xs);
        assert!((mean - target).abs() < 5.0 * se, "N={n}: {mean} vs {target}");
    }
    assert!((complex_fourth_oracle(2) - 1.0 / 3.0).abs() < 1e-10);
}

#[test]
fn marginal_density_values() {
    for z in [-1.0, -0.3, 0.0, 0.8, 1.0] {
        assert!((marginal_pdf(z, 3).unwrap() - 0.5).abs() < 1e-14);
    }
    assert!((marginal_pdf(0.0, 5).unwrap() - 0.75).abs() < 1e-14);
    // The same value from normalising (1 - z^2)^((n-3)/2) by quadrature.
    let w = integrate_on_interval(|z| 1.0 - z * z, 4000);
    assert!((marginal_pdf(0.0, 5).unwrap() - 1.0 / w).abs() < 1e-12);
    assert!(matches!(marginal_pdf(1.5, 5), Err(Error::Domain(_))));
    assert!(matches!(marginal_pdf(0.0, 1), Err(Error::InvalidDimension(_))));
}

#[test]
fn moments_against_quadrature() {
    assert_eq!(moment(4, 2).unwrap(), 0.25);
    assert_eq!(moment(7, 3).unwrap(), 0.0);
    assert!((moment(2, 4).unwrap() - 0.375).abs() < 1e-15);
    assert!((component_expectation(2, |z| z.powi(4)) - 0.375).abs() < 1e-10);
    assert!(matches!(moment(4, 5), Err(Error::UnsupportedOrder(5))));
}

#[test]
fn cross_square_on_the_circle() {
    let oracle = simpson(|t| (t.cos() * t.sin()).powi(2), 0.0, 2.0 * PI, 4000) / (2.0 * PI);
    assert!((oracle - 0.125).abs() < 1e-12);
    assert!((cross_square_moment(2).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn cross_square_against_monte_carlo() {
    let n = 6;
    let (mean, se) = mean_over_real_samples(n, 1_000_000, &SeedStream::new(6), |x| (x[0] * x[1]).powi(2));
    let exact = cross_square_moment(n).unwrap();
    assert!((mean - exact).abs() < 5.0 * se, "{mean} vs {exact}");
    assert!((exact - cross_square_oracle(n)).abs() < 1e-12);
}

#[test]
fn joint_density_at_origin_is_normalised() {
    // Self-normalised disk density (1 - r^2)^{1/2} for n = 5 with r = sin t.
    let mass = 2.0 * PI * simpson(|t| t.sin() * t.cos() * t.cos(), 0.0, FRAC_PI_2, 4000);
    let expected = 1.0 / mass;
    assert!((joint_marginal_pdf(&[0.0, 0.0], 5).unwrap() - expected).abs() < 1e-10);
    assert!((expected - 1.5 / PI).abs() < 1e-10);
}

#[test]
fn printed_product_form_is_not_normalised() {
    // Midpoint rule on the disk for n = 6; the exact form is the control on the same grid.
    let mass = |pdf: fn(&[f64], usize) -> isoscatter::Result<f64>| {
        let k = 800;
        let h = 2.0 / k as f64;
        let mut total = 0.0;
        for i in 0..k {
            for j in 0..k {
                let (x, y) = (-1.0 + h * (i as f64 + 0.5), -1.0 + h * (j as f64 + 0.5));
                if x * x + y * y < 1.0 {
                    total += pdf(&[x, y], 6).unwrap() * h * h;
                }
            }
        }
        total
    };
    let exact = mass(joint_marginal_pdf);
    let product = mass(factorized_joint_pdf);
    assert!((exact - 1.0).abs() < 2e-3, "{exact}");
    assert!((product - exact).abs() > 0.02, "{product} vs {exact}");
    assert_eq!(factorized_joint_pdf(&[0.3], 6).unwrap(), joint_marginal_pdf(&[0.3], 6).unwrap());
}

#[test]
fn gaussian_limit_in_very_high_dimension() {
    let d = gaussian_limit_distance(1_000_000, 1000, &SeedStream::new(7)).unwrap();
    assert!(d < 1.95 / 1000f64.sqrt() * 1.5, "{d}");
}
