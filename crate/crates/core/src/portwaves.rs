//! Voltage/current to forward/backward wave decomposition at low-frequency ports.
//!
//! On stacked port states `(V, I)` the projectors
//! `P+- = 1/2 [[I, +-R I], [+-R^-1 I, I]]` split a state into `(V+, I+)` with
//! `I+ = V+ / R` and `(V-, I-)` with `I- = -V- / R`. Wave amplitudes are
//! `phi+- = V+- / sqrt(2R)`. Port currents are oriented into the system.
//!
//! With this normalisation the Lorentz-type port pairing satisfies
//! `-Va.Ib + Vb.Ia = 4 (phi_a+ . phi_b- - phi_b+ . phi_a-)` for every `R`
//! (bilinear dot products, no conjugation).

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PortState {
    pub voltage: Vec<Complex64>,
    pub current: Vec<Complex64>,
}

impl PortState {
    pub fn new(voltage: Vec<Complex64>, current: Vec<Complex64>) -> Result<Self> {
        if voltage.is_empty() || voltage.len() != current.len() {
            return Err(Error::Shape(format!(
                "port state needs equal non-empty V and I, got {} and {}",
                voltage.len(),
                current.len()
            )));
        }
        Ok(Self { voltage, current })
    }

    pub fn port_count(&self) -> usize {
        self.voltage.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub forward: Vec<Complex64>,
    pub backward: Vec<Complex64>,
    pub reference: f64,
}

impl WaveState {
    pub fn new(forward: Vec<Complex64>, backward: Vec<Complex64>, reference: f64) -> Result<Self> {
        check_reference(reference)?;
        if forward.is_empty() || forward.len() != backward.len() {
            return Err(Error::Shape(format!(
                "wave state needs equal non-empty phi+ and phi-, got {} and {}",
                forward.len(),
                backward.len()
            )));
        }
        Ok(Self {
            forward,
            backward,
            reference,
        })
    }
}

fn check_reference(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidReference(r))
    }
}

/// `(P+, P-)` as `2n x 2n` real block matrices acting on `(V, I)`.
pub fn projectors(reference: f64, ports: usize) -> Result<(Array2<f64>, Array2<f64>)> {
    check_reference(reference)?;
    if ports == 0 {
        return Err(Error::InvalidDimension("need at least one port".into()));
    }
    let n = ports;
    let build = |sign: f64| {
        let mut m = Array2::<f64>::zeros((2 * n, 2 * n));
        for i in 0..n {
            m[(i, i)] = 0.5;
            m[(n + i, n + i)] = 0.5;
            m[(i, n + i)] = 0.5 * sign * reference;
            m[(n + i, i)] = 0.5 * sign / reference;
        }
        m
    };
    Ok((build(1.0), build(-1.0)))
}

/// `phi+- = (V +- R I) / (2 sqrt(2R))`.
pub fn to_waves(state: &PortState, reference: f64) -> Result<WaveState> {
    check_reference(reference)?;
    let scale = 1.0 / (2.0 * (2.0 * reference).sqrt());
    let (forward, backward) = state
        .voltage
        .iter()
        .zip(&state.current)
        .map(|(v, i)| ((v + i * reference) * scale, (v - i * reference) * scale))
        .unzip();
    Ok(WaveState {
        forward,
        backward,
        reference,
    })
}

/// Inverse of [`to_waves`]: `V = V+ + V-`, `I = (V+ - V-) / R`.
pub fn from_waves(waves: &WaveState) -> PortState {
    let r = waves.reference;
    let root = (2.0 * r).sqrt();
    let (voltage, current) = waves
        .forward
        .iter()
        .zip(&waves.backward)
        .map(|(f, b)| {
            let (vp, vm) = (f * root, b * root);
            (vp + vm, (vp - vm) / r)
        })
        .unzip();
    PortState { voltage, current }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("port counts differ: {a} vs {b}")));
    }
    Ok(())
}

/// Circuit-side pairing `-Va . Ib + Vb . Ia`.
pub fn lorentz_pairing(a: &PortState, b: &PortState) -> Result<Complex64> {
    check_pair(a.port_count(), b.port_count())?;
    Ok(-dot(&a.voltage, &b.current) + dot(&b.voltage, &a.current))
}

/// Wave-side pairing `4 (phi_a+ . phi_b- - phi_b+ . phi_a-)`; equals [`lorentz_pairing`].
pub fn wave_pairing(a: &WaveState, b: &WaveState) -> Result<Complex64> {
    check_pair(a.forward.len(), b.forward.len())?;
    Ok((dot(&a.forward, &b.backward) - dot(&b.forward, &a.backward)) * 4.0)
}

/// Both sides of the pairing identity evaluated at reference `R`: `(circuit, wave)`.
pub fn pairing_sides(a: &PortState, b: &PortState, reference: f64) -> Result<(Complex64, Complex64)> {
    let circuit = lorentz_pairing(a, b)?;
    let wave = wave_pairing(&to_waves(a, reference)?, &to_waves(b, reference)?)?;
    Ok((circuit, wave))
}
