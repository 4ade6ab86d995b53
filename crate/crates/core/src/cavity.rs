//! Single-sided cavity reflection physics.
//!
//! Everything is expressed in units of the atomic polarization decay rate
//! `gamma` (time in `1/gamma`). The atom-photon controlled-phase gate works
//! by reflecting a photon pulse off the cavity; the quality of that gate is
//! set by four rates: the atom-cavity coupling `g`, the atomic decay
//! `gamma`, the external (useful) cavity decay `kappa_ex` and the internal
//! (loss) decay `kappa_in`. This module evaluates the closed-form reflection
//! response, the state-dependent pulse delays, the pulse-overlap factors
//! `W_m` that drive the delay error channel, and the per-gate photon loss
//! probability.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CavityError {
    #[error("invalid cavity parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate cavity parameters: {0}")]
    DegenerateParameters(String),
    #[error("numeric overlap did not converge below {tolerance} (last change {last_change})")]
    GridResolution { tolerance: f64, last_change: f64 },
}

/// Physical rates of one atom-cavity system, in units of `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// Atom-cavity coupling rate.
    pub g: f64,
    /// Atomic polarization decay rate (the reference unit, 1 internally).
    pub gamma: f64,
    /// External cavity decay rate (mirror transmission to the useful mode).
    pub kappa_ex: f64,
    /// Internal cavity decay rate (scattering/absorption losses).
    pub kappa_in: f64,
}

impl CavityParams {
    pub fn new(g: f64, gamma: f64, kappa_ex: f64, kappa_in: f64) -> Result<Self, CavityError> {
        let p = Self { g, gamma, kappa_ex, kappa_in };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), CavityError> {
        let pos = [("g", self.g), ("gamma", self.gamma), ("kappa_ex", self.kappa_ex)];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CavityError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.kappa_in >= 0.0) || !self.kappa_in.is_finite() {
            return Err(CavityError::InvalidParams(format!(
                "kappa_in must be >= 0, got {}",
                self.kappa_in
            )));
        }
        Ok(())
    }

    /// Total cavity decay rate `kappa = kappa_ex + kappa_in`.
    pub fn kappa(&self) -> f64 {
        self.kappa_ex + self.kappa_in
    }

    /// Internal cooperativity `C_in = g^2 / (2 kappa_in gamma)`.
    ///
    /// `None` for a lossless cavity (`kappa_in = 0`).
    pub fn internal_cooperativity(&self) -> Option<f64> {
        if self.kappa_in > 0.0 {
            Some(self.g * self.g / (2.0 * self.kappa_in * self.gamma))
        } else {
            None
        }
    }

    pub fn with_kappa_ex(&self, kappa_ex: f64) -> Self {
        Self { kappa_ex, ..*self }
    }

    /// Slowest CQED timescale `max(1/kappa, kappa/g^2)`; pulses must be much
    /// longer than this for the first-order delay model to hold.
    pub fn pulse_timescale_floor(&self) -> f64 {
        let kappa = self.kappa();
        (1.0 / kappa).max(kappa / (self.g * self.g))
    }
}

/// Gaussian probe pulse: width plus the truncation window used to convert
/// width into wall-clock occupation per reflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    /// Gaussian pulse width `L_p`, in units of `1/gamma`.
    pub pulse_length: f64,
    /// Dimensionless truncation multiplier; occupation time per reflection
    /// is `window_factor * pulse_length`.
    pub window_factor: f64,
}

impl PulseParams {
    pub fn new(pulse_length: f64, window_factor: f64) -> Result<Self, CavityError> {
        if !(pulse_length > 0.0) || !pulse_length.is_finite() {
            return Err(CavityError::InvalidParams(format!(
                "pulse_length must be > 0, got {pulse_length}"
            )));
        }
        if !(window_factor >= 1.0) || !window_factor.is_finite() {
            return Err(CavityError::InvalidParams(format!(
                "window_factor must be >= 1, got {window_factor}"
            )));
        }
        Ok(Self { pulse_length, window_factor })
    }
}

/// Default pulse truncation: +-3 sigma keeps the clipped tail below 1e-4.
pub const DEFAULT_WINDOW_FACTOR: f64 = 6.0;

/// State-dependent reflection delays and the pulse-overlap ladder derived
/// from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile {
    /// Reflection delay for an atom in `|0>`.
    pub tau0: f64,
    /// Reflection delay for an atom in `|1>`.
    pub tau1: f64,
    /// Overlap factors `w[m]`, `m = 0..=max_m`; `w[0] = 1`.
    pub w: Vec<f64>,
}

impl DelayProfile {
    pub fn w(&self, m: usize) -> f64 {
        self.w[m]
    }

    /// Exact ladder for zero differential delay: every overlap is 1.
    pub fn ideal(max_m: usize) -> Self {
        Self { tau0: 0.0, tau1: 0.0, w: vec![1.0; max_m + 1] }
    }
}

/// Which qubit state the atom is in during a reflection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomState {
    Zero,
    One,
}

/// Amplitude reflection coefficient of a photon at detuning `delta` off a
/// cavity whose atom is in `state`.
///
/// For the bare cavity (`|0>`):
/// `L0 = (-kappa_ex + kappa_in - i delta) / (kappa_ex + kappa_in - i delta)`;
/// the coupled case adds `g^2/(gamma - i delta)` to both numerator and
/// denominator. `|result| <= 1` for all real detunings.
pub fn response_function(params: &CavityParams, delta: f64, state: AtomState) -> Complex64 {
    let i_delta = Complex64::new(0.0, delta);
    let base = Complex64::new(params.kappa_in, 0.0) - i_delta;
    let atom = match state {
        AtomState::Zero => Complex64::new(0.0, 0.0),
        AtomState::One => {
            Complex64::new(params.g * params.g, 0.0) / (Complex64::new(params.gamma, 0.0) - i_delta)
        }
    };
    let kex = Complex64::new(params.kappa_ex, 0.0);
    (base - kex + atom) / (base + kex + atom)
}

fn checked_ratio(num: f64, den: f64, what: &str) -> Result<f64, CavityError> {
    if den == 0.0 || den.abs() < 1e-12 * num.abs() {
        return Err(CavityError::DegenerateParameters(format!(
            "{what} denominator {den} vanishes against numerator scale {num}"
        )));
    }
    Ok(num / den)
}

/// First-order pulse delays `(tau0, tau1)` of the two reflection branches.
///
/// `tau0 = 2 kappa_ex / (kappa_ex^2 - kappa_in^2)` and
/// `tau1 = 2 kappa_ex (g^2 - gamma^2) /
///         (g^4 + gamma^2 (kappa_in^2 - kappa_ex^2) + 2 g^2 gamma kappa_in)`.
pub fn reflection_delays(params: &CavityParams) -> Result<(f64, f64), CavityError> {
    params.validate()?;
    let CavityParams { g, gamma, kappa_ex, kappa_in } = *params;
    let tau0 = checked_ratio(
        2.0 * kappa_ex,
        kappa_ex * kappa_ex - kappa_in * kappa_in,
        "tau0",
    )?;
    let g2 = g * g;
    let tau1 = checked_ratio(
        2.0 * kappa_ex * (g2 - gamma * gamma),
        g2 * g2 + gamma * gamma * (kappa_in * kappa_in - kappa_ex * kappa_ex)
            + 2.0 * g2 * gamma * kappa_in,
        "tau1",
    )?;
    Ok((tau0, tau1))
}

/// Whether the pulse is comfortably longer than the CQED timescales, so the
/// first-order delay model is trustworthy.
pub fn pulse_length_is_valid(params: &CavityParams, pulse: &PulseParams) -> bool {
    pulse.pulse_length >= 10.0 * params.pulse_timescale_floor()
}

/// Closed-form Gaussian overlap for a differential delay `dtau` and pulse
/// width `lp`: `exp(-m^2 dtau^2 / (4 lp^2))`.
pub fn overlap_from_delays(dtau: f64, lp: f64, m: usize) -> f64 {
    let m = m as f64;
    (-(m * m) * dtau * dtau / (4.0 * lp * lp)).exp()
}

/// Overlap ladder `W_0..=W_max_m` from the analytic Gaussian form.
///
/// Logs a warning (and keeps going) when the pulse is shorter than ten times
/// the CQED timescale floor, where the first-order model starts to degrade.
pub fn overlap_factors(
    params: &CavityParams,
    pulse: &PulseParams,
    max_m: usize,
) -> Result<DelayProfile, CavityError> {
    if max_m < 1 {
        return Err(CavityError::InvalidParams(format!("max_m must be >= 1, got {max_m}")));
    }
    let (tau0, tau1) = reflection_delays(params)?;
    if !pulse_length_is_valid(params, pulse) {
        log::warn!(
            "pulse_length {} is below 10x the CQED timescale floor {}; \
             the first-order delay model may be inaccurate",
            pulse.pulse_length,
            params.pulse_timescale_floor()
        );
    }
    let dtau = tau0 - tau1;
    let w = (0..=max_m).map(|m| overlap_from_delays(dtau, pulse.pulse_length, m)).collect();
    Ok(DelayProfile { tau0, tau1, w })
}

/// `W_m` by direct quadrature of the shifted Gaussian envelopes instead of
/// the closed form. Integrates `f(x) f(x - m |tau0 - tau1|)` on a grid
/// spanning at least six pulse widths past both centers, halving the step
/// until the result is stable to 1e-8.
pub fn numeric_overlap(
    params: &CavityParams,
    pulse: &PulseParams,
    m: usize,
) -> Result<f64, CavityError> {
    let (tau0, tau1) = reflection_delays(params)?;
    let shift = m as f64 * (tau0 - tau1).abs();
    let lp = pulse.pulse_length;
    let lo = -6.0 * lp;
    let hi = shift + 6.0 * lp;
    // Normalized Gaussian product; its integral is the overlap.
    let integrand =
        |x: f64| ((-(x * x + (x - shift) * (x - shift)) / (2.0 * lp * lp)).exp()) / (lp * std::f64::consts::PI.sqrt());

    const TOL: f64 = 1e-8;
    let mut n = 256usize;
    let mut prev = simpson(integrand, lo, hi, n);
    loop {
        n *= 2;
        let cur = simpson(integrand, lo, hi, n);
        let change = (cur - prev).abs();
        if change <= TOL {
            return Ok(cur);
        }
        if n >= (1 << 22) {
            return Err(CavityError::GridResolution { tolerance: TOL, last_change: change });
        }
        prev = cur;
    }
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    debug_assert!(n % 2 == 0);
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let x = lo + h * k as f64;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// How the two reflection branches' survival amplitudes are folded into one
/// scalar loss probability per gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossModel {
    /// `1 - (|L0|^2 + |L1|^2) / 2`, uniform over the two atomic branches.
    #[default]
    StateAveraged,
    /// `1 - min(|L0|, |L1|)^2`.
    WorstCase,
}

/// Photon loss probability per atom-photon gate, from the on-resonance
/// reflection amplitudes.
pub fn gate_loss_probability(params: &CavityParams, model: LossModel) -> f64 {
    let r0 = response_function(params, 0.0, AtomState::Zero).norm();
    let r1 = response_function(params, 0.0, AtomState::One).norm();
    let p = match model {
        LossModel::StateAveraged => 1.0 - (r0 * r0 + r1 * r1) / 2.0,
        LossModel::WorstCase => 1.0 - r0.min(r1).powi(2),
    };
    p.clamp(0.0, 1.0)
}

/// Scalar pulse-distortion error proxy `(1 - W_1) / 2` used by the
/// operating-point optimizer. The simulation itself uses the full twirled
/// channel, not this number.
pub fn delay_error_proxy(profile: &DelayProfile) -> f64 {
    (1.0 - profile.w(1)) / 2.0
}
