//! Deterministic search for the external coupling and pulse length.
//!
//! Both `kappa_ex` and the pulse length are free knobs in an experiment:
//! stronger out-coupling cuts the time the photon dwells in the cavity but
//! raises the differential reflection delay, and longer pulses suppress the
//! delay error while exposing the atoms to more dephasing. The optimizer
//! minimizes the closed-form per-cycle error accumulation of the target
//! structure over a log grid, then shrinks the grid around the best cell
//! twice. No randomness, so a given input always lands on the same point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::{
    delay_error_proxy, gate_loss_probability, overlap_factors, overlap_from_delays,
    reflection_delays, CavityParams, LossModel, PulseParams,
};
use crate::layout::CodeLayout;
use crate::network::{estimate_accumulation, NetworkStructure};
use crate::noise::NoiseBudget;

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("no finite objective value anywhere on the search grid")]
    NoFeasiblePoint,
    #[error("invalid search input: {0}")]
    InvalidInput(String),
}

/// Everything the optimizer needs besides `kappa_ex` and the pulse length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeInputs {
    pub g: f64,
    pub gamma: f64,
    pub kappa_in: f64,
    /// Dephasing time `T2` (units of `1/gamma`); may be infinite.
    pub t2: f64,
    pub p_sw: f64,
    pub p_cir: f64,
    pub loss_model: LossModel,
    pub window_factor: f64,
}

/// Search ranges, log-spaced. The defaults span `kappa_ex` from 1e-2 to 1e4
/// (units of gamma) and pulse lengths from 1e-2 to 1e6 (units of 1/gamma).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    pub kappa_ex: (f64, f64),
    pub pulse_length: (f64, f64),
}

impl Default for SearchRange {
    fn default() -> Self {
        Self { kappa_ex: (1e-2, 1e4), pulse_length: (1e-2, 1e6) }
    }
}

const INITIAL_GRID: usize = 32;
const REFINE_GRID: usize = 17;
const REFINE_ROUNDS: usize = 2;

/// Chosen operating point with its derived noise budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub kappa_ex: f64,
    pub pulse: PulseParams,
    pub budget: NoiseBudget,
    /// Objective value (estimated error accumulation per data qubit).
    pub p_tot: f64,
    /// Set when the optimum sits on the edge of the search range.
    pub on_boundary: bool,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n).map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Dephasing rate per unit time in the accumulation estimate; the linear
/// regime of the per-cycle dephasing probability.
pub fn dephasing_rate(t2: f64) -> f64 {
    if t2.is_finite() {
        1.0 / (2.0 * t2)
    } else {
        0.0
    }
}

/// Noise budget at one candidate `(kappa_ex, pulse_length)`, or `None` when
/// the point is degenerate (e.g. `kappa_ex = kappa_in`).
pub fn budget_at(
    inputs: &OptimizeInputs,
    kappa_ex: f64,
    pulse_length: f64,
) -> Option<(NoiseBudget, PulseParams)> {
    let params = CavityParams::new(inputs.g, inputs.gamma, kappa_ex, inputs.kappa_in).ok()?;
    let pulse = PulseParams::new(pulse_length, inputs.window_factor).ok()?;
    let (tau0, tau1) = reflection_delays(&params).ok()?;
    let p_cav = gate_loss_probability(&params, inputs.loss_model);
    let w1 = overlap_from_delays(tau0 - tau1, pulse_length, 1);
    let budget = NoiseBudget {
        p_cav,
        p_del: (1.0 - w1) / 2.0,
        p_sw: inputs.p_sw,
        p_cir: inputs.p_cir,
        p_dep: dephasing_rate(inputs.t2),
        profile: crate::cavity::DelayProfile {
            tau0,
            tau1,
            w: (0..=4).map(|m| overlap_from_delays(tau0 - tau1, pulse_length, m)).collect(),
        },
    };
    Some((budget, pulse))
}

/// Minimizes the structure's error accumulation over the default range.
pub fn optimize_operating_point(
    inputs: &OptimizeInputs,
    layout: &CodeLayout,
    structure: &NetworkStructure,
) -> Result<OperatingPoint, OptimizeError> {
    optimize_with_objective(inputs, SearchRange::default(), |kappa_ex, pulse_length| {
        let (budget, pulse) = budget_at(inputs, kappa_ex, pulse_length)?;
        Some(estimate_accumulation(layout, structure, &budget, &pulse))
    })
}

/// Same search driven by a caller-supplied objective. Returns the argmin and
/// the budget evaluated there.
pub fn optimize_with_objective(
    inputs: &OptimizeInputs,
    range: SearchRange,
    objective: impl Fn(f64, f64) -> Option<f64>,
) -> Result<OperatingPoint, OptimizeError> {
    if !(range.kappa_ex.0 > 0.0 && range.kappa_ex.1 > range.kappa_ex.0) {
        return Err(OptimizeError::InvalidInput(format!("kappa_ex range {:?}", range.kappa_ex)));
    }
    if !(range.pulse_length.0 > 0.0 && range.pulse_length.1 > range.pulse_length.0) {
        return Err(OptimizeError::InvalidInput(format!(
            "pulse_length range {:?}",
            range.pulse_length
        )));
    }

    let mut kappa_lo = range.kappa_ex.0;
    let mut kappa_hi = range.kappa_ex.1;
    let mut lp_lo = range.pulse_length.0;
    let mut lp_hi = range.pulse_length.1;
    let mut best: Option<(f64, f64, f64)> = None;

    for round in 0..=REFINE_ROUNDS {
        let n = if round == 0 { INITIAL_GRID } else { REFINE_GRID };
        let kappas = log_grid(kappa_lo, kappa_hi, n);
        let lps = log_grid(lp_lo, lp_hi, n);
        let mut best_idx = None;
        for (i, &kex) in kappas.iter().enumerate() {
            for (j, &lp) in lps.iter().enumerate() {
                let Some(p) = objective(kex, lp) else { continue };
                if !p.is_finite() {
                    continue;
                }
                if best.map_or(true, |(bp, _, _)| p < bp) {
                    best = Some((p, kex, lp));
                    best_idx = Some((i, j));
                }
            }
        }
        let Some((bi, bj)) = best_idx else {
            if round == 0 {
                return Err(OptimizeError::NoFeasiblePoint);
            }
            break; // refinement found nothing better; keep the incumbent
        };
        // Shrink to the cells adjacent to the winner.
        kappa_lo = kappas[bi.saturating_sub(1)];
        kappa_hi = kappas[(bi + 1).min(n - 1)];
        lp_lo = lps[bj.saturating_sub(1)];
        lp_hi = lps[(bj + 1).min(n - 1)];
    }

    let (p_tot, kappa_ex, pulse_length) = best.ok_or(OptimizeError::NoFeasiblePoint)?;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs();
    let on_boundary = rel(kappa_ex, range.kappa_ex.0)
        || rel(kappa_ex, range.kappa_ex.1)
        || rel(pulse_length, range.pulse_length.0)
        || rel(pulse_length, range.pulse_length.1);
    if on_boundary {
        log::warn!(
            "operating point sits on the search boundary: kappa_ex={kappa_ex}, L_p={pulse_length}"
        );
    }

    let params = CavityParams::new(inputs.g, inputs.gamma, kappa_ex, inputs.kappa_in)
        .map_err(|e| OptimizeError::InvalidInput(e.to_string()))?;
    let pulse = PulseParams::new(pulse_length, inputs.window_factor)
        .map_err(|e| OptimizeError::InvalidInput(e.to_string()))?;
    let profile = overlap_factors(&params, &pulse, 4)
        .map_err(|e| OptimizeError::InvalidInput(e.to_string()))?;
    let budget = NoiseBudget {
        p_cav: gate_loss_probability(&params, inputs.loss_model),
        p_del: delay_error_proxy(&profile),
        p_sw: inputs.p_sw,
        p_cir: inputs.p_cir,
        p_dep: dephasing_rate(inputs.t2),
        profile,
    };
    Ok(OperatingPoint { kappa_ex, pulse, budget, p_tot, on_boundary })
}
