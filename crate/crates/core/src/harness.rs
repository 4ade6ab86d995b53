//! Experiment orchestration: run points, campaigns over code distances,
//! requirement-boundary searches and the alpha calibration sweep.
//!
//! Everything here is deterministic for a fixed configuration: shot `i`
//! always draws from the stream keyed by `(seed, i)` and aggregation is a
//! commutative sum, so thread count and scheduling cannot change a result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ExperimentConfig, SyntheticSection};
use crate::decoder::{decode, Correction, DecodeError, DecoderContext, DecoderKind};
use crate::layout::{build_layout, CodeLayout, LayoutError};
use crate::network::{
    assign_cavities, cycle_time, estimate_accumulation, NetworkError, NetworkStructure,
    StructureKind,
};
use crate::noise::{NoiseBudget, NoiseError};
use crate::optimize::{
    budget_at, dephasing_rate, optimize_with_objective, OperatingPoint, OptimizeError,
    OptimizeInputs, SearchRange,
};
use crate::sim::{
    ci_disjoint, logical_error_rate, logical_flips, shot_rng, simulate_shot, RateEstimate,
    ShotRecord, SimContext,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("boundary search could not bracket a crossing: {0}")]
    Unbracketed(String),
}

/// One fully-resolved simulation point, ready to run shots.
pub struct PreparedPoint {
    pub layout: CodeLayout,
    pub structure: NetworkStructure,
    pub operating: OperatingPoint,
    pub cycles: usize,
}

/// Resolves layout, structure and operating point for one distance.
pub fn prepare_point(cfg: &ExperimentConfig, d: usize) -> Result<PreparedPoint, HarnessError> {
    let layout = build_layout(d)?;
    let mut structure = assign_cavities(&layout, cfg.structure.kind)?;
    structure.round_latency = cfg.structure.round_latency;

    let inputs = OptimizeInputs {
        g: cfg.cavity.g,
        gamma: cfg.cavity.gamma,
        kappa_in: cfg.cavity.kappa_in,
        t2: cfg.noise.t2,
        p_sw: cfg.noise.p_sw,
        p_cir: cfg.noise.p_cir,
        loss_model: cfg.cavity.loss_model,
        window_factor: cfg.pulse.window_factor,
    };

    let mut operating = match (cfg.pulse.kappa_ex, cfg.pulse.pulse_length) {
        (Some(kappa_ex), Some(pulse_length)) => {
            let (budget, pulse) = budget_at(&inputs, kappa_ex, pulse_length).ok_or_else(|| {
                OptimizeError::InvalidInput(format!(
                    "pinned operating point kappa_ex={kappa_ex}, L_p={pulse_length} is degenerate"
                ))
            })?;
            let p_tot = estimate_accumulation(&layout, &structure, &budget, &pulse);
            OperatingPoint { kappa_ex, pulse, budget, p_tot, on_boundary: false }
        }
        (pinned_kappa, pinned_lp) => {
            let mut range = SearchRange::default();
            // Pinning one knob collapses its search interval.
            if let Some(k) = pinned_kappa {
                range.kappa_ex = (k, k * (1.0 + 1e-12));
            }
            if let Some(lp) = pinned_lp {
                range.pulse_length = (lp, lp * (1.0 + 1e-12));
            }
            optimize_with_objective(&inputs, range, |kappa_ex, pulse_length| {
                let (budget, pulse) = budget_at(&inputs, kappa_ex, pulse_length)?;
                Some(estimate_accumulation(&layout, &structure, &budget, &pulse))
            })?
        }
    };

    if let Some(synth) = &cfg.synthetic {
        operating.budget = synthetic_budget(synth, cfg.noise.t2);
    }

    let cycles = if cfg.code.cycles == 0 { d } else { cfg.code.cycles };
    Ok(PreparedPoint { layout, structure, operating, cycles })
}

/// Flat budget for the synthetic sweep: a total per-path loss spread over
/// four gates and a delay channel of fixed strength, ignoring the cavity.
fn synthetic_budget(synth: &SyntheticSection, t2: f64) -> NoiseBudget {
    let p_cav = 1.0 - (1.0 - synth.loss).powf(0.25);
    let w1 = 1.0 - 2.0 * synth.infidelity;
    NoiseBudget {
        p_cav,
        p_del: synth.infidelity,
        p_sw: 0.0,
        p_cir: 0.0,
        p_dep: dephasing_rate(t2),
        profile: crate::cavity::DelayProfile {
            tau0: 0.0,
            tau1: 0.0,
            w: (0..=4).map(|m| w1.powi((m * m) as i32)).collect(),
        },
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub g: f64,
    pub gamma: f64,
    pub kappa_in: f64,
    pub kappa_ex: f64,
    pub pulse_length: f64,
    pub window_factor: f64,
    pub structure: StructureKind,
    pub n_cavities: usize,
    pub depth: usize,
    pub cycle_time: f64,
    pub t2: f64,
    pub p_sw: f64,
    pub p_cir: f64,
    pub decoder: DecoderKind,
    pub alpha: f64,
    pub d: usize,
    pub cycles: usize,
    pub shots: u64,
    pub seed: u64,
    pub p_cav: f64,
    pub p_del: f64,
    pub p_dep: f64,
    pub p_z_per_cycle: f64,
    pub p_tot_estimate: f64,
    pub failures: u64,
    pub p_logical: f64,
    pub p_logical_lo: f64,
    pub p_logical_hi: f64,
    pub per_cycle: f64,
    pub per_cycle_lo: f64,
    pub per_cycle_hi: f64,
    /// `p_L(d) / p_L(previous smaller d)` within one campaign, if defined.
    pub ratio_vs_prev: Option<f64>,
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

/// Simulate and decode `shots` shots, returning the failure count.
pub fn count_failures(
    layout: &CodeLayout,
    sim: &SimContext,
    dec: &DecoderContext,
    decoder: DecoderKind,
    alpha: f64,
    shots: u64,
    seed: u64,
) -> u64 {
    (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = shot_rng(seed, i);
            let record = simulate_shot(sim, &mut rng);
            let correction = decode(decoder, &record, dec, layout, alpha);
            let mut residual = record.frame.clone();
            residual.xor_with(&correction.frame);
            let (fx, fz) = logical_flips(&residual, layout);
            u64::from(fx || fz)
        })
        .sum()
}

/// Runs one distance of the configured experiment.
pub fn run_single_point(cfg: &ExperimentConfig, d: usize) -> Result<ResultRow, HarnessError> {
    let point = prepare_point(cfg, d)?;
    let sim = SimContext::new(
        &point.layout,
        &point.structure,
        &point.operating.budget,
        &point.operating.pulse,
        point.cycles,
    )?;
    let mut dec = DecoderContext::new(
        &point.layout,
        &point.structure,
        &sim.channels,
        sim.p_z,
        point.cycles,
    )?;
    dec.erasure_time_edge = cfg.decoder.erasure_time_edge;

    let failures = with_pool(cfg.run.threads, || {
        count_failures(
            &point.layout,
            &sim,
            &dec,
            cfg.decoder.kind,
            cfg.decoder.alpha,
            cfg.run.shots,
            cfg.run.seed,
        )
    });
    let est = logical_error_rate(failures, cfg.run.shots, point.cycles);
    Ok(result_row(cfg, d, &point, sim.p_z, est))
}

fn result_row(
    cfg: &ExperimentConfig,
    d: usize,
    point: &PreparedPoint,
    p_z: f64,
    est: RateEstimate,
) -> ResultRow {
    ResultRow {
        g: cfg.cavity.g,
        gamma: cfg.cavity.gamma,
        kappa_in: cfg.cavity.kappa_in,
        kappa_ex: point.operating.kappa_ex,
        pulse_length: point.operating.pulse.pulse_length,
        window_factor: point.operating.pulse.window_factor,
        structure: cfg.structure.kind,
        n_cavities: point.structure.n_cavities,
        depth: point.structure.depth(),
        cycle_time: cycle_time(&point.structure, &point.operating.pulse),
        t2: cfg.noise.t2,
        p_sw: cfg.noise.p_sw,
        p_cir: cfg.noise.p_cir,
        decoder: cfg.decoder.kind,
        alpha: cfg.decoder.alpha,
        d,
        cycles: point.cycles,
        shots: est.shots,
        seed: cfg.run.seed,
        p_cav: point.operating.budget.p_cav,
        p_del: point.operating.budget.p_del,
        p_dep: point.operating.budget.p_dep,
        p_z_per_cycle: p_z,
        p_tot_estimate: point.operating.p_tot,
        failures: est.failures,
        p_logical: est.p_logical,
        p_logical_lo: est.p_logical_ci.0,
        p_logical_hi: est.p_logical_ci.1,
        per_cycle: est.per_cycle,
        per_cycle_lo: est.per_cycle_ci.0,
        per_cycle_hi: est.per_cycle_ci.1,
        ratio_vs_prev: None,
    }
}

/// Runs every configured distance and fills the distance-to-distance rate
/// ratios.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rows: Vec<ResultRow> = Vec::with_capacity(cfg.code.distances.len());
    for &d in &cfg.code.distances {
        let mut row = run_single_point(cfg, d)?;
        if let Some(prev) = rows.last() {
            if prev.per_cycle > 0.0 {
                row.ratio_vs_prev = Some(row.per_cycle / prev.per_cycle);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Retains records and corrections for inspection dumps; memory scales with
/// `shots`, so this is a debug path.
pub fn collect_records(
    cfg: &ExperimentConfig,
    d: usize,
) -> Result<(Vec<ShotRecord>, Vec<Correction>, ResultRow), HarnessError> {
    let point = prepare_point(cfg, d)?;
    let sim = SimContext::new(
        &point.layout,
        &point.structure,
        &point.operating.budget,
        &point.operating.pulse,
        point.cycles,
    )?;
    let mut dec = DecoderContext::new(
        &point.layout,
        &point.structure,
        &sim.channels,
        sim.p_z,
        point.cycles,
    )?;
    dec.erasure_time_edge = cfg.decoder.erasure_time_edge;

    let pairs: Vec<(ShotRecord, Correction)> = with_pool(cfg.run.threads, || {
        (0..cfg.run.shots)
            .into_par_iter()
            .map(|i| {
                let mut rng = shot_rng(cfg.run.seed, i);
                let record = simulate_shot(&sim, &mut rng);
                let correction =
                    decode(cfg.decoder.kind, &record, &dec, &point.layout, cfg.decoder.alpha);
                (record, correction)
            })
            .collect()
    });
    let failures = pairs
        .iter()
        .map(|(record, correction)| {
            let mut residual = record.frame.clone();
            residual.xor_with(&correction.frame);
            let (fx, fz) = logical_flips(&residual, &point.layout);
            u64::from(fx || fz)
        })
        .sum();
    let est = logical_error_rate(failures, cfg.run.shots, point.cycles);
    let row = result_row(cfg, d, &point, sim.p_z, est);
    let (records, corrections) = pairs.into_iter().unzip();
    Ok((records, corrections, row))
}

/// Outcome of comparing `p_L(d_high)` against `p_L(d_low)` at one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioVerdict {
    /// Higher distance is significantly better (ratio < 1, disjoint CIs).
    Pass,
    /// Higher distance is significantly worse or equal.
    Fail,
    /// Intervals overlap at this shot budget.
    Undecided,
}

/// Compares per-cycle rates at two distances for the given coupling.
pub fn ratio_verdict(
    cfg: &ExperimentConfig,
    g: f64,
    d_low: usize,
    d_high: usize,
) -> Result<(RatioVerdict, ResultRow, ResultRow), HarnessError> {
    let mut probe = cfg.clone();
    probe.cavity.g = g;
    let lo = run_single_point(&probe, d_low)?;
    let hi = run_single_point(&probe, d_high)?;
    let verdict = if ci_disjoint(
        (lo.per_cycle_lo, lo.per_cycle_hi),
        (hi.per_cycle_lo, hi.per_cycle_hi),
    ) {
        if hi.per_cycle < lo.per_cycle {
            RatioVerdict::Pass
        } else {
            RatioVerdict::Fail
        }
    } else {
        RatioVerdict::Undecided
    };
    Ok((verdict, lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub kappa_in: f64,
    pub d_low: usize,
    pub d_high: usize,
    pub decoder: DecoderKind,
    pub p_sw: f64,
    pub p_cir: f64,
    /// Smallest coupling at which the larger code is significantly better.
    pub g_star: f64,
    /// Internal cooperativity at `g_star`.
    pub c_in: f64,
    /// False when the final bisection decision had overlapping intervals.
    pub resolved: bool,
    pub evaluations: usize,
}

/// For each `kappa_in` on the grid, bisect the coupling `g` (log scale) for
/// the smallest value where `p_L(d_low + 2) / p_L(d_low) < 1` holds with
/// disjoint confidence intervals.
pub fn boundary_search(cfg: &ExperimentConfig) -> Result<Vec<BoundaryRow>, HarnessError> {
    let d_low = cfg.boundary.d_low;
    let d_high = d_low + 2;
    let mut rows = Vec::new();
    for &kappa_in in &cfg.boundary.kappa_in_grid {
        let mut probe = cfg.clone();
        probe.cavity.kappa_in = kappa_in;
        let (mut g_lo, mut g_hi) = cfg.boundary.g_range;
        let mut evaluations = 0usize;
        let mut eval = |g: f64| -> Result<RatioVerdict, HarnessError> {
            evaluations += 1;
            Ok(ratio_verdict(&probe, g, d_low, d_high)?.0)
        };

        // The bracket must straddle the boundary: failing (or undecided) at
        // the bottom, passing at the top.
        if eval(g_hi)? != RatioVerdict::Pass {
            return Err(HarnessError::Unbracketed(format!(
                "kappa_in={kappa_in}: top of g range {g_hi} does not suppress errors"
            )));
        }
        if eval(g_lo)? == RatioVerdict::Pass {
            // Everything passes; the boundary sits at or below the range.
            rows.push(BoundaryRow {
                kappa_in,
                d_low,
                d_high,
                decoder: cfg.decoder.kind,
                p_sw: cfg.noise.p_sw,
                p_cir: cfg.noise.p_cir,
                g_star: g_lo,
                c_in: c_in(g_lo, kappa_in, cfg.cavity.gamma),
                resolved: true,
                evaluations,
            });
            continue;
        }

        let mut last_verdict = RatioVerdict::Pass;
        for _ in 0..cfg.boundary.iterations {
            let mid = ((g_lo.ln() + g_hi.ln()) / 2.0).exp();
            let verdict = eval(mid)?;
            last_verdict = verdict;
            match verdict {
                RatioVerdict::Pass => g_hi = mid,
                // Undecided means "not yet significantly better": push up.
                RatioVerdict::Fail | RatioVerdict::Undecided => g_lo = mid,
            }
        }
        rows.push(BoundaryRow {
            kappa_in,
            d_low,
            d_high,
            decoder: cfg.decoder.kind,
            p_sw: cfg.noise.p_sw,
            p_cir: cfg.noise.p_cir,
            g_star: g_hi,
            c_in: c_in(g_hi, kappa_in, cfg.cavity.gamma),
            resolved: last_verdict != RatioVerdict::Undecided,
            evaluations,
        });
    }
    Ok(rows)
}

fn c_in(g: f64, kappa_in: f64, gamma: f64) -> f64 {
    if kappa_in > 0.0 {
        g * g / (2.0 * kappa_in * gamma)
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub d: usize,
    pub shots: u64,
    pub failures: u64,
    pub per_cycle: f64,
    pub per_cycle_lo: f64,
    pub per_cycle_hi: f64,
}

/// Sweeps the weighted decoder's alpha at the first configured distance and
/// reports the per-cycle rates; the shipped default is the argmin.
pub fn calibrate_alpha(
    cfg: &ExperimentConfig,
    alphas: &[f64],
) -> Result<Vec<AlphaRow>, HarnessError> {
    let d = cfg.code.distances[0];
    let mut rows = Vec::new();
    for &alpha in alphas {
        let mut probe = cfg.clone();
        probe.decoder.kind = DecoderKind::Weighted;
        probe.decoder.alpha = alpha;
        let row = run_single_point(&probe, d)?;
        rows.push(AlphaRow {
            alpha,
            d,
            shots: row.shots,
            failures: row.failures,
            per_cycle: row.per_cycle,
            per_cycle_lo: row.per_cycle_lo,
            per_cycle_hi: row.per_cycle_hi,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::example();
        // Pin a clean operating point and zero every noise source.
        cfg.pulse.kappa_ex = Some(2.0);
        cfg.pulse.pulse_length = Some(50.0);
        cfg.cavity.g = 1e4;
        cfg.cavity.kappa_in = 0.0;
        cfg.noise.t2 = f64::INFINITY;
        cfg.run.shots = 200;
        cfg
    }

    #[test]
    fn zero_noise_point_never_fails() {
        for kind in [StructureKind::FourCavity, StructureKind::DCavity, StructureKind::NCavity] {
            for decoder in [DecoderKind::Uniform, DecoderKind::Weighted] {
                let mut cfg = quiet_config();
                cfg.structure.kind = kind;
                cfg.decoder.kind = decoder;
                let row = run_single_point(&cfg, 3).unwrap();
                assert_eq!(row.failures, 0, "{kind:?} {decoder:?}");
                assert_eq!(row.per_cycle, 0.0);
            }
        }
    }

    #[test]
    fn campaign_fills_ratios() {
        let mut cfg = quiet_config();
        cfg.code.distances = vec![2, 3];
        cfg.run.shots = 50;
        let rows = run_campaign(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].ratio_vs_prev.is_none());
        // Zero failures at the first distance leave the ratio undefined.
        assert!(rows[1].ratio_vs_prev.is_none());
    }

    #[test]
    fn prepared_point_is_deterministic() {
        let cfg = ExperimentConfig::example();
        let a = prepare_point(&cfg, 3).unwrap();
        let b = prepare_point(&cfg, 3).unwrap();
        assert_eq!(a.operating, b.operating);
        assert_eq!(a.structure, b.structure);
    }

    #[test]
    fn synthetic_budget_overrides_cavity_physics() {
        let mut cfg = ExperimentConfig::example();
        cfg.synthetic = Some(SyntheticSection { loss: 0.04, infidelity: 1e-3 });
        let point = prepare_point(&cfg, 3).unwrap();
        let b = &point.operating.budget;
        assert!((1.0 - (1.0 - b.p_cav).powi(4) - 0.04).abs() < 1e-12);
        assert!((b.p_del - 1e-3).abs() < 1e-15);
        assert_eq!(b.p_sw, 0.0);
    }
}
