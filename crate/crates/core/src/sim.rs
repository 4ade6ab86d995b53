//! Pauli-frame Monte Carlo engine.
//!
//! Every noise process left after twirling is a stochastic Pauli plus a
//! classical syndrome flip, so a shot only needs to track the accumulated
//! Pauli error (the frame) as two bit masks. Each shot runs `cycles` noisy
//! syndrome cycles followed by one noiseless cycle, and reports the syndrome
//! matrix (0/1 measured, 2 photon lost) together with the residual frame.
//!
//! Shots are embarrassingly parallel: shot `i` draws from a ChaCha stream
//! keyed by `(master_seed, i)`, so results are bit-identical no matter how
//! work is distributed over threads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::DecoderKind;
use crate::layout::{CodeLayout, StabKind};
use crate::network::{cycle_time, NetworkStructure, StructureKind};
use crate::noise::{
    build_twirled_channel, dephasing_rule, loss_backaction, sample_loss_location, LossEvent,
    NoiseBudget, NoiseError, TwirledChannel,
};

/// Packed bit vector over data qubits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bits {
    words: Vec<u64>,
    len: usize,
}

impl Bits {
    pub fn new(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn toggle(&mut self, i: usize) {
        self.words[i / 64] ^= 1 << (i % 64);
    }

    pub fn xor_with(&mut self, other: &Bits) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    pub fn parity_over(&self, support: &[usize]) -> bool {
        support.iter().fold(false, |acc, &q| acc ^ self.get(q))
    }

    pub fn set_indices(&mut self, indices: &[usize]) {
        for &i in indices {
            self.toggle(i);
        }
    }
}

/// Accumulated Pauli error: X and Z components as independent masks
/// (composition is bitwise XOR, so frames are self-inverse).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliFrame {
    pub x: Bits,
    pub z: Bits,
}

impl PauliFrame {
    pub fn new(n: usize) -> Self {
        Self { x: Bits::new(n), z: Bits::new(n) }
    }

    pub fn is_identity(&self) -> bool {
        !self.x.any() && !self.z.any()
    }

    pub fn xor_with(&mut self, other: &PauliFrame) {
        self.x.xor_with(&other.x);
        self.z.xor_with(&other.z);
    }
}

/// Syndrome matrix and outcome of one shot. `2` marks a lost photon and
/// appears only in the noisy cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    /// `syndromes[cycle][stabilizer]` over the noisy cycles.
    pub syndromes: Vec<Vec<u8>>,
    /// Noiseless final cycle; always the support parity of the residual.
    pub final_syndrome: Vec<u8>,
    /// Whether the raw residual frame flips (logical X, logical Z).
    pub logical_flip: (bool, bool),
    /// Residual Pauli frame after the noisy cycles.
    pub frame: PauliFrame,
    /// Per-cycle frame snapshots, kept only in instrumented runs.
    pub cycle_frames: Option<Vec<PauliFrame>>,
}

/// One simulation point, sufficient to reproduce it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub d: usize,
    /// Noisy cycles per shot; defaults to `d`.
    pub cycles: usize,
    pub structure: StructureKind,
    pub budget: NoiseBudget,
    pub decoder: DecoderKind,
    pub alpha: f64,
    pub shots: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), NoiseError> {
        if self.shots < 1 {
            return Err(NoiseError::InvalidArgument("shots must be >= 1".into()));
        }
        if self.cycles < 1 {
            return Err(NoiseError::InvalidArgument("cycles must be >= 1".into()));
        }
        self.budget.validate()
    }
}

/// Twirled channels for the two stabilizer weights of the planar code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub w3: TwirledChannel,
    pub w4: TwirledChannel,
}

impl ChannelSet {
    pub fn build(budget: &NoiseBudget) -> Result<Self, NoiseError> {
        Ok(Self {
            w3: build_twirled_channel(&budget.profile, 3)?,
            w4: build_twirled_channel(&budget.profile, 4)?,
        })
    }

    pub fn for_weight(&self, w: usize) -> &TwirledChannel {
        match w {
            3 => &self.w3,
            4 => &self.w4,
            _ => panic!("unsupported stabilizer weight {w}"),
        }
    }
}

/// Everything a shot needs, precomputed once per run point.
pub struct SimContext<'a> {
    pub layout: &'a CodeLayout,
    pub structure: &'a NetworkStructure,
    pub budget: &'a NoiseBudget,
    pub channels: ChannelSet,
    /// Per-qubit Z probability at each cycle start.
    pub p_z: f64,
    pub cycles: usize,
    /// Keep per-cycle frame snapshots in records.
    pub instrument: bool,
}

impl<'a> SimContext<'a> {
    pub fn new(
        layout: &'a CodeLayout,
        structure: &'a NetworkStructure,
        budget: &'a NoiseBudget,
        pulse: &crate::cavity::PulseParams,
        cycles: usize,
    ) -> Result<Self, NoiseError> {
        let channels = ChannelSet::build(budget)?;
        let p_z = if budget.p_dep > 0.0 {
            let t2 = 1.0 / (2.0 * budget.p_dep);
            dephasing_rule(t2, cycle_time(structure, pulse))?
        } else {
            0.0
        };
        Ok(Self { layout, structure, budget, channels, p_z, cycles, instrument: false })
    }
}

/// RNG stream for one shot: counter-based so any subset of shots can be
/// simulated independently and identically.
pub fn shot_rng(master_seed: u64, shot: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&shot.to_le_bytes());
    seed[16..24].copy_from_slice(b"cavnetsh");
    ChaCha12Rng::from_seed(seed)
}

/// Mask applied to the frame component matching the stabilizer kind: delay
/// and loss backactions of a Z check are Z strings, of an X check X strings.
fn apply_support_mask(frame: &mut PauliFrame, kind: StabKind, support: &[usize], mask: u8) {
    let target = match kind {
        StabKind::X => &mut frame.x,
        StabKind::Z => &mut frame.z,
    };
    for (pos, &q) in support.iter().enumerate() {
        if mask >> pos & 1 == 1 {
            target.toggle(q);
        }
    }
}

/// Support parity the measurement reads: an X check detects Z errors and
/// vice versa.
fn read_parity(frame: &PauliFrame, kind: StabKind, support: &[usize]) -> bool {
    match kind {
        StabKind::X => frame.z.parity_over(support),
        StabKind::Z => frame.x.parity_over(support),
    }
}

/// Whether `frame` flips (logical X, logical Z).
pub fn logical_flips(frame: &PauliFrame, layout: &CodeLayout) -> (bool, bool) {
    (
        frame.z.parity_over(&layout.logical_x),
        frame.x.parity_over(&layout.logical_z),
    )
}

/// Runs one shot: `cycles` noisy syndrome cycles then a noiseless one.
pub fn simulate_shot<R: Rng + ?Sized>(ctx: &SimContext, rng: &mut R) -> ShotRecord {
    let n = ctx.layout.data_count();
    let n_stabs = ctx.layout.stabilizer_count();
    let mut frame = PauliFrame::new(n);
    let mut syndromes = Vec::with_capacity(ctx.cycles);
    let mut cycle_frames = ctx.instrument.then(Vec::new);

    for _ in 0..ctx.cycles {
        if ctx.p_z > 0.0 {
            for q in 0..n {
                if rng.random::<f64>() < ctx.p_z {
                    frame.z.toggle(q);
                }
            }
        }
        let mut row = vec![0u8; n_stabs];
        for round in &ctx.structure.schedule {
            for &sid in round {
                let stab = &ctx.layout.stabilizers[sid];
                match sample_loss_location(&ctx.structure.paths[sid], ctx.budget, rng) {
                    Some(event) => {
                        let rule = loss_backaction(event, stab.weight())
                            .expect("loss stage within weight");
                        if rule.prefix_mask != 0 && rng.random::<f64>() < rule.prob {
                            apply_support_mask(&mut frame, stab.kind, &stab.support, rule.prefix_mask);
                        }
                        row[sid] = 2;
                    }
                    None => {
                        let (mask, flip) =
                            ctx.channels.for_weight(stab.weight()).sample(rng);
                        if mask != 0 {
                            apply_support_mask(&mut frame, stab.kind, &stab.support, mask);
                        }
                        let parity = read_parity(&frame, stab.kind, &stab.support);
                        row[sid] = u8::from(parity ^ flip);
                    }
                }
            }
        }
        syndromes.push(row);
        if let Some(frames) = cycle_frames.as_mut() {
            frames.push(frame.clone());
        }
    }

    let final_syndrome = (0..n_stabs)
        .map(|sid| {
            let stab = &ctx.layout.stabilizers[sid];
            u8::from(read_parity(&frame, stab.kind, &stab.support))
        })
        .collect();
    let logical_flip = logical_flips(&frame, ctx.layout);
    ShotRecord { syndromes, final_syndrome, logical_flip, frame, cycle_frames }
}

/// Force a specific loss (with or without its backaction coin) on one
/// measurement of one cycle, with all sampled noise off. Fault-injection
/// harness for correctability tests.
pub struct ForcedLoss {
    pub stabilizer: usize,
    pub cycle: usize,
    pub event: LossEvent,
    pub apply_backaction: bool,
}

/// Deterministic shot with hand-placed faults: `z_errors`/`x_errors` are
/// (cycle, qubit) dephasing-style injections at cycle start, `forced_loss`
/// replaces the sampling for that one measurement, and `forced_event`
/// injects a twirled-channel outcome (mask, flip) at one measurement.
#[derive(Default)]
pub struct FaultInjection {
    pub z_errors: Vec<(usize, usize)>,
    pub x_errors: Vec<(usize, usize)>,
    pub forced_loss: Option<ForcedLoss>,
    pub forced_event: Option<(usize, usize, u8, bool)>,
}

/// Noise-free shot plus the given injected faults.
pub fn simulate_injected(ctx: &SimContext, injection: &FaultInjection) -> ShotRecord {
    let n = ctx.layout.data_count();
    let n_stabs = ctx.layout.stabilizer_count();
    let mut frame = PauliFrame::new(n);
    let mut syndromes = Vec::with_capacity(ctx.cycles);

    for cycle in 0..ctx.cycles {
        for &(c, q) in &injection.z_errors {
            if c == cycle {
                frame.z.toggle(q);
            }
        }
        for &(c, q) in &injection.x_errors {
            if c == cycle {
                frame.x.toggle(q);
            }
        }
        let mut row = vec![0u8; n_stabs];
        for round in &ctx.structure.schedule {
            for &sid in round {
                let stab = &ctx.layout.stabilizers[sid];
                let lost = injection
                    .forced_loss
                    .as_ref()
                    .filter(|f| f.stabilizer == sid && f.cycle == cycle);
                if let Some(f) = lost {
                    let rule =
                        loss_backaction(f.event, stab.weight()).expect("stage within weight");
                    if f.apply_backaction && rule.prefix_mask != 0 {
                        apply_support_mask(&mut frame, stab.kind, &stab.support, rule.prefix_mask);
                    }
                    row[sid] = 2;
                    continue;
                }
                let mut flip = false;
                if let Some((fsid, fcycle, mask, fl)) = injection.forced_event {
                    if fsid == sid && fcycle == cycle {
                        if mask != 0 {
                            apply_support_mask(&mut frame, stab.kind, &stab.support, mask);
                        }
                        flip = fl;
                    }
                }
                let parity = read_parity(&frame, stab.kind, &stab.support);
                row[sid] = u8::from(parity ^ flip);
            }
        }
        syndromes.push(row);
    }

    let final_syndrome = (0..n_stabs)
        .map(|sid| {
            let stab = &ctx.layout.stabilizers[sid];
            u8::from(read_parity(&frame, stab.kind, &stab.support))
        })
        .collect();
    let logical_flip = logical_flips(&frame, ctx.layout);
    ShotRecord { syndromes, final_syndrome, logical_flip, frame, cycle_frames: None }
}

/// 95% two-sided z quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Logical-error summary of a batch of decoded shots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub shots: u64,
    pub failures: u64,
    /// Process fidelity: probability of no residual logical flip.
    pub f_pro: f64,
    /// Failure probability over the whole run.
    pub p_logical: f64,
    pub p_logical_ci: (f64, f64),
    /// `1 - f_pro^(1/cycles)`.
    pub per_cycle: f64,
    pub per_cycle_ci: (f64, f64),
}

/// Turns a failure count into fidelity and per-cycle rates with Wilson 95%
/// intervals mapped through the same transform.
pub fn logical_error_rate(failures: u64, shots: u64, cycles: usize) -> RateEstimate {
    assert!(shots > 0, "zero-shot estimate");
    let p = failures as f64 / shots as f64;
    let f_pro = 1.0 - p;
    let inv = 1.0 / cycles as f64;
    let per_cycle = 1.0 - f_pro.powf(inv);
    let (lo, hi) = wilson_interval(failures, shots, Z_95);
    RateEstimate {
        shots,
        failures,
        f_pro,
        p_logical: p,
        p_logical_ci: (lo, hi),
        per_cycle,
        per_cycle_ci: (1.0 - (1.0 - lo).powf(inv), 1.0 - (1.0 - hi).powf(inv)),
    }
}

/// True when the two 95% intervals do not overlap.
pub fn ci_disjoint(a: (f64, f64), b: (f64, f64)) -> bool {
    a.1 < b.0 || b.1 < a.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{DelayProfile, PulseParams};
    use crate::layout::build_layout;
    use crate::network::assign_cavities;
    use num_complex::Complex64;

    fn quiet_budget() -> NoiseBudget {
        NoiseBudget::noiseless()
    }

    fn pulse() -> PulseParams {
        PulseParams::new(1.0, 6.0).unwrap()
    }

    #[test]
    fn noiseless_shots_are_silent() {
        let layout = build_layout(3).unwrap();
        for kind in
            [StructureKind::FourCavity, StructureKind::DCavity, StructureKind::NCavity]
        {
            let s = assign_cavities(&layout, kind).unwrap();
            let budget = quiet_budget();
            let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 3).unwrap();
            let mut rng = shot_rng(42, 0);
            let rec = simulate_shot(&ctx, &mut rng);
            assert!(rec.syndromes.iter().flatten().all(|&v| v == 0));
            assert!(rec.final_syndrome.iter().all(|&v| v == 0));
            assert_eq!(rec.logical_flip, (false, false));
            assert!(rec.frame.is_identity());
        }
    }

    #[test]
    fn single_bulk_z_error_lights_its_two_x_checks_every_cycle() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
        let budget = quiet_budget();
        let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 3).unwrap();

        // A bulk qubit: coordinates (1, 1), inside the d = 3 patch.
        let q = layout.coords.iter().position(|&c| c == (1, 1)).unwrap();
        let expected = layout.checks_on(q, StabKind::X);
        assert_eq!(expected.len(), 2);

        let rec = simulate_injected(
            &ctx,
            &FaultInjection { z_errors: vec![(1, q)], ..Default::default() },
        );
        for (cycle, row) in rec.syndromes.iter().enumerate() {
            for (sid, &v) in row.iter().enumerate() {
                let want = u8::from(cycle >= 1 && expected.contains(&sid));
                assert_eq!(v, want, "cycle {cycle} stab {sid}");
            }
        }
        for (sid, &v) in rec.final_syndrome.iter().enumerate() {
            assert_eq!(v, u8::from(expected.contains(&sid)));
        }
    }

    #[test]
    fn forced_loss_marks_syndrome_and_flips_a_fair_coin_on_the_prefix() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
        // Weight-4 Z stabilizer.
        let sid = layout
            .stabilizers
            .iter()
            .position(|st| st.kind == StabKind::Z && st.weight() == 4)
            .unwrap();
        let support = layout.stabilizers[sid].support.clone();

        let mut budget = quiet_budget();
        budget.p_cav = 0.0; // loss is forced per shot, not sampled
        let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 3).unwrap();

        // Deterministic branch: backaction applied.
        let rec = simulate_injected(
            &ctx,
            &FaultInjection {
                forced_loss: Some(ForcedLoss {
                    stabilizer: sid,
                    cycle: 0,
                    event: LossEvent { stage: 2 },
                    apply_backaction: true,
                }),
                ..Default::default()
            },
        );
        assert_eq!(rec.syndromes[0][sid], 2);
        assert!(rec.frame.z.get(support[0]) && rec.frame.z.get(support[1]));
        assert!(!rec.frame.z.get(support[2]) && !rec.frame.z.get(support[3]));

        // Sampled branch: Z1 Z2 appears with frequency 1/2.
        let mut budget = quiet_budget();
        budget.p_cav = 1.0;
        let single = {
            let layout = build_layout(2).unwrap();
            let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
            let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 1).unwrap();
            let n = 100_000u64;
            let mut hits = 0u64;
            for shot in 0..n {
                let mut rng = shot_rng(9, shot);
                let rec = simulate_shot(&ctx, &mut rng);
                assert!(rec.syndromes[0].iter().all(|&v| v == 2));
                if rec.frame.z.any() || rec.frame.x.any() {
                    hits += 1;
                }
            }
            hits as f64 / n as f64
        };
        // Every measurement is lost at the first cavity (stage 1), so each
        // of the four checks flips a fair coin on a single-qubit prefix;
        // at least one lands heads with probability 1 - 2^-4, minus the
        // rare cancellations when two coins hit the same qubit.
        assert!(single > 0.65 && single < 0.99, "backaction frequency {single}");
    }

    #[test]
    fn stage_two_backaction_frequency_is_half() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
        let sid = layout
            .stabilizers
            .iter()
            .position(|st| st.kind == StabKind::Z && st.weight() == 4)
            .unwrap();
        let budget = quiet_budget();
        let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 1).unwrap();
        let n = 100_000u64;
        let mut applied = 0u64;
        for shot in 0..n {
            let mut rng = shot_rng(1234, shot);
            // Re-draw the coin the way simulate_shot would.
            let rule = loss_backaction(LossEvent { stage: 2 }, 4).unwrap();
            let rec = simulate_injected(
                &ctx,
                &FaultInjection {
                    forced_loss: Some(ForcedLoss {
                        stabilizer: sid,
                        cycle: 0,
                        event: LossEvent { stage: 2 },
                        apply_backaction: rng.random::<f64>() < rule.prob,
                    }),
                    ..Default::default()
                },
            );
            assert_eq!(rec.syndromes[0][sid], 2);
            if rec.frame.z.any() {
                applied += 1;
            }
        }
        let freq = applied as f64 / n as f64;
        let sigma = (0.25f64 / n as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * sigma, "frequency {freq}");
    }

    #[test]
    fn full_support_backaction_never_flips_logicals() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
        let budget = quiet_budget();
        let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 2).unwrap();
        for (sid, stab) in layout.stabilizers.iter().enumerate() {
            let rec = simulate_injected(
                &ctx,
                &FaultInjection {
                    forced_loss: Some(ForcedLoss {
                        stabilizer: sid,
                        cycle: 0,
                        event: LossEvent { stage: stab.weight() },
                        apply_backaction: true,
                    }),
                    ..Default::default()
                },
            );
            assert_eq!(rec.logical_flip, (false, false), "stab {sid}");
            // The full-support mask is the stabilizer itself: invisible to
            // every later measurement.
            assert!(rec.final_syndrome.iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn syndrome_value_two_frequency_matches_path_loss() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
        let mut budget = quiet_budget();
        budget.p_cav = 0.01;
        budget.p_sw = 0.002;
        budget.p_cir = 0.001;
        let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 1).unwrap();

        let sid = layout
            .stabilizers
            .iter()
            .position(|st| st.weight() == 4)
            .unwrap();
        let path = &s.paths[sid];
        let survive = (1.0 - budget.p_cav).powi(path.n_cav() as i32)
            * (1.0 - budget.p_sw).powi(path.n_sw() as i32)
            * (1.0 - budget.p_cir).powi(path.n_cir() as i32);
        let p_loss = 1.0 - survive;

        let n = 100_000u64;
        let lost = (0..n)
            .filter(|&shot| {
                let mut rng = shot_rng(5, shot);
                simulate_shot(&ctx, &mut rng).syndromes[0][sid] == 2
            })
            .count() as f64;
        let freq = lost / n as f64;
        let sigma = (p_loss * (1.0 - p_loss) / n as f64).sqrt();
        assert!((freq - p_loss).abs() < 3.0 * sigma, "freq {freq} expected {p_loss}");
    }

    #[test]
    fn instrumented_syndromes_match_frame_parity_without_loss_or_flips() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::NCavity).unwrap();
        // Dephasing only: ideal profile means no flips, no loss.
        let mut budget = quiet_budget();
        budget.p_dep = 1e-3;
        let mut ctx = SimContext::new(&layout, &s, &budget, &pulse(), 4).unwrap();
        ctx.instrument = true;
        assert!(ctx.p_z > 0.0);
        for shot in 0..64u64 {
            let mut rng = shot_rng(31, shot);
            let rec = simulate_shot(&ctx, &mut rng);
            let frames = rec.cycle_frames.as_ref().unwrap();
            for (cycle, row) in rec.syndromes.iter().enumerate() {
                for (sid, &v) in row.iter().enumerate() {
                    let stab = &layout.stabilizers[sid];
                    let want = u8::from(read_parity(&frames[cycle], stab.kind, &stab.support));
                    assert_eq!(v, want, "shot {shot} cycle {cycle} stab {sid}");
                }
            }
            // The noiseless cycle always equals the residual parity.
            for (sid, &v) in rec.final_syndrome.iter().enumerate() {
                let stab = &layout.stabilizers[sid];
                assert_eq!(v, u8::from(read_parity(&rec.frame, stab.kind, &stab.support)));
            }
        }
    }

    #[test]
    fn shots_are_reproducible_and_independent_of_evaluation_order() {
        let layout = build_layout(3).unwrap();
        let s = assign_cavities(&layout, StructureKind::DCavity).unwrap();
        let mut budget = quiet_budget();
        budget.p_cav = 0.02;
        budget.p_dep = 1e-4;
        budget.profile = DelayProfile {
            tau0: 0.0,
            tau1: 0.0,
            w: (0..=4).map(|m| 0.995f64.powi((m * m) as i32)).collect(),
        };
        let ctx = SimContext::new(&layout, &s, &budget, &pulse(), 3).unwrap();

        let forward: Vec<ShotRecord> = (0..32)
            .map(|i| simulate_shot(&ctx, &mut shot_rng(77, i)))
            .collect();
        let mut backward: Vec<ShotRecord> = (0..32)
            .rev()
            .map(|i| simulate_shot(&ctx, &mut shot_rng(77, i)))
            .collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn rate_arithmetic_matches_hand_values() {
        let est = logical_error_rate(100, 100_000, 5);
        assert!((est.f_pro - 0.999).abs() < 1e-12);
        assert!((est.per_cycle - 2.0009e-4).abs() < 1e-7);

        let est = logical_error_rate(0, 10_000, 3);
        assert_eq!(est.per_cycle, 0.0);
        assert!(est.per_cycle_ci.0 == 0.0);
        assert!(est.p_logical_ci.1 > 3e-4 && est.p_logical_ci.1 < 4e-4);

        let est = logical_error_rate(50, 50, 4);
        assert_eq!(est.f_pro, 0.0);
        assert_eq!(est.per_cycle, 1.0);
    }

    #[test]
    #[should_panic(expected = "zero-shot")]
    fn zero_shots_panics() {
        logical_error_rate(0, 0, 1);
    }

    /// For a Pauli channel on one half of a Bell pair, the Bell overlap is
    /// exactly the identity-component probability; this is the relation that
    /// lets a failure count stand in for process fidelity.
    #[test]
    fn bell_fidelity_equals_identity_probability() {
        let paulis: [[[Complex64; 2]; 2]; 4] = [
            [[1.0.into(), 0.0.into()], [0.0.into(), 1.0.into()]],
            [[0.0.into(), 1.0.into()], [1.0.into(), 0.0.into()]],
            [
                [0.0.into(), Complex64::new(0.0, -1.0)],
                [Complex64::new(0.0, 1.0), 0.0.into()],
            ],
            [[1.0.into(), 0.0.into()], [0.0.into(), Complex64::new(-1.0, 0.0)]],
        ];
        let probs = [0.83, 0.07, 0.04, 0.06];
        // rho = sum_k p_k (P_k x I) |Phi><Phi| (P_k x I)
        let mut rho = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (p, pauli) in probs.iter().zip(&paulis) {
            // (P x I)|Phi> with |Phi> = (|00> + |11>)/sqrt(2)
            let mut v = [Complex64::new(0.0, 0.0); 4];
            for a in 0..2 {
                for b in 0..2 {
                    // basis index 2a + b; |Phi> has amplitude 1/sqrt2 at a == b
                    for ap in 0..2 {
                        v[2 * a + b] += pauli[a][ap]
                            * if ap == b { Complex64::new(1.0 / 2f64.sqrt(), 0.0) } else { 0.0.into() };
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    rho[i][j] += Complex64::new(*p, 0.0) * v[i] * v[j].conj();
                }
            }
        }
        let mut fidelity = Complex64::new(0.0, 0.0);
        for i in [0usize, 3] {
            for j in [0usize, 3] {
                fidelity += rho[i][j] * 0.5;
            }
        }
        assert!((fidelity.re - probs[0]).abs() < 1e-12);
        assert!(fidelity.im.abs() < 1e-14);
    }
}
