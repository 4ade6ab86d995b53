//! Stochastic error channels for the simulation.
//!
//! Three mechanisms are modeled. Heralded photon loss applies a random
//! prefix of the stabilizer's Pauli string and erases the outcome. A
//! surviving photon's pulse-delay distortion acts as a matrix-factor channel
//! on the stabilizer support, jointly with the polarization outcome; it is
//! Pauli-twirled into a distribution over (Pauli mask, syndrome flip) pairs.
//! Finite `T2` dephases every data qubit once per cycle.
//!
//! Masks are bit strings over the stabilizer support in photon-visit order
//! (bit 0 = first atom visited). For a Z stabilizer they act as Z strings;
//! an X stabilizer uses the identical channel conjugated into X strings.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cavity::DelayProfile;
use crate::network::{Component, PhotonPath};

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("twirled probability {prob} is negative beyond numerical noise; \
             the overlap profile is not completely positive")]
    NotCompletelyPositive { prob: f64 },
}

/// Per-component error probabilities and the delay profile they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    /// Photon loss probability per atom-photon gate.
    pub p_cav: f64,
    /// Scalar pulse-distortion proxy `(1 - W_1)/2` (optimizer objective only).
    pub p_del: f64,
    /// Photon loss probability per switch.
    pub p_sw: f64,
    /// Photon loss probability per circulator.
    pub p_cir: f64,
    /// Dephasing rate per unit time, `1 / (2 T2)` in the linear regime.
    pub p_dep: f64,
    /// Reflection delays and overlap ladder at the operating point.
    pub profile: DelayProfile,
}

impl NoiseBudget {
    pub fn validate(&self) -> Result<(), NoiseError> {
        for (name, p) in [
            ("p_cav", self.p_cav),
            ("p_del", self.p_del),
            ("p_sw", self.p_sw),
            ("p_cir", self.p_cir),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseError::InvalidArgument(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.p_dep < 0.0 {
            return Err(NoiseError::InvalidArgument(format!("p_dep = {} < 0", self.p_dep)));
        }
        Ok(())
    }

    /// Budget with every error mechanism switched off.
    pub fn noiseless() -> Self {
        Self {
            p_cav: 0.0,
            p_del: 0.0,
            p_sw: 0.0,
            p_cir: 0.0,
            p_dep: 0.0,
            profile: DelayProfile::ideal(4),
        }
    }
}

/// Heralded photon loss, recorded by the stage index of the last atom the
/// photon interacted with: 0 = lost before any atom, `w` = lost after all
/// atoms or on the way to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossEvent {
    pub stage: usize,
}

/// Backaction of a lost measurement photon: with probability 1/2 the
/// basis-aligned Pauli on the first `stage` atoms is applied; the syndrome
/// value is always the erasure marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBackaction {
    /// Mask over the stabilizer support (visit order) applied on a coin flip.
    pub prefix_mask: u8,
    /// Probability of applying the mask.
    pub prob: f64,
}

/// Stochastic rule for a loss at a given stage of a weight-`w` measurement.
pub fn loss_backaction(event: LossEvent, weight: usize) -> Result<LossBackaction, NoiseError> {
    if event.stage > weight {
        return Err(NoiseError::InvalidArgument(format!(
            "loss stage {} exceeds stabilizer weight {weight}",
            event.stage
        )));
    }
    let prefix_mask = ((1u16 << event.stage) - 1) as u8;
    Ok(LossBackaction { prefix_mask, prob: 0.5 })
}

/// Polarization measurement result of the ancilla photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    L,
    R,
}

/// Matrix-element factor for `|A_k><A_l|` under the stated polarization
/// outcome, where `|A_k>` is any support state with `k` atoms in `|1>`.
///
/// With the photon's reference branch timed against the two-excitation
/// reflection, the factor is
/// `(1 +- ((-1)^k W_|k-2| + (-1)^l W_|l-2|) + (-1)^(k+l) W_|k-l|) / 4`
/// (`+` for L, `-` on the middle pair for R). Diagonal factors over the two
/// outcomes sum to 1, and off-diagonal pairs sum to the traced-out loss
/// factor `(1 + (-1)^(k-l) W_|k-l|) / 2`.
pub fn table2_factor(k: usize, l: usize, profile: &DelayProfile, outcome: Polarization) -> f64 {
    assert!(k <= 4 && l <= 4, "weight classes run 0..=4");
    let w = |m: usize| profile.w(m);
    let sign = |n: usize| if n % 2 == 0 { 1.0 } else { -1.0 };
    let branch = sign(k) * w(k.abs_diff(2)) + sign(l) * w(l.abs_diff(2));
    let cross = sign(k + l) * w(k.abs_diff(l));
    match outcome {
        Polarization::L => (1.0 + branch + cross) / 4.0,
        Polarization::R => (1.0 - branch + cross) / 4.0,
    }
}

/// One outcome of the twirled measurement channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEvent {
    /// Canonical Pauli mask over the support, visit order, bit 0 first atom.
    pub mask: u8,
    /// Whether the reported syndrome is flipped relative to the true parity.
    pub flip: bool,
    pub prob: f64,
}

/// Twirled no-loss measurement channel: a distribution over (mask, flip).
///
/// Masks are reduced modulo the measured stabilizer itself (a mask and its
/// full-support complement act identically on the code space); the canonical
/// representative is the lower-weight one, ties broken numerically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwirledChannel {
    pub weight: usize,
    pub events: Vec<ChannelEvent>,
}

/// Negative twirled probabilities larger than this abort channel
/// construction; smaller ones are clamped to zero and renormalized.
const CP_TOLERANCE: f64 = 1e-10;

/// Builds the twirled channel of a weight-3 or weight-4 measurement from an
/// overlap profile.
///
/// The joint channel on the support and the outcome bit is assembled from
/// [`table2_factor`] (weight 3 restricts the table to classes `k <= 3`),
/// conjugation-averaged over the basis-aligned Pauli group together with the
/// outcome correction, and read out as a distribution over canonical masks
/// and flip bits.
pub fn build_twirled_channel(
    profile: &DelayProfile,
    weight: usize,
) -> Result<TwirledChannel, NoiseError> {
    if !(weight == 3 || weight == 4) {
        return Err(NoiseError::InvalidArgument(format!(
            "stabilizer weight must be 3 or 4, got {weight}"
        )));
    }
    if profile.w.len() <= weight {
        return Err(NoiseError::InvalidArgument(format!(
            "profile carries W_0..W_{}, need up to W_{weight}",
            profile.w.len() - 1
        )));
    }
    let dim = 1usize << weight;
    let full = dim - 1;

    // Twirl-averaged Schur multiplier per flip bit, indexed by the even-
    // weight separation e = s XOR t. The ideal outcome of a basis state with
    // k excited atoms is the parity of k, so outcome = parity(k_v) XOR flip.
    let mut multiplier = vec![[0.0f64; 2]; dim];
    for e in 0..dim {
        if (e as u32).count_ones() % 2 != 0 {
            continue;
        }
        for flip in 0..2usize {
            let mut acc = 0.0;
            for v in 0..dim {
                let k_v = (v as u32).count_ones() as usize;
                let k_ve = ((v ^ e) as u32).count_ones() as usize;
                let outcome =
                    if (k_v + flip) % 2 == 0 { Polarization::L } else { Polarization::R };
                acc += table2_factor(k_v, k_ve, profile, outcome);
            }
            multiplier[e][flip] = acc / dim as f64;
        }
    }

    // Invert the Walsh transform over the even-weight separations to get the
    // probability of each mask class.
    let mut events = Vec::with_capacity(dim);
    let mut worst = 0.0f64;
    let mut total = 0.0f64;
    for z in 0..dim {
        if !is_canonical_mask(z, full) {
            continue;
        }
        for flip in 0..2usize {
            let mut q = 0.0;
            for e in 0..dim {
                if (e as u32).count_ones() % 2 != 0 {
                    continue;
                }
                let sign = if ((z & e) as u32).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                q += sign * multiplier[e][flip];
            }
            q /= (dim / 2) as f64;
            if q < -CP_TOLERANCE {
                return Err(NoiseError::NotCompletelyPositive { prob: q });
            }
            if q < 0.0 {
                log::debug!("clamping twirled probability {q} to 0 (numerical noise)");
                worst = worst.min(q);
                q = 0.0;
            }
            total += q;
            events.push(ChannelEvent { mask: z as u8, flip: flip == 1, prob: q });
        }
    }
    if worst < 0.0 || (total - 1.0).abs() > CP_TOLERANCE {
        for ev in &mut events {
            ev.prob /= total;
        }
    }
    Ok(TwirledChannel { weight, events })
}

/// A mask is canonical when it is the lower-weight member of its pair
/// `{z, z XOR full}`, ties broken toward the numerically smaller value.
fn is_canonical_mask(z: usize, full: usize) -> bool {
    let other = z ^ full;
    let (a, b) = ((z as u32).count_ones(), (other as u32).count_ones());
    a < b || (a == b && z < other)
}

impl TwirledChannel {
    /// Draws one (mask, flip) outcome.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u8, bool) {
        let mut x: f64 = rng.random();
        for ev in &self.events {
            x -= ev.prob;
            if x < 0.0 {
                return (ev.mask, ev.flip);
            }
        }
        let last = self.events.last().expect("channel has events");
        (last.mask, last.flip)
    }

    /// Probability that the mask touches the atom at `position` (visit order).
    pub fn mask_marginal(&self, position: usize) -> f64 {
        let bit = 1u8 << position;
        self.events.iter().filter(|ev| ev.mask & bit != 0).map(|ev| ev.prob).sum()
    }

    /// Probability that the reported syndrome is flipped.
    pub fn flip_marginal(&self) -> f64 {
        self.events.iter().filter(|ev| ev.flip).map(|ev| ev.prob).sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.events.iter().map(|ev| ev.prob).sum()
    }
}

/// Per-qubit Z error probability accrued over one cycle:
/// `(1 - exp(-cycle_time / t2)) / 2`.
pub fn dephasing_rule(t2: f64, cycle_time: f64) -> Result<f64, NoiseError> {
    if !(t2 > 0.0) {
        return Err(NoiseError::InvalidArgument(format!("t2 must be > 0, got {t2}")));
    }
    if !(cycle_time >= 0.0) {
        return Err(NoiseError::InvalidArgument(format!(
            "cycle_time must be >= 0, got {cycle_time}"
        )));
    }
    Ok((1.0 - (-cycle_time / t2).exp()) / 2.0)
}

/// Walks a photon path component by component and samples where (if
/// anywhere) the photon is lost. The stage of the returned event counts
/// cavities already reflected, with a loss at a cavity counting that
/// cavity's interaction as having happened.
pub fn sample_loss_location<R: Rng + ?Sized>(
    path: &PhotonPath,
    budget: &NoiseBudget,
    rng: &mut R,
) -> Option<LossEvent> {
    let mut cavities_seen = 0usize;
    for component in &path.components {
        let p_loss = match component {
            Component::Circulator => budget.p_cir,
            Component::Switch => budget.p_sw,
            Component::Cavity(_) => {
                cavities_seen += 1;
                budget.p_cav
            }
            Component::Detector => 0.0,
        };
        if p_loss > 0.0 && rng.random::<f64>() < p_loss {
            return Some(LossEvent { stage: cavities_seen });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::DelayProfile;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn profile_from_w1(w1: f64) -> DelayProfile {
        DelayProfile {
            tau0: 0.0,
            tau1: 0.0,
            w: (0..=4).map(|m| w1.powi((m * m) as i32)).collect(),
        }
    }

    #[test]
    fn printed_table_rows_match() {
        let prof = profile_from_w1(0.9);
        let w1 = prof.w(1);
        let w2 = prof.w(2);
        let w3 = prof.w(3);
        let w4 = prof.w(4);
        let f = |k, l, o| table2_factor(k, l, &prof, o);
        use Polarization::{L, R};

        let cases: Vec<(usize, usize, f64, f64)> = vec![
            (0, 0, (1.0 + w2) / 2.0, (1.0 - w2) / 2.0),
            (4, 4, (1.0 + w2) / 2.0, (1.0 - w2) / 2.0),
            (1, 1, (1.0 - w1) / 2.0, (1.0 + w1) / 2.0),
            (3, 3, (1.0 - w1) / 2.0, (1.0 + w1) / 2.0),
            (2, 2, 1.0, 0.0),
            (0, 1, (1.0 - 2.0 * w1 + w2) / 4.0, (1.0 - w2) / 4.0),
            (3, 4, (1.0 - 2.0 * w1 + w2) / 4.0, (1.0 - w2) / 4.0),
            (1, 2, (1.0 - w1) / 2.0, 0.0),
            (2, 3, (1.0 - w1) / 2.0, 0.0),
            (0, 2, (1.0 + w2) / 2.0, 0.0),
            (2, 4, (1.0 + w2) / 2.0, 0.0),
            (1, 3, (1.0 - 2.0 * w1 + w2) / 4.0, (1.0 + 2.0 * w1 + w2) / 4.0),
            (0, 3, (1.0 - w1 + w2 - w3) / 4.0, (1.0 + w1 - w2 - w3) / 4.0),
            (1, 4, (1.0 - w1 + w2 - w3) / 4.0, (1.0 + w1 - w2 - w3) / 4.0),
            // The (0,4) L factor is (1 + 2 W2 + W4)/4: together with the R
            // column it must trace to (1 + W4)/2, the lost-photon factor.
            (0, 4, (1.0 + 2.0 * w2 + w4) / 4.0, (1.0 - 2.0 * w2 + w4) / 4.0),
        ];
        for (k, l, want_l, want_r) in cases {
            assert!((f(k, l, L) - want_l).abs() < 1e-14, "({k},{l},L)");
            assert!((f(k, l, R) - want_r).abs() < 1e-14, "({k},{l},R)");
            assert!((f(l, k, L) - want_l).abs() < 1e-14, "({l},{k},L) symmetric");
        }
    }

    #[test]
    fn zero_delay_limit_is_an_ideal_parity_measurement() {
        let prof = DelayProfile::ideal(4);
        for k in 0..=4usize {
            for l in 0..=4usize {
                let fl = table2_factor(k, l, &prof, Polarization::L);
                let fr = table2_factor(k, l, &prof, Polarization::R);
                if k % 2 == 0 && l % 2 == 0 {
                    assert_eq!((fl, fr), (1.0, 0.0), "({k},{l})");
                } else if k % 2 == 1 && l % 2 == 1 {
                    assert_eq!((fl, fr), (0.0, 1.0), "({k},{l})");
                } else {
                    // Cross-parity coherences are killed by the measurement.
                    assert_eq!((fl, fr), (0.0, 0.0), "({k},{l})");
                }
            }
        }
    }

    #[test]
    fn outcome_sum_traces_to_loss_factor() {
        let prof = profile_from_w1(0.87);
        for k in 0..=4usize {
            for l in 0..=4usize {
                let sum = table2_factor(k, l, &prof, Polarization::L)
                    + table2_factor(k, l, &prof, Polarization::R);
                let m = k.abs_diff(l);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let traced = (1.0 + sign * prof.w(m)) / 2.0;
                assert!((sum - traced).abs() < 1e-14, "({k},{l})");
            }
        }
    }

    #[test]
    fn unit_overlaps_give_the_identity_channel() {
        for weight in [3usize, 4] {
            let ch = build_twirled_channel(&DelayProfile::ideal(4), weight).unwrap();
            for ev in &ch.events {
                if ev.mask == 0 && !ev.flip {
                    assert!((ev.prob - 1.0).abs() < 1e-12);
                } else {
                    assert!(ev.prob.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flip_marginal_vanishes_continuously_near_unit_overlap() {
        let mut last = f64::INFINITY;
        for w1 in [0.9, 0.99, 0.999, 0.9999] {
            let ch = build_twirled_channel(&profile_from_w1(w1), 4).unwrap();
            let flip = ch.flip_marginal();
            assert!(flip < last);
            last = flip;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn pre_twirl_flip_probability_of_the_ground_class() {
        // A computational-basis state with k = 0 reads R with probability
        // (1 - W2)/2 before twirling.
        let prof = profile_from_w1(0.95);
        let fr = table2_factor(0, 0, &prof, Polarization::R);
        assert!((fr - (1.0 - prof.w(2)) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn channel_masks_are_canonical_and_weight3_stays_in_low_classes() {
        let ch = build_twirled_channel(&profile_from_w1(0.9), 3).unwrap();
        assert_eq!(ch.events.len(), 8);
        for ev in &ch.events {
            assert!(ev.mask < 8, "w=3 masks live on 3 bits");
            assert!((ev.mask as u32).count_ones() <= 1, "canonical reps of 3-bit classes");
        }
        let ch4 = build_twirled_channel(&profile_from_w1(0.9), 4).unwrap();
        assert_eq!(ch4.events.len(), 16);
        for ev in &ch4.events {
            assert!((ev.mask as u32).count_ones() <= 2);
        }
    }

    #[test]
    fn loss_backaction_masks() {
        assert_eq!(loss_backaction(LossEvent { stage: 0 }, 4).unwrap().prefix_mask, 0);
        let rule = loss_backaction(LossEvent { stage: 1 }, 4).unwrap();
        assert_eq!(rule.prefix_mask, 0b0001);
        assert_eq!(rule.prob, 0.5);
        assert_eq!(loss_backaction(LossEvent { stage: 4 }, 4).unwrap().prefix_mask, 0b1111);
        assert!(loss_backaction(LossEvent { stage: 5 }, 4).is_err());
    }

    #[test]
    fn dephasing_formula() {
        assert_eq!(dephasing_rule(10.0, 0.0).unwrap(), 0.0);
        // Series check at t/T2 = 1e-3: (x - x^2/2 + x^3/6)/2.
        let x = 1e-3;
        let series = (x - x * x / 2.0 + x * x * x / 6.0) / 2.0;
        let p = dephasing_rule(1e3, 1.0).unwrap();
        assert!((p - series).abs() < 1e-12);
        assert!((p - 4.9975008e-4).abs() < 1e-11);
        let p = dephasing_rule(1.0, 1e9).unwrap();
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn loss_sampling_frequencies_match_the_product_rule() {
        let path = PhotonPath::linear_chain(4);
        let budget = NoiseBudget {
            p_cav: 0.01,
            p_del: 0.0,
            p_sw: 0.0,
            p_cir: 0.0,
            p_dep: 0.0,
            profile: DelayProfile::ideal(4),
        };
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 1_000_000usize;
        let survived = (0..n)
            .filter(|_| sample_loss_location(&path, &budget, &mut rng).is_none())
            .count();
        let expect = 0.99f64.powi(4);
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((survived as f64 / n as f64 - expect).abs() < 3.0 * sigma);
    }

    #[test]
    fn certain_cavity_loss_reports_stage_one() {
        let path = PhotonPath::linear_chain(1);
        let budget = NoiseBudget {
            p_cav: 1.0,
            p_del: 0.0,
            p_sw: 0.0,
            p_cir: 0.0,
            p_dep: 0.0,
            profile: DelayProfile::ideal(4),
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..32 {
            assert_eq!(sample_loss_location(&path, &budget, &mut rng), Some(LossEvent { stage: 1 }));
        }
    }

    #[test]
    fn lossless_components_always_survive() {
        let path = PhotonPath::linear_chain(4);
        let budget = NoiseBudget::noiseless();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..64 {
            assert!(sample_loss_location(&path, &budget, &mut rng).is_none());
        }
    }

    proptest! {
        #[test]
        fn twirled_probabilities_sum_to_one(w1 in 0.0f64..=1.0, weight in 3usize..=4) {
            let ch = build_twirled_channel(&profile_from_w1(w1), weight).unwrap();
            prop_assert!((ch.total_probability() - 1.0).abs() < 1e-10);
            for ev in &ch.events {
                prop_assert!(ev.prob >= 0.0);
            }
        }

        #[test]
        fn dephasing_is_monotone_and_bounded(t in 0.0f64..1e4, dt in 1e-6f64..1e4) {
            let a = dephasing_rule(1e3, t).unwrap();
            let b = dephasing_rule(1e3, t + dt).unwrap();
            prop_assert!(b >= a);
            prop_assert!(b <= 0.5);
        }
    }
}
