//! Deterministic generation of synthetic dual-stack hosts.
//!
//! A host is a clock: nominal frequency, boot epoch, constant drift and an
//! optional variable component (sinusoidal wander, hard steps, or piecewise
//! drift changes). Measurements read the clock through a jittered path.
//!
//! Reproducibility contract: the PRNG is ChaCha12 with per-stream seeds
//! expanded from the base seed by splitmix64, and all transcendental math
//! goes through the bit-stable helpers in [`crate::math`]. The same seed
//! yields byte-identical traces on any platform.

use std::sync::Arc;

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::math::{ln, sin, unit_half_open, unit_open_closed};
use crate::model::{
    CandidatePair, IpFamily, Label, OptionsFingerprint, TimestampSample, TimestampSeries,
};

const TWO_PI: f64 = std::f64::consts::TAU;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent, reproducible generator for (`base_seed`, `stream`).
pub fn derive_rng(base_seed: u64, stream: u64) -> ChaCha12Rng {
    let mut state = base_seed ^ stream.wrapping_mul(0xA076_1D64_78BD_642F);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}

pub fn uniform(rng: &mut ChaCha12Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_half_open(rng.next_u64())
}

/// One-way delay model: `min + Exp(mean)`, capped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub min_s: f64,
    pub mean_extra_s: f64,
    pub cap_s: f64,
}

impl JitterSpec {
    pub const NONE: JitterSpec = JitterSpec { min_s: 0.0, mean_extra_s: 0.0, cap_s: 0.0 };

    pub fn draw(&self, rng: &mut ChaCha12Rng) -> f64 {
        if self.mean_extra_s == 0.0 {
            return self.min_s;
        }
        let u = unit_open_closed(rng.next_u64());
        let raw = self.min_s + self.mean_extra_s * -ln(u);
        if self.cap_s > 0.0 {
            raw.min(self.cap_s)
        } else {
            raw
        }
    }
}

/// Time-varying part of a clock's offset, in addition to constant drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariableComponent {
    None,
    /// ntpd-style wander around the nominal rate.
    Sinusoid { amplitude_ms: f64, period_s: f64, phase_rad: f64 },
    /// Hard clock adjustments at fixed times (seconds since boot).
    Steps(Vec<StepEvent>),
    /// Piecewise drift-rate changes (seconds since boot, new ppm).
    Ramps(Vec<RampSegment>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub at_s: f64,
    pub jump_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSegment {
    pub at_s: f64,
    pub ppm: f64,
}

impl VariableComponent {
    /// Offset contribution in seconds at `elapsed` seconds since boot.
    fn offset_s(&self, elapsed: f64) -> f64 {
        match self {
            VariableComponent::None => 0.0,
            VariableComponent::Sinusoid { amplitude_ms, period_s, phase_rad } => {
                amplitude_ms / 1000.0 * sin(TWO_PI * elapsed / period_s + phase_rad)
            }
            VariableComponent::Steps(events) => events
                .iter()
                .filter(|e| e.at_s <= elapsed)
                .map(|e| e.jump_ms / 1000.0)
                .sum(),
            VariableComponent::Ramps(segments) => {
                let mut acc = 0.0;
                for (i, seg) in segments.iter().enumerate() {
                    if seg.at_s >= elapsed {
                        break;
                    }
                    let end = segments.get(i + 1).map_or(elapsed, |n| n.at_s.min(elapsed));
                    acc += seg.ppm * 1e-6 * (end - seg.at_s);
                }
                acc
            }
        }
    }
}

/// Full description of one simulated clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    /// Nominal tick rate; real stacks use 10, 100, 250 or 1000.
    pub hz: u32,
    /// Epoch second at which the counter was zero.
    pub boot_epoch: f64,
    /// Constant drift relative to true time.
    pub skew_ppm: f64,
    pub variable: VariableComponent,
    pub jitter: JitterSpec,
    pub seed: u64,
}

impl ClockSpec {
    /// The clock's own elapsed seconds at wall time `t`.
    pub fn reading(&self, t: f64) -> f64 {
        let elapsed = t - self.boot_epoch;
        elapsed * (1.0 + self.skew_ppm * 1e-6) + self.variable.offset_s(elapsed)
    }

    /// Untruncated tick counter at wall time `t`; the oracle for wraparound
    /// reconstruction.
    pub fn raw_ticks(&self, t: f64) -> u64 {
        (self.hz as f64 * self.reading(t)).floor().max(0.0) as u64
    }

    /// The 32-bit TSval a probe observes at wall time `t`.
    pub fn tsval(&self, t: f64) -> u32 {
        (self.raw_ticks(t) & 0xFFFF_FFFF) as u32
    }
}

fn jitter_stream(family: IpFamily) -> u64 {
    match family {
        IpFamily::V4 => 1,
        IpFamily::V6 => 2,
    }
}

fn sample_series(
    clock: &ClockSpec,
    jitter: &JitterSpec,
    ip: &str,
    family: IpFamily,
    sample_times: &[f64],
) -> TimestampSeries {
    let mut rng = derive_rng(clock.seed, jitter_stream(family));
    let samples = sample_times
        .iter()
        .map(|&t| TimestampSample { recv_time: t + jitter.draw(&mut rng), tsval: clock.tsval(t) })
        .collect();
    TimestampSeries::new(ip, family, samples)
}

/// Reads one clock at the given times through its own jitter path.
pub fn simulate_host(
    clock: &ClockSpec,
    ip: &str,
    family: IpFamily,
    sample_times: &[f64],
) -> TimestampSeries {
    sample_series(clock, &clock.jitter, ip, family, sample_times)
}

/// Builds a labeled sibling: both families read the same clock trajectory
/// through different jitter paths and share one options fingerprint.
#[allow(clippy::too_many_arguments)]
pub fn simulate_sibling(
    id: &str,
    ip4: &str,
    ip6: &str,
    clock: &ClockSpec,
    path4_jitter: &JitterSpec,
    path6_jitter: &JitterSpec,
    sample_times: &[f64],
    fingerprint: &OptionsFingerprint,
) -> CandidatePair {
    CandidatePair {
        id: id.to_string(),
        series4: Arc::new(sample_series(clock, path4_jitter, ip4, IpFamily::V4, sample_times)),
        series6: Arc::new(sample_series(clock, path6_jitter, ip6, IpFamily::V6, sample_times)),
        fp4: fingerprint.clone(),
        fp6: fingerprint.clone(),
        label: Some(Label::Sibling),
        group: None,
    }
}

/// Population-level knobs for [`generate_population`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub size: usize,
    /// Fraction of hosts with constant skew (the rest get a variable
    /// component on top of a small residual drift).
    pub constant_fraction: f64,
    pub seed: u64,
    /// Wall-clock start of the measurement window.
    pub start_epoch: f64,
    pub duration_s: f64,
    pub interval_s: f64,
    pub jitter_cap_s: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            size: 200,
            constant_fraction: 0.3,
            seed: 1,
            start_epoch: 1_700_000_000.0,
            duration_s: 36_000.0,
            interval_s: 60.0,
            jitter_cap_s: 0.010,
        }
    }
}

const FINGERPRINTS: [(&str, f64); 5] = [
    ("MSS-SACK-TS-NOP-WS07", 0.45),
    ("MSS-SACK-TS-NOP-WS08", 0.20),
    ("MSS-NOP-WS08-SACK-TS", 0.15),
    ("MSS-NOP-NOP-TS-SACK-WS06", 0.12),
    ("MSS-SACK-TS", 0.08),
];

const HZ_CHOICES: [(u32, f64); 4] = [(10, 0.10), (100, 0.30), (250, 0.30), (1000, 0.30)];

fn choose_weighted<T: Copy>(rng: &mut ChaCha12Rng, table: &[(T, f64)]) -> T {
    let total: f64 = table.iter().map(|(_, w)| w).sum();
    let mut pick = uniform(rng, 0.0, total);
    for &(value, weight) in table {
        if pick < weight {
            return value;
        }
        pick -= weight;
    }
    table[table.len() - 1].0
}

fn sample_times(
    rng: &mut ChaCha12Rng,
    start: f64,
    duration: f64,
    interval: f64,
) -> Vec<f64> {
    let count = (duration / interval).floor() as usize;
    let mut times: Vec<f64> = (0..count)
        .map(|i| start + i as f64 * interval + uniform(rng, -2.0, 2.0))
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times
}

/// Generates `size` labeled sibling hosts with independent boot epochs
/// (uniform over three years), mixed frequencies and mixed skew shapes.
/// Same config, same bytes.
pub fn generate_population(config: &PopulationConfig) -> Vec<CandidatePair> {
    let n_constant = (config.size as f64 * config.constant_fraction).round() as usize;
    let mut pairs = Vec::with_capacity(config.size);
    for i in 0..config.size {
        let mut rng = derive_rng(config.seed, 1000 + i as u64);
        let hz = choose_weighted(&mut rng, &HZ_CHOICES);
        let boot_epoch =
            config.start_epoch - uniform(&mut rng, 3600.0, 3.0 * 365.0 * 86_400.0);
        let boot_to_start = config.start_epoch - boot_epoch;

        let constant = i < n_constant;
        let (skew_ppm, variable) = if constant {
            let magnitude = uniform(&mut rng, 5.0, 100.0);
            let sign = if uniform(&mut rng, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            (sign * magnitude, VariableComponent::None)
        } else {
            // disciplined clock: small residual drift plus visible dynamics
            let residual = uniform(&mut rng, -5.0, 5.0);
            let shape = uniform(&mut rng, 0.0, 1.0);
            let component = if shape < 0.70 {
                VariableComponent::Sinusoid {
                    amplitude_ms: uniform(&mut rng, 20.0, 200.0),
                    period_s: uniform(&mut rng, 7200.0, 21_600.0),
                    phase_rad: uniform(&mut rng, 0.0, TWO_PI),
                }
            } else if shape < 0.85 {
                let count = 1 + (rng.next_u64() % 3) as usize;
                let mut events: Vec<StepEvent> = (0..count)
                    .map(|_| {
                        let at = boot_to_start
                            + uniform(&mut rng, 0.1, 0.9) * config.duration_s;
                        let magnitude = uniform(&mut rng, 100.0, 1000.0);
                        let sign =
                            if uniform(&mut rng, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
                        StepEvent { at_s: at, jump_ms: sign * magnitude }
                    })
                    .collect();
                events.sort_by(|a, b| a.at_s.partial_cmp(&b.at_s).unwrap());
                VariableComponent::Steps(events)
            } else {
                let count = 2 + (rng.next_u64() % 2) as usize;
                let mut at: Vec<f64> = (0..count)
                    .map(|_| boot_to_start + uniform(&mut rng, 0.0, 0.9) * config.duration_s)
                    .collect();
                at.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let segments = at
                    .into_iter()
                    .map(|at_s| RampSegment { at_s, ppm: uniform(&mut rng, -50.0, 50.0) })
                    .collect();
                VariableComponent::Ramps(segments)
            };
            (residual, component)
        };

        let clock = ClockSpec {
            hz,
            boot_epoch,
            skew_ppm,
            variable,
            jitter: JitterSpec::NONE, // per-path jitter below
            seed: rng.next_u64(),
        };
        let fingerprint =
            OptionsFingerprint::from_canonical(choose_weighted(&mut rng, &FINGERPRINTS));
        let jitter_for = |rng: &mut ChaCha12Rng, cap: f64| JitterSpec {
            min_s: uniform(rng, 0.0002, 0.003),
            mean_extra_s: uniform(rng, 0.0002, 0.003),
            cap_s: cap,
        };
        let path4 = jitter_for(&mut rng, config.jitter_cap_s);
        let path6 = jitter_for(&mut rng, config.jitter_cap_s);

        let mut times_rng = derive_rng(clock.seed, 3);
        let times4 =
            sample_times(&mut times_rng, config.start_epoch, config.duration_s, config.interval_s);
        let start6 = config.start_epoch + uniform(&mut times_rng, 0.0, config.interval_s);
        let times6 =
            sample_times(&mut times_rng, start6, config.duration_s, config.interval_s);

        let ip4 = format!("10.{}.{}.1", (i >> 8) & 0xff, i & 0xff);
        let ip6 = format!("2001:db8::{:x}", i + 1);
        let id = format!("host{i:04}");

        pairs.push(CandidatePair {
            id,
            series4: Arc::new(sample_series(&clock, &path4, &ip4, IpFamily::V4, &times4)),
            series6: Arc::new(sample_series(&clock, &path6, &ip6, IpFamily::V6, &times6)),
            fp4: fingerprint.clone(),
            fp6: fingerprint,
            label: Some(Label::Sibling),
            group: Some(if constant { "constant".into() } else { "variable".into() }),
        });
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_ticks_without_noise() {
        let clock = ClockSpec {
            hz: 1000,
            boot_epoch: 0.0,
            skew_ppm: 0.0,
            variable: VariableComponent::None,
            jitter: JitterSpec::NONE,
            seed: 0,
        };
        assert_eq!(clock.tsval(0.0), 0);
        assert_eq!(clock.tsval(1.0), 1000);
        assert_eq!(clock.tsval(2.0), 2000);
    }

    #[test]
    fn skew_accumulates_analytically() {
        // +100 ppm over 10 hours -> 3.6 s of extra clock
        let clock = ClockSpec {
            hz: 1000,
            boot_epoch: 0.0,
            skew_ppm: 100.0,
            variable: VariableComponent::None,
            jitter: JitterSpec::NONE,
            seed: 0,
        };
        let offset = clock.reading(36_000.0) - 36_000.0;
        assert!((offset - 3.6).abs() < 1e-9, "offset {offset}");
    }

    #[test]
    fn tick_quantization_bound() {
        let clock = ClockSpec {
            hz: 250,
            boot_epoch: 100.0,
            skew_ppm: 0.0,
            variable: VariableComponent::None,
            jitter: JitterSpec::NONE,
            seed: 0,
        };
        for i in 0..1000 {
            let t = 101.0 + i as f64 * 0.613;
            let err = clock.tsval(t) as f64 / 250.0 - clock.reading(t);
            assert!(err.abs() < 1.0 / 250.0, "err {err}");
        }
    }

    #[test]
    fn steps_and_ramps_shift_reading() {
        let steps = ClockSpec {
            hz: 1000,
            boot_epoch: 0.0,
            skew_ppm: 0.0,
            variable: VariableComponent::Steps(vec![StepEvent { at_s: 10.0, jump_ms: -1000.0 }]),
            jitter: JitterSpec::NONE,
            seed: 0,
        };
        assert!((steps.reading(9.0) - 9.0).abs() < 1e-12);
        assert!((steps.reading(11.0) - 10.0).abs() < 1e-12);

        let ramps = ClockSpec {
            hz: 1000,
            boot_epoch: 0.0,
            skew_ppm: 0.0,
            variable: VariableComponent::Ramps(vec![
                RampSegment { at_s: 0.0, ppm: 0.0 },
                RampSegment { at_s: 100.0, ppm: 1e6 }, // absurd rate, easy numbers
            ]),
            jitter: JitterSpec::NONE,
            seed: 0,
        };
        assert!((ramps.reading(100.0) - 100.0).abs() < 1e-9);
        assert!((ramps.reading(102.0) - 104.0).abs() < 1e-9);
    }

    #[test]
    fn same_seed_same_bytes() {
        let config = PopulationConfig { size: 3, ..Default::default() };
        let a = generate_population(&config);
        let b = generate_population(&config);
        assert_eq!(a.len(), b.len());
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.series4.samples(), pb.series4.samples());
            assert_eq!(pa.series6.samples(), pb.series6.samples());
            assert_eq!(pa.fp4, pb.fp4);
        }
    }

    #[test]
    fn population_mix_counts() {
        let config = PopulationConfig { size: 10, constant_fraction: 0.3, ..Default::default() };
        let pop = generate_population(&config);
        let constant = pop.iter().filter(|p| p.group.as_deref() == Some("constant")).count();
        assert_eq!(constant, 3);
        assert_eq!(pop.len(), 10);
    }

    #[test]
    fn different_streams_differ() {
        let mut a = derive_rng(42, 1);
        let mut b = derive_rng(42, 2);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
