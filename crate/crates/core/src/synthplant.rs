//! Seeded synthetic multi-channel sensor logs with injected faults.
//!
//! Healthy readings are `M · (s(t) + e(t))`, where `s_j(t)` is channel `j`'s
//! sinusoid, `e_j(t)` its Gaussian noise and `M` the mixing matrix, so the
//! noise is correlated across channels. Each channel draws its noise from its
//! own ChaCha stream, so adding channels leaves existing channels untouched.

use std::f64::consts::TAU;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FaultInterval, FaultSchedule, SensorLog};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Samples per cycle.
    pub period: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FaultMode {
    /// Adds `k` noise standard deviations.
    MeanShift { k: f64 },
    /// Multiplies the noise standard deviation by `k`.
    VarianceBurst { k: f64 },
    /// Replaces the structured signal with independent draws of matching mean and spread.
    Decorrelate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub start: usize,
    pub length: usize,
    pub mode: FaultMode,
    /// Affected channel indices; empty means all.
    pub channels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub start: NaiveDateTime,
    pub channels: Vec<ChannelSpec>,
    /// `n_channels × n_channels`.
    pub mixing: Matrix,
    pub faults: Vec<FaultSpec>,
    /// Probability that a cell is knocked out; 0 gives a dense log.
    pub gap_fraction: f64,
}

pub const DEFAULT_CHANNELS: usize = 8;
pub const DEFAULT_SAMPLES: usize = 20_000;

fn default_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2018, 4, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid date")
}

const PERIODS: [f64; 3] = [1440.0, 360.0, 97.0];

impl PlantConfig {
    /// Healthy plant with the default signal structure and no faults.
    pub fn healthy(n_channels: usize, n_samples: usize, seed: u64) -> Self {
        let channels = (0..n_channels)
            .map(|j| ChannelSpec {
                period: PERIODS[j % PERIODS.len()],
                amplitude: 1.0 + 0.25 * (j % 4) as f64,
                offset: 10.0 + 2.0 * j as f64,
                noise_sigma: 0.1,
            })
            .collect();
        let mut mixing = Matrix::identity(n_channels);
        for r in 0..n_channels {
            for c in 0..n_channels {
                if r != c {
                    let w = ((r * 7 + c * 3) % 11) as f64 / 11.0 - 0.5;
                    mixing[(r, c)] = 1.0 + 0.4 * w;
                }
            }
        }
        Self {
            n_samples,
            seed,
            start: default_start(),
            channels,
            mixing,
            faults: Vec::new(),
            gap_fraction: 0.0,
        }
    }

    /// Desk-scale profile: three faults covering about 2% of the samples.
    pub fn default_profile(n_channels: usize, n_samples: usize, seed: u64) -> Self {
        let mut cfg = Self::healthy(n_channels, n_samples, seed);
        let len = (n_samples / 150).max(1);
        let at = |frac: f64| ((n_samples as f64 * frac) as usize).min(n_samples.saturating_sub(len));
        cfg.faults = vec![
            FaultSpec {
                start: at(0.30),
                length: len,
                mode: FaultMode::MeanShift { k: 3.0 },
                channels: (0..n_channels.min(5)).collect(),
            },
            FaultSpec {
                start: at(0.55),
                length: len,
                mode: FaultMode::VarianceBurst { k: 4.0 },
                channels: Vec::new(),
            },
            FaultSpec {
                start: at(0.80),
                length: len,
                mode: FaultMode::Decorrelate,
                channels: Vec::new(),
            },
        ];
        cfg
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_channels();
        if d == 0 || self.n_samples == 0 {
            return Err(Error::validation("a plant needs at least one channel and one sample"));
        }
        if self.mixing.shape() != (d, d) {
            return Err(Error::validation(format!(
                "mixing matrix is {}x{}, expected {d}x{d}",
                self.mixing.rows(),
                self.mixing.cols()
            )));
        }
        for (j, ch) in self.channels.iter().enumerate() {
            let ok = ch.period > 0.0
                && ch.noise_sigma >= 0.0
                && [ch.period, ch.amplitude, ch.offset, ch.noise_sigma]
                    .iter()
                    .all(|v| v.is_finite());
            if !ok {
                return Err(Error::validation(format!("channel {j} has an invalid signal spec")));
            }
        }
        for f in &self.faults {
            if f.length == 0 || f.start + f.length > self.n_samples {
                return Err(Error::validation(format!(
                    "fault [{}, {}) lies outside [0, {})",
                    f.start,
                    f.start + f.length,
                    self.n_samples
                )));
            }
            if let Some(&c) = f.channels.iter().find(|&&c| c >= d) {
                return Err(Error::validation(format!("fault channel {c} does not exist")));
            }
            match f.mode {
                FaultMode::MeanShift { k } | FaultMode::VarianceBurst { k } if !(k > 0.0 && k.is_finite()) => {
                    return Err(Error::validation(format!("fault magnitude {k} must be positive")));
                }
                _ => {}
            }
        }
        if !(0.0..1.0).contains(&self.gap_fraction) {
            return Err(Error::validation("gap_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn channel_names(&self) -> Vec<String> {
        (1..=self.n_channels()).map(|j| format!("sensor_{j:02}")).collect()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn source(ch: &ChannelSpec, t: usize) -> f64 {
    ch.offset + ch.amplitude * (TAU * t as f64 / ch.period).sin()
}

/// Noise-free mixed signal, `n_samples × n_channels`.
pub fn clean_signal(cfg: &PlantConfig) -> Matrix {
    let d = cfg.n_channels();
    let mut out = Matrix::zeros(cfg.n_samples, d);
    let mut s = vec![0.0; d];
    for t in 0..cfg.n_samples {
        for (v, ch) in s.iter_mut().zip(&cfg.channels) {
            *v = source(ch, t);
        }
        for r in 0..d {
            out[(t, r)] = (0..d).map(|c| cfg.mixing[(r, c)] * s[c]).sum();
        }
    }
    out
}

/// Standard deviation of each mixed channel's healthy noise.
pub fn mixed_noise_sigma(cfg: &PlantConfig) -> Vec<f64> {
    let d = cfg.n_channels();
    (0..d)
        .map(|r| {
            (0..d)
                .map(|c| (cfg.mixing[(r, c)] * cfg.channels[c].noise_sigma).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

pub fn generate(cfg: &PlantConfig) -> Result<(SensorLog, FaultSchedule)> {
    cfg.validate()?;
    let (n, d) = (cfg.n_samples, cfg.n_channels());
    let sigma_out = mixed_noise_sigma(cfg);

    let mut noise_scale = Matrix::zeros(n, d);
    let mut shift = Matrix::zeros(n, d);
    let mut scrambled = vec![false; n * d];
    for f in &cfg.faults {
        let chans: Vec<usize> = if f.channels.is_empty() {
            (0..d).collect()
        } else {
            f.channels.clone()
        };
        for t in f.start..f.start + f.length {
            for &c in &chans {
                match f.mode {
                    FaultMode::MeanShift { k } => shift[(t, c)] += k * sigma_out[c],
                    FaultMode::VarianceBurst { k } => noise_scale[(t, c)] = noise_scale[(t, c)].max(k),
                    FaultMode::Decorrelate => scrambled[t * d + c] = true,
                }
            }
        }
    }

    // noisy per-channel sources, one substream each
    let mut sources = Matrix::zeros(n, d);
    for (c, ch) in cfg.channels.iter().enumerate() {
        let mut rng = stream(cfg.seed, c as u64);
        for t in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            sources[(t, c)] = source(ch, t) + ch.noise_sigma * z;
        }
    }
    let mixed = sources.matmul_t(&cfg.mixing)?;

    let clean = clean_signal(cfg);
    let mut values = vec![None; n * d];
    for c in 0..d {
        let mean = (0..n).map(|t| clean[(t, c)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|t| (clean[(t, c)] - mean).powi(2)).sum::<f64>() / n as f64;
        let spread = (var + sigma_out[c].powi(2)).sqrt();
        let mut alt = stream(cfg.seed ^ 0x5eed_fa17, c as u64);
        let mut burst = stream(cfg.seed ^ 0xb0_0057, c as u64);
        for t in 0..n {
            let mut y = if scrambled[t * d + c] {
                let w: f64 = StandardNormal.sample(&mut alt);
                mean + spread * w
            } else {
                mixed[(t, c)]
            };
            let k = noise_scale[(t, c)];
            if k > 1.0 {
                // independent extra noise lifts the channel's noise std to k times its healthy level
                let w: f64 = StandardNormal.sample(&mut burst);
                y += sigma_out[c] * (k * k - 1.0).sqrt() * w;
            }
            values[t * d + c] = Some(y + shift[(t, c)]);
        }
    }

    if cfg.gap_fraction > 0.0 {
        let mut rng = stream(cfg.seed, d as u64 + 1);
        for v in values.iter_mut() {
            if rng.random::<f64>() < cfg.gap_fraction {
                *v = None;
            }
        }
    }

    let timestamps = (0..n)
        .map(|t| cfg.start + Duration::minutes(t as i64))
        .collect();
    let log = SensorLog::new(timestamps, cfg.channel_names(), values)?;
    let schedule = FaultSchedule::new(
        cfg.faults
            .iter()
            .map(|f| FaultInterval {
                start: cfg.start + Duration::minutes(f.start as i64),
                duration_minutes: f.length as i64,
            })
            .collect(),
    )?;
    Ok((log, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::label_samples;

    fn single_channel(noise: f64) -> PlantConfig {
        let mut cfg = PlantConfig::healthy(1, 500, 3);
        cfg.channels[0] = ChannelSpec {
            period: 60.0,
            amplitude: 2.0,
            offset: 1.0,
            noise_sigma: noise,
        };
        cfg
    }

    #[test]
    fn noiseless_sinusoid() {
        let (log, sched) = generate(&single_channel(0.0)).unwrap();
        assert!(sched.is_empty());
        for t in 0..500 {
            let expected = 1.0 + 2.0 * (TAU * t as f64 / 60.0).sin();
            assert_eq!(log.get(t, 0), Some(expected));
        }
    }

    #[test]
    fn deterministic() {
        let cfg = PlantConfig::default_profile(8, 3000, 11);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = PlantConfig::default_profile(8, 3000, 12);
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn substreams_are_per_channel() {
        let (small, _) = generate(&PlantConfig::healthy(3, 400, 5)).unwrap();
        let mut wide = PlantConfig::healthy(3, 400, 5);
        wide.channels.push(wide.channels[0]);
        let mut m = Matrix::identity(4);
        for r in 0..3 {
            for c in 0..3 {
                m[(r, c)] = wide.mixing[(r, c)];
            }
        }
        wide.mixing = m;
        let (wide_log, _) = generate(&wide).unwrap();
        for t in 0..400 {
            for c in 0..3 {
                assert_eq!(small.get(t, c), wide_log.get(t, c));
            }
        }
    }

    #[test]
    fn schedule_matches_config() {
        let cfg = PlantConfig::default_profile(8, DEFAULT_SAMPLES, 1);
        let (log, sched) = generate(&cfg).unwrap();
        assert_eq!(log.n_rows(), DEFAULT_SAMPLES);
        assert_eq!(log.missing_count(), 0);
        assert_eq!(sched.intervals().len(), 3);
        for (iv, f) in sched.intervals().iter().zip(&cfg.faults) {
            assert_eq!(iv.start, cfg.start + Duration::minutes(f.start as i64));
            assert_eq!(iv.duration_minutes, f.length as i64);
        }
        let labels = label_samples(&log, &sched);
        let share = labels.fault_count() as f64 / DEFAULT_SAMPLES as f64;
        assert!((0.01..=0.03).contains(&share), "{share}");
    }

    #[test]
    fn mean_shift_magnitude() {
        let sigma = 0.5;
        let mut within = 0;
        for seed in 0..20 {
            let mut cfg = single_channel(sigma);
            cfg.channels[0].amplitude = 0.0;
            cfg.seed = seed;
            cfg.faults = vec![FaultSpec {
                start: 200,
                length: 100,
                mode: FaultMode::MeanShift { k: 3.0 },
                channels: vec![0],
            }];
            let (log, _) = generate(&cfg).unwrap();
            let col: Vec<f64> = log.column(0).into_iter().map(Option::unwrap).collect();
            let inside = col[200..300].iter().sum::<f64>() / 100.0;
            let outside = (col[..200].iter().sum::<f64>() + col[300..].iter().sum::<f64>()) / 400.0;
            if ((inside - outside) - 3.0 * sigma).abs() <= 0.5 * sigma {
                within += 1;
            }
        }
        assert_eq!(within, 20);
    }

    #[test]
    fn healthy_stationarity() {
        let (n, d, seeds) = (6000, 4, 5);
        let mut thirds = vec![[0.0; 3]; d];
        for seed in 0..seeds {
            let cfg = PlantConfig::healthy(d, n, seed);
            let clean = clean_signal(&cfg);
            let (log, _) = generate(&cfg).unwrap();
            for (c, acc) in thirds.iter_mut().enumerate() {
                for t in 0..n {
                    acc[t * 3 / n] += (log.get(t, c).unwrap() - clean[(t, c)]) / (seeds as f64 * n as f64 / 3.0);
                }
            }
        }
        let sigmas = mixed_noise_sigma(&PlantConfig::healthy(d, n, 0));
        for (c, m) in thirds.iter().enumerate() {
            let sigma = sigmas[c];
            let drift = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
            assert!(drift < 0.1 * sigma, "channel {c}: {drift}");
        }
    }

    #[test]
    fn gaps_and_invalid_configs() {
        let mut cfg = PlantConfig::healthy(3, 1000, 2);
        cfg.gap_fraction = 0.1;
        let (log, _) = generate(&cfg).unwrap();
        let missing = log.missing_count();
        assert!((200..400).contains(&missing), "{missing}");

        let mut bad = PlantConfig::healthy(2, 100, 0);
        bad.faults.push(FaultSpec {
            start: 90,
            length: 20,
            mode: FaultMode::Decorrelate,
            channels: vec![],
        });
        assert!(matches!(generate(&bad), Err(Error::Validation(_))));
        bad.faults[0] = FaultSpec {
            start: 10,
            length: 5,
            mode: FaultMode::MeanShift { k: -1.0 },
            channels: vec![0],
        };
        assert!(generate(&bad).is_err());
        bad.faults[0].mode = FaultMode::VarianceBurst { k: 2.0 };
        bad.faults[0].channels = vec![7];
        assert!(generate(&bad).is_err());
    }
}
