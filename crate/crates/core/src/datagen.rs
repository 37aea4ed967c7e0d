//! Synthetic datasets with a strong-hierarchy ground truth and SNR-calibrated noise.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Role};

const MAIN_VALUES: [f64; 10] = [-5.0, -4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0, 5.0];
const INTERACTION_VALUES: [f64; 10] = [-10.0, -8.0, -6.0, -4.0, -2.0, 2.0, 4.0, 6.0, 8.0, 10.0];

/// Where the nonzero main effects sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// The first `n_nonzero_main` features.
    Prefix,
    /// A uniformly random subset.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenConfig {
    pub n_features: usize,
    pub n_nonzero_main: usize,
    /// Fraction of the `N(N-1)/2` possible interactions that are nonzero.
    pub interaction_ratio: f64,
    pub n_samples_per_split: usize,
    /// Target signal-to-noise ratio in dB; `+inf` gives noiseless responses.
    pub target_snr_db: f64,
    pub seed: u64,
    pub support: SupportMode,
    /// Center and scale all responses by the training split's mean and standard deviation.
    pub standardize_responses: bool,
}

impl DataGenConfig {
    pub fn new(
        n_features: usize,
        n_nonzero_main: usize,
        interaction_ratio: f64,
        seed: u64,
    ) -> Self {
        Self {
            n_features,
            n_nonzero_main,
            interaction_ratio,
            n_samples_per_split: 100,
            target_snr_db: 5.0,
            seed,
            support: SupportMode::Prefix,
            standardize_responses: true,
        }
    }

    /// 30 features, first 10 active, 3.45% interactions.
    pub fn dataset30(seed: u64) -> Self {
        Self::new(30, 10, 0.0345, seed)
    }

    /// 100 features, first 30 active, 0.30% interactions.
    pub fn dataset100(seed: u64) -> Self {
        Self::new(100, 30, 0.0030, seed)
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "dataset30" => Some(Self::dataset30(seed)),
            "dataset100" => Some(Self::dataset100(seed)),
            _ => None,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::InvalidValue {
                field: "n_features",
                reason: "must be at least 1".into(),
            });
        }
        if self.n_nonzero_main > self.n_features {
            return Err(Error::InvalidValue {
                field: "n_nonzero_main",
                reason: format!(
                    "{} exceeds n_features {}",
                    self.n_nonzero_main, self.n_features
                ),
            });
        }
        if !(0.0..=1.0).contains(&self.interaction_ratio) {
            return Err(Error::InvalidValue {
                field: "interaction_ratio",
                reason: format!("must lie in [0, 1], got {}", self.interaction_ratio),
            });
        }
        if self.n_samples_per_split == 0 {
            return Err(Error::InvalidValue {
                field: "n_samples_per_split",
                reason: "must be at least 1".into(),
            });
        }
        if self.target_snr_db.is_nan() || self.target_snr_db == f64::NEG_INFINITY {
            return Err(Error::InvalidValue {
                field: "target_snr_db",
                reason: format!("must be a number or +inf, got {}", self.target_snr_db),
            });
        }
        Ok(())
    }

    /// Number of nonzero upper-triangle interactions, rounded half up.
    pub fn n_interactions(&self) -> usize {
        let n = self.n_features as f64;
        (self.interaction_ratio * n * (n - 1.0) / 2.0 + 0.5).floor() as usize
    }
}

/// True coefficients: sparse main effects and a symmetric interaction matrix
/// supported on pairs of active main effects.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub v_bar: Array1<f64>,
    pub theta_bar: Array2<f64>,
}

impl GroundTruth {
    /// Noiseless response for one sample.
    pub fn signal(&self, x: ndarray::ArrayView1<f64>) -> f64 {
        x.dot(&self.v_bar) + x.dot(&self.theta_bar.dot(&x))
    }

    pub fn n_upper_interactions(&self) -> usize {
        let n = self.v_bar.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.theta_bar[[i, j]] != 0.0)
            .count()
    }
}

fn truth_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

pub fn generate_ground_truth(cfg: &DataGenConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let n = cfg.n_features;
    let k = cfg.n_nonzero_main;
    let requested = cfg.n_interactions();
    let capacity = k * k.saturating_sub(1) / 2;
    if requested > capacity {
        return Err(Error::InteractionCapacity {
            requested,
            capacity,
        });
    }

    let mut rng = truth_rng(cfg.seed);
    let mut active: Vec<usize> = match cfg.support {
        SupportMode::Prefix => (0..k).collect(),
        SupportMode::Random => sample(&mut rng, n, k).into_vec(),
    };
    active.sort_unstable();

    let mut v_bar = Array1::zeros(n);
    for &i in &active {
        v_bar[i] = MAIN_VALUES[rng.random_range(0..MAIN_VALUES.len())];
    }

    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
        .map(|(a, b)| (active[a], active[b]))
        .collect();
    let mut theta_bar = Array2::zeros((n, n));
    let mut chosen = sample(&mut rng, pairs.len(), requested).into_vec();
    chosen.sort_unstable();
    for idx in chosen {
        let (i, j) = pairs[idx];
        let value = INTERACTION_VALUES[rng.random_range(0..INTERACTION_VALUES.len())];
        theta_bar[[i, j]] = value;
        theta_bar[[j, i]] = value;
    }
    Ok(GroundTruth { v_bar, theta_bar })
}

/// Noise calibration of one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitNoise {
    pub signal_variance: f64,
    pub noise_variance: f64,
    /// `10 log10(signal_variance / noise_variance)`; `+inf` when noiseless.
    pub snr_db: f64,
    /// Set when the signal has zero variance and the noise was left at unit variance.
    pub degenerate_signal: bool,
}

/// Mean and scale applied to every split's responses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseScaling {
    pub center: f64,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub noise: [SplitNoise; 3],
    pub scaling: ResponseScaling,
}

fn population_variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
}

fn draw_split(
    truth: &GroundTruth,
    cfg: &DataGenConfig,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Vec<f64>, SplitNoise) {
    let l = cfg.n_samples_per_split;
    let n = cfg.n_features;
    let x = Array2::from_shape_fn((l, n), |_| rng.sample::<f64, _>(StandardNormal));
    let signal: Vec<f64> = x.rows().into_iter().map(|r| truth.signal(r)).collect();
    let raw_noise: Vec<f64> = (0..l)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();

    let signal_var = population_variance(&signal);
    let unit_var = population_variance(&raw_noise);
    let (scale, degenerate) = if cfg.target_snr_db == f64::INFINITY {
        (0.0, false)
    } else if signal_var == 0.0 || unit_var == 0.0 {
        (1.0, true)
    } else {
        let ratio = 10f64.powf(cfg.target_snr_db / 10.0);
        ((signal_var / (ratio * unit_var)).sqrt(), false)
    };
    let noise: Vec<f64> = raw_noise.iter().map(|e| e * scale).collect();
    let noise_var = population_variance(&noise);
    let snr_db = if noise_var == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal_var / noise_var).log10()
    };
    let y = signal.iter().zip(&noise).map(|(s, e)| s + e).collect();
    (
        x,
        y,
        SplitNoise {
            signal_variance: signal_var,
            noise_variance: noise_var,
            snr_db,
            degenerate_signal: degenerate,
        },
    )
}

/// Draws train, validation and test splits of `n_samples_per_split` samples each.
pub fn generate_dataset(truth: &GroundTruth, cfg: &DataGenConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    if truth.v_bar.len() != cfg.n_features {
        return Err(crate::error::mismatch(
            "v_bar",
            cfg.n_features,
            truth.v_bar.len(),
        ));
    }
    let mut rng = data_rng(cfg.seed);
    let splits: Vec<_> = (0..3).map(|_| draw_split(truth, cfg, &mut rng)).collect();

    let scaling = if cfg.standardize_responses {
        let train_y = &splits[0].1;
        let center = train_y.iter().sum::<f64>() / train_y.len() as f64;
        let sd = population_variance(train_y).sqrt();
        ResponseScaling {
            center,
            scale: if sd > 0.0 { sd } else { 1.0 },
        }
    } else {
        ResponseScaling {
            center: 0.0,
            scale: 1.0,
        }
    };

    let mut out = splits
        .into_iter()
        .zip([Role::Train, Role::Validation, Role::Test])
        .map(|((x, y, noise), role)| {
            let y: Array1<f64> = y
                .into_iter()
                .map(|v| (v - scaling.center) / scaling.scale)
                .collect();
            Dataset::new(x, y, role).map(|d| (d, noise))
        });
    let (train, n0) = out.next().expect("three splits")?;
    let (validation, n1) = out.next().expect("three splits")?;
    let (test, n2) = out.next().expect("three splits")?;
    Ok(GeneratedData {
        train,
        validation,
        test,
        noise: [n0, n1, n2],
        scaling,
    })
}

/// Ground truth and data for one seed.
pub fn generate(cfg: &DataGenConfig) -> Result<(GroundTruth, GeneratedData)> {
    let truth = generate_ground_truth(cfg)?;
    let data = generate_dataset(&truth, cfg)?;
    Ok((truth, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ratio_gives_no_interactions() {
        let mut cfg = DataGenConfig::dataset30(3);
        cfg.interaction_ratio = 0.0;
        let t = generate_ground_truth(&cfg).unwrap();
        assert!(t.theta_bar.iter().all(|&v| v == 0.0));
        assert_eq!(t.v_bar.iter().filter(|v| **v != 0.0).count(), 10);
    }

    #[test]
    fn forced_single_pair() {
        let cfg = DataGenConfig::new(2, 2, 1.0, 11);
        let t = generate_ground_truth(&cfg).unwrap();
        assert_ne!(t.theta_bar[[0, 1]], 0.0);
        assert_eq!(t.theta_bar[[0, 1]], t.theta_bar[[1, 0]]);
        assert_eq!(t.theta_bar[[0, 0]], 0.0);
        assert_eq!(t.theta_bar[[1, 1]], 0.0);
    }

    #[test]
    fn dataset30_interaction_count() {
        let cfg = DataGenConfig::dataset30(0);
        // 0.0345 * 435 = 15.0075
        assert_eq!(cfg.n_interactions(), 15);
        for seed in 0..5 {
            let t = generate_ground_truth(&cfg.with_seed(seed)).unwrap();
            assert_eq!(t.n_upper_interactions(), 15);
            for ((i, j), v) in t.theta_bar.indexed_iter() {
                if *v != 0.0 {
                    assert!(
                        i < 10 && j < 10,
                        "interaction ({i},{j}) outside active block"
                    );
                }
            }
        }
        assert_eq!(DataGenConfig::dataset100(0).n_interactions(), 15);
    }

    #[test]
    fn capacity_error() {
        let cfg = DataGenConfig::new(10, 2, 0.5, 0);
        assert!(matches!(
            generate_ground_truth(&cfg),
            Err(Error::InteractionCapacity {
                requested: 23,
                capacity: 1
            })
        ));
    }

    #[test]
    fn value_sets() {
        let cfg = DataGenConfig::new(12, 8, 0.3, 5);
        let t = generate_ground_truth(&cfg).unwrap();
        for v in t.v_bar.iter().filter(|v| **v != 0.0) {
            assert!(MAIN_VALUES.contains(v));
        }
        for v in t.theta_bar.iter().filter(|v| **v != 0.0) {
            assert!(INTERACTION_VALUES.contains(v));
        }
    }

    #[test]
    fn random_support_respects_hierarchy() {
        let mut cfg = DataGenConfig::new(20, 6, 0.03, 9);
        cfg.support = SupportMode::Random;
        let t = generate_ground_truth(&cfg).unwrap();
        for ((i, j), v) in t.theta_bar.indexed_iter() {
            if *v != 0.0 {
                assert!(t.v_bar[i] != 0.0 && t.v_bar[j] != 0.0);
            }
        }
    }

    #[test]
    fn zero_truth_flags_degenerate_signal() {
        let cfg = DataGenConfig::new(4, 0, 0.0, 1);
        let (_, data) = generate(&cfg).unwrap();
        assert!(data.noise.iter().all(|n| n.degenerate_signal));
        assert!(data.noise.iter().all(|n| n.noise_variance > 0.0));
    }

    #[test]
    fn noiseless_responses_equal_model() {
        let mut cfg = DataGenConfig::new(5, 3, 0.2, 2);
        cfg.target_snr_db = f64::INFINITY;
        cfg.standardize_responses = false;
        let (truth, data) = generate(&cfg).unwrap();
        for (x, y) in data
            .train
            .features()
            .rows()
            .into_iter()
            .zip(data.train.responses())
        {
            assert_eq!(*y, truth.signal(x));
        }
    }

    #[test]
    fn calibrated_snr_per_split() {
        let (_, data) = generate(&DataGenConfig::dataset30(4)).unwrap();
        for n in data.noise {
            assert!((n.snr_db - 5.0).abs() < 1e-9, "{}", n.snr_db);
        }
    }
}
