//! Multinomial synthesis, train/test splitting and the natural classifier.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha8 ([`PRNG_NAME`]). A `(seed, stream)` pair
//! selects a generator: the 64-bit seed is expanded with
//! `ChaCha8Rng::seed_from_u64` and the 64-bit stream id is set with
//! `set_stream`. Replicate `r` of [`sample_counts`] uses stream `r`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{CountTable, JointTable};

/// Name of the generator recorded in run manifests.
pub const PRNG_NAME: &str = "chacha8 (rand_chacha 0.9, seed_from_u64 + set_stream)";

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Records per synthetic table.
    pub n: u64,
    pub seed: u64,
    pub replicates: usize,
}

impl SampleSpec {
    pub fn new(n: u64, seed: u64, replicates: usize) -> Result<Self> {
        let spec = SampleSpec { n, seed, replicates };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Argument("sample size must be >= 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Argument("replicates must be >= 1".into()));
        }
        Ok(())
    }
}

/// Precomputed inverse-CDF sampler over the flat cell index.
#[derive(Debug, Clone)]
pub struct CellSampler {
    cumulative: Vec<f64>,
}

impl CellSampler {
    pub fn new(q: &JointTable) -> Self {
        let mut acc = 0.0;
        let cumulative = q
            .values()
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        CellSampler { cumulative }
    }

    /// One categorical draw. Zero-probability cells are never returned.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1)
    }

    /// `n` independent draws tallied per cell.
    pub fn counts<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Vec<u64> {
        let mut counts = vec![0u64; self.cumulative.len()];
        for _ in 0..n {
            counts[self.draw(rng)] += 1;
        }
        counts
    }
}

/// One multinomial table of `n` records drawn with `rng`.
pub fn sample_counts_with<R: Rng + ?Sized>(q: &JointTable, n: u64, rng: &mut R) -> CountTable {
    let counts = CellSampler::new(q).counts(n, rng);
    CountTable::new(q.schema_arc().clone(), counts).expect("sizes match")
}

/// `spec.replicates` multinomial tables; replicate `r` uses stream `r`.
pub fn sample_counts(q: &JointTable, spec: &SampleSpec) -> Result<Vec<CountTable>> {
    spec.validate()?;
    let sampler = CellSampler::new(q);
    Ok((0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(spec.seed, r as u64);
            let counts = sampler.counts(spec.n, &mut rng);
            CountTable::new(q.schema_arc().clone(), counts).expect("sizes match")
        })
        .collect())
}

/// Splits records into `(train, test)`, sending each record to the test side
/// with probability `test_fraction`. Uses stream 0 of `seed`.
pub fn train_test_split(counts: &CountTable, test_fraction: f64, seed: u64) -> Result<(CountTable, CountTable)> {
    train_test_split_with(counts, test_fraction, &mut stream_rng(seed, 0))
}

/// [`train_test_split`] with a caller-supplied generator. Records are visited
/// cell by cell in index order, one Bernoulli draw each.
pub fn train_test_split_with<R: Rng + ?Sized>(
    counts: &CountTable,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(CountTable, CountTable)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    if counts.total() < 2 {
        return Err(Error::Argument("splitting needs at least 2 records".into()));
    }
    let mut train = CountTable::zeros(counts.schema_arc().clone());
    let mut test = CountTable::zeros(counts.schema_arc().clone());
    for (i, &c) in counts.counts().iter().enumerate() {
        let to_test = (0..c).filter(|_| rng.random_bool(test_fraction)).count() as u64;
        test.counts_mut()[i] = to_test;
        train.counts_mut()[i] = c - to_test;
    }
    Ok((train, test))
}

/// What to predict for a test predictor profile the training table never saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// The response marginal of the training table.
    #[default]
    ResponseMarginal,
    Uniform,
}

impl FallbackPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            FallbackPolicy::ResponseMarginal => "response-marginal",
            FallbackPolicy::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for FallbackPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "response-marginal" => Ok(FallbackPolicy::ResponseMarginal),
            "uniform" => Ok(FallbackPolicy::Uniform),
            _ => Err(Error::Argument(format!("unknown fallback policy '{s}'"))),
        }
    }
}

/// Test predictor profiles that fell back to the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub fallback: FallbackPolicy,
    pub unseen_profiles: usize,
    /// Test mass on those profiles.
    pub unseen_mass: f64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub table: JointTable,
    pub coverage: Coverage,
}

/// `p(y, s, x) = q_train(y | s, x) * f_test(s, x)`.
pub fn natural_prediction(q_train: &JointTable, f_test: &JointTable, fallback: FallbackPolicy) -> Result<Prediction> {
    if q_train.schema() != f_test.schema() {
        return Err(Error::Argument("prediction tables use different schemas".into()));
    }
    let schema = q_train.schema();
    let ny = schema.n_labels();
    let np = schema.n_predictors();
    let q = q_train.values();
    let f = f_test.values();

    let predictor_mass = |t: &[f64]| -> Vec<f64> {
        let mut m = vec![0.0; np];
        for (i, v) in t.iter().enumerate() {
            m[i % np] += v;
        }
        m
    };
    let q_sx = predictor_mass(q);
    let f_sx = predictor_mass(f);
    let default_slice: Vec<f64> = match fallback {
        FallbackPolicy::ResponseMarginal => (0..ny).map(|y| q[y * np..(y + 1) * np].iter().sum()).collect(),
        FallbackPolicy::Uniform => vec![1.0 / ny as f64; ny],
    };

    let mut out = vec![0.0; q.len()];
    let mut coverage = Coverage {
        fallback,
        unseen_profiles: 0,
        unseen_mass: 0.0,
    };
    for j in 0..np {
        if f_sx[j] <= 0.0 {
            continue;
        }
        if q_sx[j] > 0.0 {
            for y in 0..ny {
                out[y * np + j] = q[y * np + j] / q_sx[j] * f_sx[j];
            }
        } else {
            coverage.unseen_profiles += 1;
            coverage.unseen_mass += f_sx[j];
            for y in 0..ny {
                out[y * np + j] = default_slice[y] * f_sx[j];
            }
        }
    }
    Ok(Prediction {
        table: JointTable::from_raw(q_train.schema_arc().clone(), out),
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::schema::{Feature, Schema};

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                Feature::new("y", ["0", "1"]),
                vec![Feature::new("s", ["a", "b"])],
                vec![Feature::new("x", ["u", "v"])],
            )
            .unwrap(),
        )
    }

    #[test]
    fn point_mass_sampling() {
        let mut v = vec![0.0; 8];
        v[3] = 1.0;
        let q = JointTable::new(schema(), v).unwrap();
        let tables = sample_counts(&q, &SampleSpec::new(100, 9, 4).unwrap()).unwrap();
        for t in tables {
            assert_eq!(t.counts(), &[0, 0, 0, 100, 0, 0, 0, 0]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_conserves_n() {
        let q = JointTable::uniform(schema());
        let spec = SampleSpec::new(1000, 42, 3).unwrap();
        let a = sample_counts(&q, &spec).unwrap();
        let b = sample_counts(&q, &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.total() == 1000));
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn bad_sample_spec() {
        assert!(SampleSpec::new(0, 1, 1).is_err());
        assert!(SampleSpec::new(1, 1, 0).is_err());
    }

    #[test]
    fn split_conserves_counts() {
        let counts = CountTable::new(schema(), vec![2, 2, 0, 0, 0, 0, 0, 0]).unwrap();
        let (train, test) = train_test_split(&counts, 0.5, 3).unwrap();
        for i in 0..8 {
            assert_eq!(train.counts()[i] + test.counts()[i], counts.counts()[i]);
        }
        assert_eq!(train_test_split(&counts, 0.5, 3).unwrap(), (train, test));
    }

    #[test]
    fn split_single_cell_is_binomial() {
        let counts = CountTable::new(schema(), vec![0, 0, 0, 0, 100, 0, 0, 0]).unwrap();
        let (_, test) = train_test_split(&counts, 0.25, 11).unwrap();
        let n = test.total();
        // 4 sd around 25
        assert!((8..=42).contains(&n), "{n}");
        assert_eq!(train_test_split(&counts, 0.25, 11).unwrap().1.total(), n);
    }

    #[test]
    fn split_errors() {
        let counts = CountTable::new(schema(), vec![1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert!(train_test_split(&counts, 0.5, 0).is_err());
        let counts = CountTable::new(schema(), vec![1, 1, 0, 0, 0, 0, 0, 0]).unwrap();
        assert!(train_test_split(&counts, 0.0, 0).is_err());
        assert!(train_test_split(&counts, 1.0, 0).is_err());
    }

    #[test]
    fn prediction_reassembles_joint() {
        let q = JointTable::new(schema(), vec![0.05, 0.2, 0.1, 0.15, 0.15, 0.1, 0.05, 0.2]).unwrap();
        let pred = natural_prediction(&q, &q, FallbackPolicy::default()).unwrap();
        assert!(pred.table.max_abs_diff(&q) < 1e-15);
        assert_eq!(pred.coverage.unseen_profiles, 0);
    }

    #[test]
    fn unseen_profile_falls_back() {
        // q has no mass on predictor profile (b, v), indices 3 and 7
        let q = JointTable::new(schema(), vec![0.1, 0.1, 0.1, 0.0, 0.3, 0.2, 0.2, 0.0]).unwrap();
        let f = JointTable::uniform(schema());
        let pred = natural_prediction(&q, &f, FallbackPolicy::ResponseMarginal).unwrap();
        assert_eq!(pred.coverage.unseen_profiles, 1);
        assert!((pred.coverage.unseen_mass - 0.25).abs() < 1e-15);
        let v = pred.table.values();
        assert!((v[3] / 0.25 - 0.3).abs() < 1e-15);
        assert!((v[7] / 0.25 - 0.7).abs() < 1e-15);
        assert!((pred.table.mass() - 1.0).abs() < 1e-15);

        let pred = natural_prediction(&q, &f, FallbackPolicy::Uniform).unwrap();
        assert!((pred.table.values()[3] - 0.125).abs() < 1e-15);
    }
}
