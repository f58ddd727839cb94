//! Reference distributions for the projection: the pseudo-count regularized
//! empirical distribution and the uniform (maximum entropy) distribution,
//! both restricted to a configurable support.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::table::JointTable;

/// Pseudo-count strength used when none is given.
pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// Which cells may carry probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportMode {
    /// Every profile of `Y x S x X`.
    FullCartesian,
    /// Every label `y` combined with the predictor profiles `(s, x)` observed in the data.
    #[default]
    ObservedPredictorsAllLabels,
    /// Only profiles `(y, s, x)` observed in the data.
    ObservedOnly,
}

impl SupportMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupportMode::FullCartesian => "full-cartesian",
            SupportMode::ObservedPredictorsAllLabels => "observed-predictors-all-labels",
            SupportMode::ObservedOnly => "observed-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub lambda: f64,
    pub support_mode: SupportMode,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            lambda: DEFAULT_LAMBDA,
            support_mode: SupportMode::default(),
        }
    }
}

/// Admissibility flag per flat cell index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    admissible: Vec<bool>,
}

impl SupportMask {
    pub fn new(admissible: Vec<bool>) -> Self {
        SupportMask { admissible }
    }

    pub fn full(n_cells: usize) -> Self {
        SupportMask {
            admissible: vec![true; n_cells],
        }
    }

    /// Derives the support of `f` under `mode` and checks that every label
    /// and every sensitive profile keeps at least one admissible cell.
    pub fn from_table(f: &JointTable, mode: SupportMode) -> Result<Self> {
        let schema = f.schema();
        let admissible = match mode {
            SupportMode::FullCartesian => vec![true; f.len()],
            SupportMode::ObservedOnly => f.values().iter().map(|&v| v > 0.0).collect(),
            SupportMode::ObservedPredictorsAllLabels => {
                let np = schema.n_predictors();
                let mut observed = vec![false; np];
                for (i, &v) in f.values().iter().enumerate() {
                    if v > 0.0 {
                        observed[i % np] = true;
                    }
                }
                (0..f.len()).map(|i| observed[i % np]).collect()
            }
        };
        let mask = SupportMask { admissible };
        mask.validate(schema)?;
        Ok(mask)
    }

    /// Every label and every sensitive profile must keep an admissible cell.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.admissible.len() != schema.n_cells() {
            return Err(Error::Argument(format!(
                "mask has {} cells, schema requires {}",
                self.admissible.len(),
                schema.n_cells()
            )));
        }
        let mut label_seen = vec![false; schema.n_labels()];
        let mut sensitive_seen = vec![false; schema.n_sensitive()];
        for (i, _) in self.admissible.iter().enumerate().filter(|(_, a)| **a) {
            let (y, s, _) = schema.split(i);
            label_seen[y] = true;
            sensitive_seen[s] = true;
        }
        if let Some(y) = label_seen.iter().position(|seen| !seen) {
            return Err(Error::Support(format!("label '{}' has no admissible cell", schema.label(y))));
        }
        if let Some(s) = sensitive_seen.iter().position(|seen| !seen) {
            return Err(Error::Support(format!(
                "sensitive profile '{}' has no admissible cell",
                schema.sensitive_label(s)
            )));
        }
        Ok(())
    }

    pub fn is_admissible(&self, index: usize) -> bool {
        self.admissible[index]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.admissible
    }

    pub fn len(&self) -> usize {
        self.admissible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.admissible.is_empty()
    }

    /// Number of admissible cells.
    pub fn count(&self) -> usize {
        self.admissible.iter().filter(|a| **a).count()
    }
}

/// Adds `lambda / n` to every admissible cell and renormalizes:
/// `(f + lambda/n) / (1 + K lambda/n)` with `K` the admissible cell count.
pub fn pseudo_count_regularize(f: &JointTable, n: u64, config: &RegularizationConfig) -> Result<JointTable> {
    let mask = SupportMask::from_table(f, config.support_mode)?;
    regularize_with_mask(f, n, config.lambda, &mask)
}

/// [`pseudo_count_regularize`] over an explicit mask.
pub fn regularize_with_mask(f: &JointTable, n: u64, lambda: f64, mask: &SupportMask) -> Result<JointTable> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if mask.len() != f.len() {
        return Err(Error::Argument("mask and table sizes differ".into()));
    }
    if let Some(i) = (0..f.len()).find(|&i| f.get(i) > 0.0 && !mask.is_admissible(i)) {
        return Err(Error::Support(format!("cell {i} has mass but lies outside the support mask")));
    }
    if lambda == 0.0 {
        return Ok(f.clone());
    }
    let pseudo = lambda / n as f64;
    let denom = 1.0 + mask.count() as f64 * pseudo;
    let values = f
        .values()
        .iter()
        .zip(mask.as_slice())
        .map(|(&v, &adm)| if adm { (v + pseudo) / denom } else { 0.0 })
        .collect();
    Ok(JointTable::from_raw(f.schema_arc().clone(), values))
}

/// Equal probability on every admissible cell.
pub fn uniform_reference(schema: Arc<Schema>, mask: &SupportMask) -> Result<JointTable> {
    if mask.len() != schema.n_cells() {
        return Err(Error::Argument("mask and schema sizes differ".into()));
    }
    let k = mask.count();
    if k == 0 {
        return Err(Error::Argument("support mask has no admissible cell".into()));
    }
    let p = 1.0 / k as f64;
    let values = mask.as_slice().iter().map(|&a| if a { p } else { 0.0 }).collect();
    Ok(JointTable::from_raw(schema, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Feature;

    fn schema_2x2() -> Arc<Schema> {
        Arc::new(Schema::new(Feature::new("y", ["0", "1"]), vec![Feature::new("s", ["a", "b"])], vec![]).unwrap())
    }

    fn schema_8() -> Arc<Schema> {
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
    fn pseudo_count_example() {
        let f = JointTable::new(schema_2x2(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let cfg = RegularizationConfig {
            lambda: 1.0,
            support_mode: SupportMode::FullCartesian,
        };
        let r = pseudo_count_regularize(&f, 10, &cfg).unwrap();
        let expected = [1.1 / 1.4, 0.1 / 1.4, 0.1 / 1.4, 0.1 / 1.4];
        for (a, b) in r.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((r.values()[0] - 0.785714).abs() < 1e-6);
        assert!((r.values()[1] - 0.071429).abs() < 1e-6);
    }

    #[test]
    fn zero_lambda_and_uniform_are_fixed_points() {
        let f = JointTable::new(schema_8(), vec![0.3, 0.0, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1]).unwrap();
        let cfg = RegularizationConfig {
            lambda: 0.0,
            support_mode: SupportMode::FullCartesian,
        };
        assert_eq!(pseudo_count_regularize(&f, 7, &cfg).unwrap(), f);
        let u = JointTable::uniform(schema_8());
        for lambda in [0.5, 3.0, 1e4] {
            let cfg = RegularizationConfig {
                lambda,
                support_mode: SupportMode::FullCartesian,
            };
            let r = pseudo_count_regularize(&u, 13, &cfg).unwrap();
            assert!(r.max_abs_diff(&u) < 1e-15);
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let f = JointTable::uniform(schema_8());
        let cfg = RegularizationConfig {
            lambda: -1.0,
            support_mode: SupportMode::FullCartesian,
        };
        assert!(matches!(pseudo_count_regularize(&f, 3, &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn distance_to_uniform_shrinks_with_lambda() {
        let f = JointTable::new(schema_8(), vec![0.3, 0.0, 0.1, 0.1, 0.2, 0.1, 0.15, 0.05]).unwrap();
        let u = JointTable::uniform(schema_8());
        let mut last = f64::INFINITY;
        for lambda in [1.0, 10.0, 100.0, 1000.0] {
            let cfg = RegularizationConfig {
                lambda,
                support_mode: SupportMode::FullCartesian,
            };
            let d = pseudo_count_regularize(&f, 20, &cfg).unwrap().max_abs_diff(&u);
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn observed_support_is_preserved() {
        // predictor profile (s=b, x=v) never observed
        let f = JointTable::new(schema_8(), vec![0.2, 0.1, 0.1, 0.0, 0.2, 0.2, 0.2, 0.0]).unwrap();
        let r = pseudo_count_regularize(&f, 10, &RegularizationConfig { lambda: 1.0, ..Default::default() }).unwrap();
        assert_eq!(r.values()[3], 0.0);
        assert_eq!(r.values()[7], 0.0);
        assert!(r.values().iter().enumerate().filter(|(i, _)| *i != 3 && *i != 7).all(|(_, v)| *v > 0.0));
        assert!((r.mass() - 1.0).abs() < 1e-15);

        let only = pseudo_count_regularize(
            &f,
            10,
            &RegularizationConfig {
                lambda: 1.0,
                support_mode: SupportMode::ObservedOnly,
            },
        )
        .unwrap();
        assert_eq!(only.values().iter().filter(|v| **v > 0.0).count(), 6);
    }

    #[test]
    fn uniform_reference_examples() {
        let u = uniform_reference(schema_8(), &SupportMask::full(8)).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.125));
        let mask = SupportMask::new(vec![true, true, false, true, false, true, true, false]);
        let u = uniform_reference(schema_8(), &mask).unwrap();
        for (v, a) in u.values().iter().zip(mask.as_slice()) {
            assert_eq!(*v, if *a { 0.2 } else { 0.0 });
        }
        assert!(uniform_reference(schema_8(), &SupportMask::new(vec![false; 8])).is_err());
    }

    #[test]
    fn uniform_over_observed_predictors() {
        // three observed predictor profiles x two labels
        let f = JointTable::new(schema_8(), vec![0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.25, 0.0]).unwrap();
        let mask = SupportMask::from_table(&f, SupportMode::ObservedPredictorsAllLabels).unwrap();
        assert_eq!(mask.count(), 6);
        let u = uniform_reference(schema_8(), &mask).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0 || (v - 1.0 / 6.0).abs() < 1e-16));
    }

    #[test]
    fn missing_sensitive_profile_is_a_support_error() {
        let f = JointTable::new(schema_8(), vec![0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0]).unwrap();
        // s = b never observed
        assert!(matches!(
            SupportMask::from_table(&f, SupportMode::ObservedPredictorsAllLabels),
            Err(Error::Support(_))
        ));
        assert!(SupportMask::from_table(&f, SupportMode::FullCartesian).is_ok());
    }
}
