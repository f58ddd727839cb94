//! Dense joint, count, marginal and conditional tables.
//!
//! Every table stores all `M` cells of its schema in the flat row-major order
//! defined by [`Schema`]. Zero cells are ordinary values; there is no sparse
//! representation.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::schema::Schema;

/// Absolute tolerance on the total mass of a normalized table.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// A normalized probability distribution over all joint profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    schema: Arc<Schema>,
    values: Vec<f64>,
}

impl JointTable {
    /// Wraps `values`, checking length, non-negativity and unit mass.
    pub fn new(schema: Arc<Schema>, values: Vec<f64>) -> Result<Self> {
        check_len(&schema, values.len())?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Argument(format!("cell {i} has invalid probability {v}")));
        }
        let mass: f64 = values.iter().sum();
        if (mass - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Argument(format!("table mass is {mass}, expected 1")));
        }
        Ok(JointTable { schema, values })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(schema: Arc<Schema>, weights: Vec<f64>) -> Result<Self> {
        check_len(&schema, weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Argument("weights sum to zero".into()));
        }
        let values = weights.into_iter().map(|w| w / total).collect();
        Ok(JointTable { schema, values })
    }

    /// Equal probability on every cell.
    pub fn uniform(schema: Arc<Schema>) -> Self {
        let m = schema.n_cells();
        JointTable {
            values: vec![1.0 / m as f64; m],
            schema,
        }
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(schema: Arc<Schema>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), schema.n_cells());
        JointTable { schema, values }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Largest absolute cell difference.
    pub fn max_abs_diff(&self, other: &JointTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sums all cells agreeing on the features in `subset` (schema positions,
    /// output laid out row-major in the given order).
    pub fn marginalize(&self, subset: &[usize]) -> Result<MarginalTable> {
        MarginalTable::from_cells(&self.schema, &self.values, subset)
    }

    /// Marginal over features given by name.
    pub fn marginalize_by_name<S: AsRef<str>>(&self, names: &[S]) -> Result<MarginalTable> {
        self.marginalize(&self.schema.positions_of(names)?)
    }

    /// `p(target | given)`. Given-profiles with zero mass are flagged undefined.
    pub fn conditional(&self, target: &[usize], given: &[usize]) -> Result<ConditionalTable> {
        if target.is_empty() {
            return Err(Error::Argument("conditional target subset is empty".into()));
        }
        if target.iter().any(|t| given.contains(t)) {
            return Err(Error::Argument("target and given subsets overlap".into()));
        }
        let mut joint_subset = given.to_vec();
        joint_subset.extend_from_slice(target);
        let joint = self.marginalize(&joint_subset)?;
        let n_target: usize = target.iter().map(|&p| self.schema.dims()[p]).product();
        let n_given = joint.values.len() / n_target;
        let mut values = joint.values;
        let mut defined = vec![false; n_given];
        for (g, slice) in values.chunks_mut(n_target).enumerate() {
            let mass: f64 = slice.iter().sum();
            if mass > 0.0 {
                defined[g] = true;
                slice.iter_mut().for_each(|v| *v /= mass);
            } else {
                slice.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok(ConditionalTable {
            target: target.to_vec(),
            given: given.to_vec(),
            n_target,
            values,
            defined,
        })
    }
}

fn check_len(schema: &Schema, len: usize) -> Result<()> {
    if len != schema.n_cells() {
        return Err(Error::Argument(format!(
            "table has {len} cells, schema requires {}",
            schema.n_cells()
        )));
    }
    Ok(())
}

/// Maps every joint cell to its cell in the marginal over `subset`.
///
/// Returns the marginal's dimensions and the cell map.
pub(crate) fn marginal_map(schema: &Schema, subset: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = schema.n_features();
    let mut seen = vec![false; n];
    for &p in subset {
        if p >= n {
            return Err(Error::Argument(format!("feature position {p} out of range")));
        }
        if std::mem::replace(&mut seen[p], true) {
            return Err(Error::Argument(format!("feature position {p} repeated in subset")));
        }
    }
    let dims = schema.dims();
    let sub_dims: Vec<usize> = subset.iter().map(|&p| dims[p]).collect();
    // stride of each schema feature inside the marginal layout (0 when summed out)
    let mut stride = vec![0usize; n];
    let mut acc = 1;
    for (&p, &d) in subset.iter().zip(&sub_dims).rev() {
        stride[p] = acc;
        acc *= d;
    }
    let m = schema.n_cells();
    let mut map = vec![0usize; m];
    let mut codes = vec![0usize; n];
    let mut target = 0usize;
    for slot in map.iter_mut() {
        *slot = target;
        // odometer increment over the schema, last feature fastest
        for f in (0..n).rev() {
            codes[f] += 1;
            target += stride[f];
            if codes[f] < dims[f] {
                break;
            }
            target -= stride[f] * dims[f];
            codes[f] = 0;
        }
    }
    Ok((sub_dims, map))
}

/// Non-negative integer counts over all joint profiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    schema: Arc<Schema>,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn new(schema: Arc<Schema>, counts: Vec<u64>) -> Result<Self> {
        check_len(&schema, counts.len())?;
        Ok(CountTable { schema, counts })
    }

    pub fn zeros(schema: Arc<Schema>) -> Self {
        let m = schema.n_cells();
        CountTable {
            schema,
            counts: vec![0; m],
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn counts_mut(&mut self) -> &mut [u64] {
        &mut self.counts
    }

    pub fn into_counts(self) -> Vec<u64> {
        self.counts
    }

    /// Sample size `N`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn increment(&mut self, index: usize) {
        self.counts[index] += 1;
    }

    /// Relative frequencies `count / N`.
    pub fn normalize(&self) -> Result<JointTable> {
        let n = self.total();
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let n = n as f64;
        let values = self.counts.iter().map(|&c| c as f64 / n).collect();
        Ok(JointTable::from_raw(self.schema.clone(), values))
    }
}

/// Distribution (or mass) over the Cartesian product of a feature subset.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    features: Vec<usize>,
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl MarginalTable {
    pub(crate) fn from_cells(schema: &Schema, cells: &[f64], subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::Argument("marginal subset is empty".into()));
        }
        let (dims, map) = marginal_map(schema, subset)?;
        let mut values = vec![0.0; dims.iter().product()];
        for (&v, &t) in cells.iter().zip(&map) {
            values[t] += v;
        }
        Ok(MarginalTable {
            features: subset.to_vec(),
            dims,
            values,
        })
    }

    /// Builds a marginal from explicit values, e.g. a hand-written target.
    pub fn new(schema: &Schema, features: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Argument("marginal subset is empty".into()));
        }
        let (dims, _) = marginal_map(schema, &features)?;
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::Argument(format!("marginal has {} values, expected {n}", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Argument("marginal values must be finite and non-negative".into()));
        }
        Ok(MarginalTable { features, dims, values })
    }

    /// Schema positions of the features, in layout order.
    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Value at a subset profile given as category codes in layout order.
    pub fn get(&self, codes: &[usize]) -> f64 {
        assert_eq!(codes.len(), self.dims.len());
        let idx = codes.iter().zip(&self.dims).fold(0, |acc, (&c, &d)| {
            assert!(c < d);
            acc * d + c
        });
        self.values[idx]
    }
}

/// `p(target | given)`, laid out given-major: cell `g * n_target + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    target: Vec<usize>,
    given: Vec<usize>,
    n_target: usize,
    values: Vec<f64>,
    defined: Vec<bool>,
}

impl ConditionalTable {
    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn given(&self) -> &[usize] {
        &self.given
    }

    pub fn n_target(&self) -> usize {
        self.n_target
    }

    pub fn n_given(&self) -> usize {
        self.defined.len()
    }

    /// Whether the given-profile had positive mass.
    pub fn is_defined(&self, given: usize) -> bool {
        self.defined[given]
    }

    /// `p(target = t | given = g)`, `None` on zero-mass given-profiles.
    pub fn get(&self, given: usize, target: usize) -> Option<f64> {
        self.slice(given).map(|s| s[target])
    }

    pub fn slice(&self, given: usize) -> Option<&[f64]> {
        self.defined[given].then(|| &self.values[given * self.n_target..(given + 1) * self.n_target])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Feature;

    pub(crate) fn t1() -> JointTable {
        let schema = Arc::new(
            Schema::new(
                Feature::new("y", ["0", "1"]),
                vec![Feature::new("s", ["a", "b"])],
                vec![Feature::new("x", ["u", "v"])],
            )
            .unwrap(),
        );
        // g(y,s) * 0.5 over x
        let g = [[0.1, 0.4], [0.4, 0.1]];
        let mut v = Vec::new();
        for row in g {
            for gs in row {
                v.push(gs * 0.5);
                v.push(gs * 0.5);
            }
        }
        JointTable::new(schema, v).unwrap()
    }

    #[test]
    fn marginalize_examples() {
        let t1 = t1();
        let uniform = JointTable::uniform(t1.schema_arc().clone());
        assert_eq!(uniform.marginalize(&[0]).unwrap().values(), &[0.5, 0.5]);
        assert_eq!(uniform.marginalize(&[0, 1]).unwrap().values(), &[0.25; 4]);
        let ys = t1.marginalize(&[0, 1]).unwrap();
        let expected = [0.1, 0.4, 0.4, 0.1];
        for (a, b) in ys.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((ys.get(&[1, 0]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn marginal_respects_requested_order() {
        let t1 = t1();
        let sy = t1.marginalize(&[1, 0]).unwrap();
        let ys = t1.marginalize(&[0, 1]).unwrap();
        for y in 0..2 {
            for s in 0..2 {
                assert_eq!(sy.get(&[s, y]), ys.get(&[y, s]));
            }
        }
    }

    #[test]
    fn marginalize_errors() {
        let t1 = t1();
        assert!(matches!(t1.marginalize(&[]), Err(Error::Argument(_))));
        assert!(matches!(t1.marginalize(&[3]), Err(Error::Argument(_))));
        assert!(matches!(t1.marginalize(&[0, 0]), Err(Error::Argument(_))));
        assert!(t1.marginalize_by_name(&["nope"]).is_err());
    }

    #[test]
    fn conditional_examples() {
        let t1 = t1();
        let uniform = JointTable::uniform(t1.schema_arc().clone());
        let c = uniform.conditional(&[0], &[1]).unwrap();
        for s in 0..2 {
            for y in 0..2 {
                assert_eq!(c.get(s, y), Some(0.5));
            }
        }
        let c = t1.conditional(&[0], &[1]).unwrap();
        assert!((c.get(0, 1).unwrap() - 0.8).abs() < 1e-15);
        assert!((c.get(1, 1).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn conditional_on_zero_mass_is_undefined() {
        let schema = t1().schema_arc().clone();
        // all mass on s = a
        let v = vec![0.25, 0.25, 0.0, 0.0, 0.25, 0.25, 0.0, 0.0];
        let p = JointTable::new(schema, v).unwrap();
        let c = p.conditional(&[0], &[1]).unwrap();
        assert!(c.is_defined(0));
        assert!(!c.is_defined(1));
        assert_eq!(c.get(1, 0), None);
        assert!(matches!(p.conditional(&[0], &[0, 1]), Err(Error::Argument(_))));
    }

    #[test]
    fn normalize_examples() {
        let schema = t1().schema_arc().clone();
        let point = CountTable::new(schema.clone(), vec![1, 0, 0, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(point.normalize().unwrap().values()[0], 1.0);
        let flat = CountTable::new(schema.clone(), vec![5; 8]).unwrap();
        assert!(flat.normalize().unwrap().values().iter().all(|&v| v == 0.125));
        let c = CountTable::new(schema.clone(), vec![2, 1, 1, 0, 0, 0, 0, 0]).unwrap();
        assert_eq!(&c.normalize().unwrap().values()[..4], &[0.5, 0.25, 0.25, 0.0]);
        let empty = CountTable::zeros(schema);
        assert!(matches!(empty.normalize(), Err(Error::EmptyData)));
    }

    #[test]
    fn joint_table_validation() {
        let schema = t1().schema_arc().clone();
        assert!(JointTable::new(schema.clone(), vec![0.1; 8]).is_err());
        assert!(JointTable::new(schema.clone(), vec![0.5; 2]).is_err());
        let mut v = vec![0.125; 8];
        v[0] = -0.125;
        v[1] = 0.375;
        assert!(JointTable::new(schema.clone(), v).is_err());
        let w = JointTable::from_weights(schema, vec![1.0; 8]).unwrap();
        assert_eq!(w.values()[3], 0.125);
    }
}
