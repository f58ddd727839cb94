//! Feature declarations and the flat enumeration of joint profiles.
//!
//! A joint profile is one tuple `(y, s, x)` from the Cartesian product of the
//! response domain, the protected domains and the unprotected domains. Profiles
//! are enumerated row-major over the features in declaration order: response
//! first, then protected features, then unprotected features. With that layout
//! the flat index factorizes as `((y * |S|) + s) * |X| + x`, where `s` and `x`
//! are themselves row-major indices over the protected and unprotected blocks.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A categorical feature with an ordered, finite domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    name: String,
    categories: Vec<String>,
}

impl Feature {
    pub fn new<N, I, C>(name: N, categories: I) -> Self
    where
        N: Into<String>,
        I: IntoIterator<Item = C>,
        C: Into<String>,
    {
        Feature {
            name: name.into(),
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn code_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("feature with empty name".into()));
        }
        if self.categories.len() < 2 {
            return Err(Error::Schema(format!(
                "feature '{}' needs at least 2 categories, has {}",
                self.name,
                self.categories.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.categories {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate category '{}' in feature '{}'",
                    c, self.name
                )));
            }
        }
        Ok(())
    }
}

/// Role a feature plays in the de-biasing problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Response,
    Protected,
    Unprotected,
}

/// Declares the response, protected and unprotected features.
///
/// Features are addressed by *position*: position 0 is the response, positions
/// `1..=p` the protected features and the remaining positions the unprotected
/// ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDoc", into = "SchemaDoc")]
pub struct Schema {
    features: Vec<Feature>,
    n_protected: usize,
    dims: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    response: Feature,
    protected: Vec<Feature>,
    #[serde(default)]
    unprotected: Vec<Feature>,
}

impl TryFrom<SchemaDoc> for Schema {
    type Error = Error;

    fn try_from(doc: SchemaDoc) -> Result<Self> {
        Schema::new(doc.response, doc.protected, doc.unprotected)
    }
}

impl From<Schema> for SchemaDoc {
    fn from(schema: Schema) -> Self {
        let mut features = schema.features.into_iter();
        let response = features.next().expect("schema always has a response");
        let protected = features.by_ref().take(schema.n_protected).collect();
        SchemaDoc {
            response,
            protected,
            unprotected: features.collect(),
        }
    }
}

impl Schema {
    /// Builds a schema. At least one protected feature is required; the
    /// unprotected list may be empty.
    pub fn new(response: Feature, protected: Vec<Feature>, unprotected: Vec<Feature>) -> Result<Self> {
        if protected.is_empty() {
            return Err(Error::Schema("at least one protected feature is required".into()));
        }
        let n_protected = protected.len();
        let features: Vec<Feature> = std::iter::once(response)
            .chain(protected)
            .chain(unprotected)
            .collect();
        let mut names = HashSet::new();
        for f in &features {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
        }
        let dims = features.iter().map(Feature::len).collect();
        Ok(Schema {
            features,
            n_protected,
            dims,
        })
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, position: usize) -> &Feature {
        &self.features[position]
    }

    pub fn response(&self) -> &Feature {
        &self.features[0]
    }

    pub fn protected(&self) -> &[Feature] {
        &self.features[1..=self.n_protected]
    }

    pub fn unprotected(&self) -> &[Feature] {
        &self.features[self.n_protected + 1..]
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Category counts per feature position.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn role(&self, position: usize) -> Role {
        if position == 0 {
            Role::Response
        } else if position <= self.n_protected {
            Role::Protected
        } else {
            Role::Unprotected
        }
    }

    /// `[0]`
    pub fn response_position(&self) -> Vec<usize> {
        vec![0]
    }

    pub fn protected_positions(&self) -> Vec<usize> {
        (1..=self.n_protected).collect()
    }

    pub fn unprotected_positions(&self) -> Vec<usize> {
        (self.n_protected + 1..self.features.len()).collect()
    }

    /// Positions of the predictors `(S, X)`.
    pub fn predictor_positions(&self) -> Vec<usize> {
        (1..self.features.len()).collect()
    }

    /// Number of response categories `|Y|`.
    pub fn n_labels(&self) -> usize {
        self.dims[0]
    }

    /// Number of sensitive profiles `|S|`.
    pub fn n_sensitive(&self) -> usize {
        self.dims[1..=self.n_protected].iter().product()
    }

    /// Number of unprotected profiles `|X|` (1 when there are no unprotected features).
    pub fn n_unprotected(&self) -> usize {
        self.dims[self.n_protected + 1..].iter().product()
    }

    /// Number of predictor profiles `|S| |X|`.
    pub fn n_predictors(&self) -> usize {
        self.n_sensitive() * self.n_unprotected()
    }

    /// Total number of joint profiles `M`.
    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn position_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown feature '{name}'")))
    }

    pub fn positions_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.position_of(n.as_ref())).collect()
    }

    /// Flat index of a full profile given as category names in schema order.
    pub fn index_of<S: AsRef<str>>(&self, profile: &[S]) -> Result<usize> {
        if profile.len() != self.features.len() {
            return Err(Error::Schema(format!(
                "profile has {} entries, schema has {} features",
                profile.len(),
                self.features.len()
            )));
        }
        let codes = profile
            .iter()
            .zip(&self.features)
            .map(|(c, f)| {
                f.code_of(c.as_ref()).ok_or_else(|| {
                    Error::Schema(format!("unknown category '{}' for feature '{}'", c.as_ref(), f.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.index_of_codes(&codes))
    }

    /// Flat index of a profile given as category codes. Panics on out-of-range codes.
    pub fn index_of_codes(&self, codes: &[usize]) -> usize {
        assert_eq!(codes.len(), self.dims.len(), "profile length mismatch");
        codes.iter().zip(&self.dims).fold(0, |acc, (&c, &d)| {
            assert!(c < d, "category code {c} out of range {d}");
            acc * d + c
        })
    }

    /// Category codes of the profile at `index`.
    pub fn codes_of(&self, index: usize) -> Vec<usize> {
        assert!(index < self.n_cells(), "profile index {index} out of range");
        let mut codes = vec![0; self.dims.len()];
        let mut rest = index;
        for (code, &d) in codes.iter_mut().zip(&self.dims).rev() {
            *code = rest % d;
            rest /= d;
        }
        codes
    }

    /// Category names of the profile at `index`, in schema order.
    pub fn profile_of(&self, index: usize) -> Vec<&str> {
        self.codes_of(index)
            .into_iter()
            .zip(&self.features)
            .map(|(c, f)| f.categories[c].as_str())
            .collect()
    }

    /// Splits a flat index into `(y, s, x)` block indices.
    pub fn split(&self, index: usize) -> (usize, usize, usize) {
        let nx = self.n_unprotected();
        let ns = self.n_sensitive();
        let x = index % nx;
        let ys = index / nx;
        (ys / ns, ys % ns, x)
    }

    /// Inverse of [`Schema::split`].
    pub fn join(&self, y: usize, s: usize, x: usize) -> usize {
        (y * self.n_sensitive() + s) * self.n_unprotected() + x
    }

    /// Index of a sensitive profile given as protected category names.
    pub fn sensitive_index<S: AsRef<str>>(&self, profile: &[S]) -> Result<usize> {
        let protected = self.protected();
        if profile.len() != protected.len() {
            return Err(Error::Schema(format!(
                "sensitive profile has {} entries, schema has {} protected features",
                profile.len(),
                protected.len()
            )));
        }
        let mut idx = 0;
        for (c, f) in profile.iter().zip(protected) {
            let code = f.code_of(c.as_ref()).ok_or_else(|| {
                Error::Schema(format!("unknown category '{}' for feature '{}'", c.as_ref(), f.name))
            })?;
            idx = idx * f.len() + code;
        }
        Ok(idx)
    }

    /// Category names of sensitive profile `s`.
    pub fn sensitive_profile(&self, s: usize) -> Vec<&str> {
        decode(s, self.protected())
    }

    /// Category names of unprotected profile `x`.
    pub fn unprotected_profile(&self, x: usize) -> Vec<&str> {
        decode(x, self.unprotected())
    }

    /// `|`-joined label of sensitive profile `s`, e.g. `female|white`.
    pub fn sensitive_label(&self, s: usize) -> String {
        self.sensitive_profile(s).join("|")
    }

    pub fn label(&self, y: usize) -> &str {
        &self.features[0].categories[y]
    }
}

fn decode(mut idx: usize, features: &[Feature]) -> Vec<&str> {
    let mut out = vec![""; features.len()];
    for (slot, f) in out.iter_mut().zip(features).rev() {
        *slot = f.categories[idx % f.len()].as_str();
        idx /= f.len();
    }
    out
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |fs: &[Feature]| fs.iter().map(|x| format!("{}({})", x.name, x.len())).collect::<Vec<_>>().join(", ");
        write!(
            f,
            "Y = {}; S = [{}]; X = [{}]; {} cells",
            names(&self.features[..1]),
            names(self.protected()),
            names(self.unprotected()),
            self.n_cells()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t1_schema() -> Schema {
        Schema::new(
            Feature::new("y", ["0", "1"]),
            vec![Feature::new("s", ["a", "b"])],
            vec![Feature::new("x", ["u", "v"])],
        )
        .unwrap()
    }

    #[test]
    fn index_examples() {
        let schema = t1_schema();
        assert_eq!(schema.index_of(&["0", "a", "u"]).unwrap(), 0);
        assert_eq!(schema.index_of(&["1", "b", "v"]).unwrap(), 7);
        assert_eq!(schema.index_of(&["0", "b", "u"]).unwrap(), 2);
        assert_eq!(schema.profile_of(2), vec!["0", "b", "u"]);
    }

    #[test]
    fn hand_enumeration_matches() {
        let schema = t1_schema();
        let mut expected = Vec::new();
        for y in ["0", "1"] {
            for s in ["a", "b"] {
                for x in ["u", "v"] {
                    expected.push([y, s, x]);
                }
            }
        }
        for (i, p) in expected.iter().enumerate() {
            assert_eq!(schema.index_of(p).unwrap(), i);
            assert_eq!(schema.profile_of(i), p.to_vec());
        }
    }

    #[test]
    fn unknown_names_are_schema_errors() {
        let schema = t1_schema();
        assert!(matches!(schema.index_of(&["0", "c", "u"]), Err(Error::Schema(_))));
        assert!(matches!(schema.index_of(&["0", "a"]), Err(Error::Schema(_))));
        assert!(matches!(schema.position_of("z"), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_bad_declarations() {
        let one = Schema::new(Feature::new("y", ["0"]), vec![Feature::new("s", ["a", "b"])], vec![]);
        assert!(one.is_err());
        let dup = Schema::new(Feature::new("y", ["0", "0"]), vec![Feature::new("s", ["a", "b"])], vec![]);
        assert!(dup.is_err());
        let dup_name = Schema::new(Feature::new("y", ["0", "1"]), vec![Feature::new("y", ["a", "b"])], vec![]);
        assert!(dup_name.is_err());
        let no_s = Schema::new(Feature::new("y", ["0", "1"]), vec![], vec![]);
        assert!(no_s.is_err());
    }

    #[test]
    fn split_join_with_multiple_features() {
        let schema = Schema::new(
            Feature::new("y", ["lo", "mid", "hi"]),
            vec![Feature::new("g", ["m", "f"]), Feature::new("r", ["w", "b", "h"])],
            vec![Feature::new("age", ["young", "old"]), Feature::new("edu", ["a", "b", "c", "d"])],
        )
        .unwrap();
        assert_eq!(schema.n_cells(), 3 * 6 * 8);
        for idx in 0..schema.n_cells() {
            let (y, s, x) = schema.split(idx);
            assert_eq!(schema.join(y, s, x), idx);
            let profile = schema.profile_of(idx);
            assert_eq!(schema.sensitive_profile(s), profile[1..3].to_vec());
            assert_eq!(schema.unprotected_profile(x), profile[3..].to_vec());
        }
        assert_eq!(schema.sensitive_index(&["f", "h"]).unwrap(), 5);
        assert_eq!(schema.sensitive_label(5), "f|h");
    }

    #[test]
    fn serde_round_trip() {
        let schema = t1_schema();
        let json = serde_json::to_string(&schema).unwrap();
        assert!(json.contains("\"protected\""));
        let back: Schema = serde_json::from_str(&json).unwrap();
        assert_eq!(back, schema);
    }
}
