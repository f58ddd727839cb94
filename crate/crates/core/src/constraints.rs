//! Parity, utility and realism marginal constraints.
//!
//! Each constraint pairs a feature subset with a target marginal table. The
//! binary coefficient matrix of the linear system is never built: applying a
//! block of rows is a marginalization over the complementary features, driven
//! by a precomputed joint-cell to marginal-cell map.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::SupportMask;
use crate::schema::Schema;
use crate::table::{marginal_map, JointTable, MarginalTable};

/// Tolerance on the unit mass of constraint targets.
const TARGET_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    /// `p(y, s) = f(y) f(s)`
    Parity,
    /// `p(y, x) = f(y, x)`
    Utility,
    /// `p(s, x) = f(s, x)`
    Realism,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::Parity => "parity",
            ConstraintKind::Utility => "utility",
            ConstraintKind::Realism => "realism",
        }
    }

    /// Schema positions summed against by this kind of constraint.
    pub fn features(&self, schema: &Schema) -> Vec<usize> {
        match self {
            ConstraintKind::Parity => {
                let mut v = schema.response_position();
                v.extend(schema.protected_positions());
                v
            }
            ConstraintKind::Utility => {
                let mut v = schema.response_position();
                v.extend(schema.unprotected_positions());
                v
            }
            ConstraintKind::Realism => schema.predictor_positions(),
        }
    }
}

/// Which constraint groups are imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintMode {
    #[serde(rename = "p")]
    P,
    #[serde(rename = "pu")]
    PU,
    #[serde(rename = "pur")]
    PUR,
}

impl ConstraintMode {
    pub fn kinds(&self) -> &'static [ConstraintKind] {
        use ConstraintKind::*;
        match self {
            ConstraintMode::P => &[Parity],
            ConstraintMode::PU => &[Parity, Utility],
            ConstraintMode::PUR => &[Parity, Utility, Realism],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintMode::P => "p",
            ConstraintMode::PU => "pu",
            ConstraintMode::PUR => "pur",
        }
    }

    fn from_kinds(kinds: &[ConstraintKind]) -> Option<Self> {
        let has = |k| kinds.contains(&k);
        use ConstraintKind::*;
        match (kinds.len(), has(Parity), has(Utility), has(Realism)) {
            (1, true, false, false) => Some(ConstraintMode::P),
            (2, true, true, false) => Some(ConstraintMode::PU),
            (3, true, true, true) => Some(ConstraintMode::PUR),
            _ => None,
        }
    }
}

impl FromStr for ConstraintMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" => Ok(ConstraintMode::P),
            "pu" => Ok(ConstraintMode::PU),
            "pur" => Ok(ConstraintMode::PUR),
            other => Err(Error::Argument(format!("unknown constraint mode '{other}'"))),
        }
    }
}

impl fmt::Display for ConstraintMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str().to_ascii_uppercase())
    }
}

/// One block of marginal constraints `sum_{alpha in block m} p_alpha = target_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalConstraint {
    kind: ConstraintKind,
    target: MarginalTable,
    cell_map: Vec<usize>,
    active: Vec<bool>,
}

impl MarginalConstraint {
    /// Wraps an arbitrary target over the subset implied by `kind`.
    pub fn new(schema: &Schema, kind: ConstraintKind, target: MarginalTable) -> Result<Self> {
        let features = kind.features(schema);
        if target.features() != features.as_slice() {
            return Err(Error::Argument(format!(
                "{} target has features {:?}, expected {:?}",
                kind.as_str(),
                target.features(),
                features
            )));
        }
        let (_, cell_map) = marginal_map(schema, &features)?;
        let active = vec![true; target.len()];
        Ok(MarginalConstraint {
            kind,
            target,
            cell_map,
            active,
        })
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn features(&self) -> &[usize] {
        self.target.features()
    }

    pub fn target(&self) -> &MarginalTable {
        &self.target
    }

    /// Marginal cell of each joint cell.
    pub fn cell_map(&self) -> &[usize] {
        &self.cell_map
    }

    /// Whether marginal cell `m` is still an active row (not dropped by reduction).
    pub fn is_active(&self, m: usize) -> bool {
        self.active[m]
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Applies this block of rows to a vector of joint cells.
    pub fn marginal_of(&self, cells: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.target.len()];
        for (&v, &m) in cells.iter().zip(&self.cell_map) {
            out[m] += v;
        }
        out
    }

    /// Max absolute deviation over the active rows.
    pub fn residual_of(&self, cells: &[f64]) -> f64 {
        self.marginal_of(cells)
            .iter()
            .zip(self.target.values())
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|((p, t), _)| (p - t).abs())
            .fold(0.0, f64::max)
    }
}

/// Ordered list of marginal constraints plus the cells pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    schema: Arc<Schema>,
    mode: ConstraintMode,
    constraints: Vec<MarginalConstraint>,
    forced_zero: Vec<bool>,
}

/// Builds the parity (and utility, realism) constraints implied by `f`.
///
/// The parity target is the outer product of the response and sensitive
/// marginals of `f`; utility and realism targets are `f`'s own `(Y, X)` and
/// `(S, X)` marginals.
pub fn build_constraints(f: &JointTable, mode: ConstraintMode) -> Result<ConstraintSet> {
    let schema = f.schema_arc().clone();
    let mut constraints = Vec::with_capacity(3);
    for &kind in mode.kinds() {
        let features = kind.features(&schema);
        let target = match kind {
            ConstraintKind::Parity => {
                let fy = f.marginalize(&[0])?;
                let fs = f.marginalize(&schema.protected_positions())?;
                let values = fy
                    .values()
                    .iter()
                    .flat_map(|&py| fs.values().iter().map(move |&ps| py * ps))
                    .collect();
                MarginalTable::new(&schema, features, values)?
            }
            _ => f.marginalize(&features)?,
        };
        let mass = target.mass();
        if (mass - 1.0).abs() > TARGET_MASS_TOLERANCE {
            return Err(Error::Argument(format!("{} target has mass {mass}", kind.as_str())));
        }
        constraints.push(MarginalConstraint::new(&schema, kind, target)?);
    }
    let forced_zero = vec![false; schema.n_cells()];
    Ok(ConstraintSet {
        schema,
        mode,
        constraints,
        forced_zero,
    })
}

impl ConstraintSet {
    /// Assembles a set from hand-built constraints. The kinds present must
    /// form one of the P, PU or PUR groups; order is normalized to
    /// parity, utility, realism.
    pub fn from_constraints(schema: Arc<Schema>, mut constraints: Vec<MarginalConstraint>) -> Result<Self> {
        let kinds: Vec<_> = constraints.iter().map(|c| c.kind).collect();
        let mode = ConstraintMode::from_kinds(&kinds)
            .ok_or_else(|| Error::Argument(format!("constraint kinds {kinds:?} do not form P, PU or PUR")))?;
        for c in &constraints {
            if c.cell_map.len() != schema.n_cells() {
                return Err(Error::Argument("constraint built for a different schema".into()));
            }
        }
        constraints.sort_by_key(|c| c.kind as u8);
        let forced_zero = vec![false; schema.n_cells()];
        Ok(ConstraintSet {
            schema,
            mode,
            constraints,
            forced_zero,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn constraints(&self) -> &[MarginalConstraint] {
        &self.constraints
    }

    pub fn get(&self, kind: ConstraintKind) -> Option<&MarginalConstraint> {
        self.constraints.iter().find(|c| c.kind == kind)
    }

    pub fn is_forced_zero(&self, index: usize) -> bool {
        self.forced_zero[index]
    }

    pub fn forced_zero(&self) -> &[bool] {
        &self.forced_zero
    }

    pub fn n_forced_zero(&self) -> usize {
        self.forced_zero.iter().filter(|z| **z).count()
    }

    /// Same constraints fitted in a different order.
    pub fn reordered(&self, order: &[ConstraintKind]) -> Result<Self> {
        if order.len() != self.constraints.len() {
            return Err(Error::Argument("order must name every constraint exactly once".into()));
        }
        let mut constraints = Vec::with_capacity(order.len());
        for kind in order {
            let c = self
                .get(*kind)
                .ok_or_else(|| Error::Argument(format!("no {} constraint in set", kind.as_str())))?;
            if constraints.iter().any(|d: &MarginalConstraint| d.kind == *kind) {
                return Err(Error::Argument(format!("{} named twice", kind.as_str())));
            }
            constraints.push(c.clone());
        }
        Ok(ConstraintSet {
            constraints,
            ..self.clone()
        })
    }

    /// Zero-marginal reduction.
    ///
    /// Cells outside `mask` and every cell covered by a zero target are pinned
    /// to zero, and zero-target rows are dropped. A positive target whose
    /// cells are all pinned makes the system infeasible.
    pub fn reduce(&self, mask: &SupportMask) -> Result<Self> {
        if mask.len() != self.schema.n_cells() {
            return Err(Error::Argument("mask and schema sizes differ".into()));
        }
        let mut out = self.clone();
        for (z, &adm) in out.forced_zero.iter_mut().zip(mask.as_slice()) {
            *z |= !adm;
        }
        for c in &mut out.constraints {
            for (m, t) in c.target.values().iter().enumerate() {
                if *t == 0.0 {
                    c.active[m] = false;
                }
            }
            for (z, &m) in out.forced_zero.iter_mut().zip(&c.cell_map) {
                if !c.active[m] {
                    *z = true;
                }
            }
        }
        // a positive row needs at least one free cell
        for c in &out.constraints {
            let mut free = vec![false; c.target.len()];
            for (&z, &m) in out.forced_zero.iter().zip(&c.cell_map) {
                if !z {
                    free[m] = true;
                }
            }
            if let Some(m) = (0..free.len()).find(|&m| c.active[m] && !free[m]) {
                return Err(Error::Infeasible(format!(
                    "{} target cell {} is {} but all of its joint cells are forced to zero",
                    c.kind.as_str(),
                    m,
                    c.target.values()[m]
                )));
            }
        }
        Ok(out)
    }

    /// Max-norm violation of the active rows by `p`.
    pub fn residual(&self, p: &JointTable) -> f64 {
        self.residual_of(p.values())
    }

    pub fn residual_of(&self, cells: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.residual_of(cells))
            .fold(0.0, f64::max)
    }
}
