//! Information projection by iterative proportional fitting.
//!
//! Starting from the reference distribution, each constraint block is fitted
//! in turn by the multiplicative update `p <- p * target_m / p_m`, where `m` is
//! the marginal cell the joint cell belongs to. Cycling through the blocks in
//! a fixed order converges to the minimum-KL distribution within the
//! constraint set whenever that set is non-empty. Cells that start at zero stay
//! at zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::metrics::kl_divergence_cells;
use crate::table::JointTable;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_CYCLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Max marginal residual accepted after a full cycle.
    pub tolerance: f64,
    pub max_cycles: usize,
    /// Keep the residual after every cycle in the diagnostics.
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_cycles: DEFAULT_MAX_CYCLES,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Argument(format!("tolerance must be > 0, got {}", self.tolerance)));
        }
        if self.max_cycles == 0 {
            return Err(Error::Argument("max_cycles must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDiagnostics {
    pub converged: bool,
    pub cycles_used: usize,
    pub final_residual: f64,
    /// `D(q || reference)` in nats.
    pub kl_to_reference: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Solver gave up with the residual still above tolerance.
#[derive(Debug, Clone)]
pub struct NonConvergence {
    pub diagnostics: ProjectionDiagnostics,
    pub last_iterate: JointTable,
}

impl fmt::Display for NonConvergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "projection did not converge after {} cycles (residual {:e}); the constraint set may be infeasible",
            self.diagnostics.cycles_used, self.diagnostics.final_residual
        )
    }
}

/// The iterate right after one constraint block has been fitted.
#[derive(Debug)]
pub struct FitStep<'a> {
    /// Zero-based cycle number.
    pub cycle: usize,
    /// Position of the block in the set's order.
    pub position: usize,
    pub kind: ConstraintKind,
    pub cells: &'a [f64],
}

/// Projects `reference` onto `set`.
pub fn project(
    reference: &JointTable,
    set: &ConstraintSet,
    opts: &SolverOptions,
) -> Result<(JointTable, ProjectionDiagnostics)> {
    project_observed(reference, set, opts, |_| {})
}

/// [`project`] calling `observer` after every block fit.
pub fn project_observed<F>(
    reference: &JointTable,
    set: &ConstraintSet,
    opts: &SolverOptions,
    mut observer: F,
) -> Result<(JointTable, ProjectionDiagnostics)>
where
    F: FnMut(&FitStep<'_>),
{
    opts.validate()?;
    if reference.schema() != set.schema() {
        return Err(Error::Argument("reference and constraint set use different schemas".into()));
    }
    let mut cells = reference.values().to_vec();
    for (c, &z) in cells.iter_mut().zip(set.forced_zero()) {
        if z {
            *c = 0.0;
        }
    }

    let mut trace = opts.record_trace.then(Vec::new);
    let mut residual = f64::INFINITY;
    let mut cycles = 0;
    while cycles < opts.max_cycles {
        for (position, constraint) in set.constraints().iter().enumerate() {
            let current = constraint.marginal_of(&cells);
            let target = constraint.target().values();
            let mut ratio = vec![0.0; current.len()];
            for (m, r) in ratio.iter_mut().enumerate() {
                let t = target[m];
                if !constraint.is_active(m) || t == 0.0 {
                    continue;
                }
                if current[m] <= 0.0 {
                    return Err(Error::IllPosedReference(format!(
                        "{} target cell {m} is {t} but the iterate has no mass there",
                        constraint.kind().as_str()
                    )));
                }
                *r = t / current[m];
            }
            for (c, &m) in cells.iter_mut().zip(constraint.cell_map()) {
                *c *= ratio[m];
            }
            observer(&FitStep {
                cycle: cycles,
                position,
                kind: constraint.kind(),
                cells: &cells,
            });
        }
        cycles += 1;
        residual = set.residual_of(&cells);
        if let Some(t) = trace.as_mut() {
            t.push(residual);
        }
        if residual <= opts.tolerance {
            break;
        }
    }

    let kl_to_reference = kl_divergence_cells(&cells, reference.values());
    let converged = residual <= opts.tolerance;
    let diagnostics = ProjectionDiagnostics {
        converged,
        cycles_used: cycles,
        final_residual: residual,
        kl_to_reference,
        trace,
    };
    let table = JointTable::from_raw(reference.schema_arc().clone(), cells);
    if !converged {
        return Err(Error::NonConvergence(Box::new(NonConvergence {
            diagnostics,
            last_iterate: table,
        })));
    }
    Ok((table, diagnostics))
}

/// `D(p || q0) - D(p || q) - D(q || q0)`.
///
/// For `q` the projection of `q0` and any `p` in the same constraint set the
/// defect vanishes up to rounding.
pub fn pythagorean_check(p: &JointTable, q: &JointTable, q0: &JointTable) -> Result<f64> {
    let d_p_q0 = kl_divergence_cells(p.values(), q0.values());
    let d_p_q = kl_divergence_cells(p.values(), q.values());
    let d_q_q0 = kl_divergence_cells(q.values(), q0.values());
    if !(d_p_q0.is_finite() && d_p_q.is_finite() && d_q_q0.is_finite()) {
        return Err(Error::Support(format!(
            "infinite divergence: D(p||q0) = {d_p_q0}, D(p||q) = {d_p_q}, D(q||q0) = {d_q_q0}"
        )));
    }
    Ok(d_p_q0 - d_p_q - d_q_q0)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::constraints::{build_constraints, ConstraintMode};
    use crate::reference::SupportMask;
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

    fn t1() -> JointTable {
        let g = [0.1, 0.4, 0.4, 0.1];
        let v = g.iter().flat_map(|&x| [x * 0.5, x * 0.5]).collect();
        JointTable::new(schema(), v).unwrap()
    }

    #[test]
    fn uniform_is_already_projected() {
        let u = JointTable::uniform(schema());
        let set = build_constraints(&u, ConstraintMode::PUR).unwrap();
        let (q, d) = project(&u, &set, &SolverOptions::default()).unwrap();
        assert_eq!(d.cycles_used, 1);
        assert_eq!(d.final_residual, 0.0);
        assert!(d.converged);
        assert_eq!(q, u);
    }

    #[test]
    fn t1_pur_projection_is_uniform() {
        let set = build_constraints(&t1(), ConstraintMode::PUR).unwrap();
        let (q, d) = project(&t1(), &set, &SolverOptions::default()).unwrap();
        assert!(d.converged);
        for v in q.values() {
            assert!((v - 0.125).abs() < 1e-10);
        }
    }

    #[test]
    fn t1_parity_projection_single_fit() {
        let set = build_constraints(&t1(), ConstraintMode::P).unwrap();
        let (q, d) = project(&t1(), &set, &SolverOptions::default()).unwrap();
        assert_eq!(d.cycles_used, 1);
        let ys = q.marginalize(&[0, 1]).unwrap();
        assert!(ys.values().iter().all(|v| (v - 0.25).abs() < 1e-15));
        // x | (y, s) unchanged
        let before = t1().conditional(&[2], &[0, 1]).unwrap();
        let after = q.conditional(&[2], &[0, 1]).unwrap();
        for g in 0..4 {
            assert_eq!(before.slice(g), after.slice(g));
        }
    }

    #[test]
    fn zero_reference_cells_stay_zero() {
        let v = vec![0.1, 0.0, 0.2, 0.1, 0.2, 0.1, 0.0, 0.3];
        let f = JointTable::new(schema(), v).unwrap();
        let set = build_constraints(&f, ConstraintMode::P).unwrap();
        let (q, _) = project(&f, &set, &SolverOptions::default()).unwrap();
        assert_eq!(q.get(1), 0.0);
        assert_eq!(q.get(6), 0.0);
    }

    #[test]
    fn forced_zero_cells_are_cleared() {
        let f = JointTable::new(schema(), vec![0.1, 0.15, 0.2, 0.15, 0.2, 0.0, 0.2, 0.0]).unwrap();
        let set = build_constraints(&f, ConstraintMode::PU)
            .unwrap()
            .reduce(&SupportMask::full(8))
            .unwrap();
        let (q, _) = project(&JointTable::uniform(schema()), &set, &SolverOptions::default()).unwrap();
        assert_eq!(q.get(5), 0.0);
        assert_eq!(q.get(7), 0.0);
    }

    #[test]
    fn empty_block_with_positive_target_is_ill_posed() {
        // reference has no mass on s = b while parity asks for it
        let q0 = JointTable::new(schema(), vec![0.25, 0.25, 0.0, 0.0, 0.25, 0.25, 0.0, 0.0]).unwrap();
        let set = build_constraints(&t1(), ConstraintMode::P).unwrap();
        assert!(matches!(
            project(&q0, &set, &SolverOptions::default()),
            Err(Error::IllPosedReference(_))
        ));
    }

    #[test]
    fn exhausted_cycles_report_diagnostics() {
        let set = build_constraints(&t1(), ConstraintMode::PUR).unwrap();
        let q0 = JointTable::new(schema(), vec![0.3, 0.05, 0.05, 0.1, 0.1, 0.2, 0.15, 0.05]).unwrap();
        let opts = SolverOptions {
            tolerance: 1e-15,
            max_cycles: 2,
            record_trace: true,
        };
        match project(&q0, &set, &opts) {
            Err(Error::NonConvergence(nc)) => {
                assert!(!nc.diagnostics.converged);
                assert_eq!(nc.diagnostics.cycles_used, 2);
                assert_eq!(nc.diagnostics.trace.as_ref().unwrap().len(), 2);
                assert!(nc.diagnostics.final_residual > 1e-15);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn bad_options_rejected() {
        let set = build_constraints(&t1(), ConstraintMode::P).unwrap();
        let bad = SolverOptions {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(project(&t1(), &set, &bad).is_err());
        let bad = SolverOptions {
            max_cycles: 0,
            ..Default::default()
        };
        assert!(project(&t1(), &set, &bad).is_err());
    }

    #[test]
    fn pythagorean_trivial_cases() {
        let u = JointTable::uniform(schema());
        assert_eq!(pythagorean_check(&u, &u, &u).unwrap(), 0.0);
        let set = build_constraints(&t1(), ConstraintMode::PUR).unwrap();
        let (q, _) = project(&t1(), &set, &SolverOptions::default()).unwrap();
        assert!(pythagorean_check(&q, &q, &t1()).unwrap().abs() < 1e-12);
        let point = JointTable::new(schema(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let other = JointTable::new(schema(), vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(pythagorean_check(&point, &point, &other), Err(Error::Support(_))));
    }
}
