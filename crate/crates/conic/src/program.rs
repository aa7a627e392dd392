//! Program representation, builder, and point validation.

use crate::expr::{LinExpr, VarId};
use crate::ConicError;

/// Cone tag for a constraint block. The dimension is the number of rows the
/// block's affine map produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// Componentwise `v >= 0`.
    NonNeg(usize),
    /// `v[0] >= ||v[1..]||`.
    SecondOrder(usize),
    /// `2 v[0] v[1] >= ||v[2..]||^2`, `v[0] >= 0`, `v[1] >= 0`.
    RotatedSecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNeg(d) | Cone::SecondOrder(d) | Cone::RotatedSecondOrder(d) => d,
        }
    }
}

/// One constraint block `A x + b in K`, stored as affine rows.
#[derive(Debug, Clone)]
pub struct ConstraintBlock {
    pub cone: Cone,
    pub rows: Vec<LinExpr>,
    pub label: String,
}

/// A standard-form cone program with a *maximize* objective.
///
/// The solver minimizes the negated objective internally; reported objective
/// values follow the maximize convention and include `objective_constant`.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub blocks: Vec<ConstraintBlock>,
    pub var_names: Vec<String>,
}

impl ConicProgram {
    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.cone.dim()).sum()
    }

    pub fn objective_value(&self, point: &[f64]) -> f64 {
        let mut v = self.objective_constant;
        for (c, x) in self.objective.iter().zip(point) {
            v += c * x;
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        if self.objective.len() != self.num_vars {
            return Err(ConicError::VariableOutOfRange {
                var: self.objective.len(),
                num_vars: self.num_vars,
            });
        }
        for b in &self.blocks {
            if b.rows.len() != b.cone.dim() {
                return Err(ConicError::BlockDimension {
                    label: b.label.clone(),
                    cone: b.cone,
                    got: b.rows.len(),
                    want: b.cone.dim(),
                });
            }
            match b.cone {
                Cone::NonNeg(d) | Cone::SecondOrder(d) if d == 0 => {
                    return Err(ConicError::BadConeDimension(0))
                }
                Cone::RotatedSecondOrder(d) if d < 2 => {
                    return Err(ConicError::BadConeDimension(d))
                }
                _ => {}
            }
            for r in &b.rows {
                if let Some(mx) = r.max_var() {
                    if mx >= self.num_vars {
                        return Err(ConicError::VariableOutOfRange {
                            var: mx,
                            num_vars: self.num_vars,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Human-readable listing of one block, for test triage.
    pub fn describe_block(&self, idx: usize) -> String {
        use std::fmt::Write;
        let b = &self.blocks[idx];
        let mut out = format!("block {} `{}` {:?}\n", idx, b.label, b.cone);
        for (r, row) in b.rows.iter().enumerate() {
            let _ = write!(out, "  row {r}: ");
            for &(i, c) in &row.terms {
                let name = self
                    .var_names
                    .get(i)
                    .map(String::as_str)
                    .unwrap_or("?");
                let _ = write!(out, "{c:+.6e}*{name} ");
            }
            let _ = writeln!(out, "{:+.6e}", row.constant);
        }
        out
    }
}

/// Incremental builder used by surrogate emitters.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    var_names: Vec<String>,
    objective: Vec<f64>,
    objective_constant: f64,
    blocks: Vec<ConstraintBlock>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.var_names.push(name.into());
        self.objective.push(0.0);
        VarId(self.var_names.len() - 1)
    }

    /// Adds `coef` to the maximize-objective coefficient of `v`.
    pub fn add_objective_term(&mut self, v: VarId, coef: f64) {
        self.objective[v.0] += coef;
    }

    /// Adds a whole affine expression to the maximize objective.
    pub fn add_objective_expr(&mut self, e: &LinExpr) {
        for &(i, c) in &e.terms {
            self.objective[i] += c;
        }
        self.objective_constant += e.constant;
    }

    pub fn add_block(&mut self, cone: Cone, mut rows: Vec<LinExpr>, label: impl Into<String>) {
        for r in &mut rows {
            r.compress();
        }
        self.blocks.push(ConstraintBlock {
            cone,
            rows,
            label: label.into(),
        });
    }

    /// `expr >= 0` as a one-row nonnegative block.
    pub fn nonneg(&mut self, expr: LinExpr, label: impl Into<String>) {
        self.add_block(Cone::NonNeg(1), vec![expr], label);
    }

    /// `||rows|| <= bound` as a second-order cone.
    pub fn norm_le(&mut self, rows: Vec<LinExpr>, bound: LinExpr, label: impl Into<String>) {
        let mut all = Vec::with_capacity(rows.len() + 1);
        all.push(bound);
        all.extend(rows);
        let d = all.len();
        self.add_block(Cone::SecondOrder(d), all, label);
    }

    /// `||rows||^2 <= upper` lifted as the rotated cone `(upper, 1/2, rows)`.
    pub fn quad_le(&mut self, rows: Vec<LinExpr>, upper: LinExpr, label: impl Into<String>) {
        let mut all = Vec::with_capacity(rows.len() + 2);
        all.push(upper);
        all.push(LinExpr::constant(0.5));
        all.extend(rows);
        let d = all.len();
        self.add_block(Cone::RotatedSecondOrder(d), all, label);
    }

    pub fn finish(self) -> ConicProgram {
        ConicProgram {
            num_vars: self.var_names.len(),
            objective: self.objective,
            objective_constant: self.objective_constant,
            blocks: self.blocks,
            var_names: self.var_names,
        }
    }
}

/// Per-block distance to the cone at a claimed point.
#[derive(Debug, Clone)]
pub struct BlockResidual {
    pub label: String,
    /// Euclidean distance from the block value to its cone (0 when feasible).
    pub distance: f64,
}

/// Evaluates every block of `program` at `point` and returns the per-block
/// distance to the cone plus the objective value.
pub fn residuals(
    program: &ConicProgram,
    point: &[f64],
) -> Result<(Vec<BlockResidual>, f64), ConicError> {
    if point.len() != program.num_vars {
        return Err(ConicError::PointLength {
            got: point.len(),
            want: program.num_vars,
        });
    }
    let mut out = Vec::with_capacity(program.blocks.len());
    for b in &program.blocks {
        let v: Vec<f64> = b.rows.iter().map(|r| r.eval(point)).collect();
        let distance = match b.cone {
            Cone::NonNeg(_) => v.iter().map(|&t| t.min(0.0).powi(2)).sum::<f64>().sqrt(),
            Cone::SecondOrder(_) => soc_distance(&v),
            Cone::RotatedSecondOrder(_) => {
                // Orthogonal rotation onto the standard cone preserves distance.
                let mut w = v.clone();
                let (u0, u1) = (v[0], v[1]);
                w[0] = (u0 + u1) / std::f64::consts::SQRT_2;
                w[1] = (u0 - u1) / std::f64::consts::SQRT_2;
                soc_distance(&w)
            }
        };
        out.push(BlockResidual {
            label: b.label.clone(),
            distance,
        });
    }
    let obj = program.objective_value(point);
    Ok((out, obj))
}

fn soc_distance(v: &[f64]) -> f64 {
    let t = v[0];
    let xn = v[1..].iter().map(|&a| a * a).sum::<f64>().sqrt();
    if xn <= t {
        0.0
    } else if xn <= -t {
        (t * t + xn * xn).sqrt()
    } else {
        (xn - t) / std::f64::consts::SQRT_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soc_distance_cases() {
        assert_eq!(soc_distance(&[2.0, 1.0, 1.0]), 0.0);
        // Deep in the polar cone: distance is the full norm.
        let d = soc_distance(&[-5.0, 1.0, 0.0]);
        assert!((d - (26.0f64).sqrt()).abs() < 1e-12);
        // Outside both: project onto the boundary.
        let d = soc_distance(&[0.0, 1.0]);
        assert!((d - 1.0 / std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn residuals_flag_only_violated_blocks() {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_var("x");
        let y = pb.add_var("y");
        pb.nonneg(LinExpr::var(x) - LinExpr::constant(3.0), "x_ge_3");
        pb.nonneg(LinExpr::var(y), "y_ge_0");
        let prog = pb.finish();
        let (res, _) = residuals(&prog, &[1.0, 4.0]).unwrap();
        assert!(res[0].distance > 1.9);
        assert_eq!(res[1].distance, 0.0);
    }

    #[test]
    fn quad_le_rotated_cone_feasibility() {
        let mut pb = ProgramBuilder::new();
        let u = pb.add_var("u");
        let w = pb.add_var("w");
        pb.quad_le(vec![LinExpr::var(w)], LinExpr::var(u), "w2_le_u");
        let prog = pb.finish();
        // w^2 = 4 <= u = 5 feasible; u = 3 infeasible.
        let (res, _) = residuals(&prog, &[5.0, 2.0]).unwrap();
        assert_eq!(res[0].distance, 0.0);
        let (res, _) = residuals(&prog, &[3.0, 2.0]).unwrap();
        assert!(res[0].distance > 0.0);
    }
}
