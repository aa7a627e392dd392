//! Plain-text program dump/load for offline cross-checking.
//!
//! The format is a subset of the Conic Benchmark Format (CBF): free variables,
//! affine-map-in-cone constraints, sparse coordinate data. Cone keys are
//! `L+` (nonnegative), `Q` (second-order), and `QR` (rotated second-order).
//! Constraint rows read as `A x + b in K`, matching [`crate::ConicProgram`].
//! The objective sense is always `MAX` and an `OBJBCOORD` entry carries the
//! objective constant.

use std::fmt::Write as _;

use crate::expr::LinExpr;
use crate::program::{Cone, ConicProgram, ConstraintBlock};
use crate::ConicError;

pub fn dump(p: &ConicProgram) -> String {
    let mut out = String::new();
    out.push_str("VER\n3\n\n");
    out.push_str("OBJSENSE\nMAX\n\n");
    let _ = writeln!(out, "VAR\n{} 1\nF {}\n", p.num_vars, p.num_vars);

    let m = p.num_rows();
    let _ = writeln!(out, "CON\n{} {}", m, p.blocks.len());
    for b in &p.blocks {
        let key = match b.cone {
            Cone::NonNeg(_) => "L+",
            Cone::SecondOrder(_) => "Q",
            Cone::RotatedSecondOrder(_) => "QR",
        };
        let _ = writeln!(out, "{} {}", key, b.cone.dim());
    }
    out.push('\n');

    let obj_nnz = p.objective.iter().filter(|&&v| v != 0.0).count();
    if obj_nnz > 0 {
        let _ = writeln!(out, "OBJACOORD\n{obj_nnz}");
        for (j, &v) in p.objective.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(out, "{j} {v:.17e}");
            }
        }
        out.push('\n');
    }
    if p.objective_constant != 0.0 {
        let _ = writeln!(out, "OBJBCOORD\n{:.17e}\n", p.objective_constant);
    }

    let mut acoord = String::new();
    let mut bcoord = String::new();
    let mut a_nnz = 0usize;
    let mut b_nnz = 0usize;
    let mut row = 0usize;
    for b in &p.blocks {
        for r in &b.rows {
            for &(j, v) in &r.terms {
                if v != 0.0 {
                    let _ = writeln!(acoord, "{row} {j} {v:.17e}");
                    a_nnz += 1;
                }
            }
            if r.constant != 0.0 {
                let _ = writeln!(bcoord, "{row} {:.17e}", r.constant);
                b_nnz += 1;
            }
            row += 1;
        }
    }
    let _ = writeln!(out, "ACOORD\n{a_nnz}\n{acoord}");
    let _ = writeln!(out, "BCOORD\n{b_nnz}\n{bcoord}");
    out
}

pub fn load(text: &str) -> Result<ConicProgram, ConicError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let mut num_vars = 0usize;
    let mut cones: Vec<Cone> = Vec::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut objective_constant = 0.0;
    let mut a_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut b_entries: Vec<(usize, f64)> = Vec::new();

    let err = |line: usize, msg: &str| ConicError::Parse {
        line,
        msg: msg.to_string(),
    };

    while let Some((ln, tok)) = lines.next() {
        match tok {
            "VER" => {
                lines.next().ok_or_else(|| err(ln, "missing version"))?;
            }
            "OBJSENSE" => {
                let (ln2, sense) = lines.next().ok_or_else(|| err(ln, "missing sense"))?;
                if sense != "MAX" {
                    return Err(err(ln2, "only MAX objective sense is supported"));
                }
            }
            "VAR" => {
                let (ln2, hdr) = lines.next().ok_or_else(|| err(ln, "missing VAR header"))?;
                num_vars = hdr
                    .split_whitespace()
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| err(ln2, "bad VAR header"))?;
                objective = vec![0.0; num_vars];
                // consume the single free-cone line
                let (ln3, f) = lines.next().ok_or_else(|| err(ln2, "missing VAR cone"))?;
                if !f.starts_with('F') {
                    return Err(err(ln3, "only free variables are supported"));
                }
            }
            "CON" => {
                let (ln2, hdr) = lines.next().ok_or_else(|| err(ln, "missing CON header"))?;
                let mut it = hdr.split_whitespace();
                let _rows: usize = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| err(ln2, "bad CON header"))?;
                let nblocks: usize = it
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| err(ln2, "bad CON header"))?;
                for _ in 0..nblocks {
                    let (ln3, c) = lines.next().ok_or_else(|| err(ln2, "missing cone"))?;
                    let mut it = c.split_whitespace();
                    let key = it.next().ok_or_else(|| err(ln3, "missing cone key"))?;
                    let dim: usize = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad cone dim"))?;
                    cones.push(match key {
                        "L+" => Cone::NonNeg(dim),
                        "Q" => Cone::SecondOrder(dim),
                        "QR" => Cone::RotatedSecondOrder(dim),
                        _ => return Err(err(ln3, "unknown cone key")),
                    });
                }
            }
            "OBJACOORD" => {
                let (ln2, cnt) = lines.next().ok_or_else(|| err(ln, "missing count"))?;
                let cnt: usize = cnt.parse().map_err(|_| err(ln2, "bad count"))?;
                for _ in 0..cnt {
                    let (ln3, e) = lines.next().ok_or_else(|| err(ln2, "missing entry"))?;
                    let mut it = e.split_whitespace();
                    let j: usize = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad index"))?;
                    let v: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad value"))?;
                    objective[j] = v;
                }
            }
            "OBJBCOORD" => {
                let (ln2, v) = lines.next().ok_or_else(|| err(ln, "missing value"))?;
                objective_constant = v.parse().map_err(|_| err(ln2, "bad value"))?;
            }
            "ACOORD" => {
                let (ln2, cnt) = lines.next().ok_or_else(|| err(ln, "missing count"))?;
                let cnt: usize = cnt.parse().map_err(|_| err(ln2, "bad count"))?;
                for _ in 0..cnt {
                    let (ln3, e) = lines.next().ok_or_else(|| err(ln2, "missing entry"))?;
                    let mut it = e.split_whitespace();
                    let r: usize = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad row"))?;
                    let j: usize = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad col"))?;
                    let v: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad value"))?;
                    a_entries.push((r, j, v));
                }
            }
            "BCOORD" => {
                let (ln2, cnt) = lines.next().ok_or_else(|| err(ln, "missing count"))?;
                let cnt: usize = cnt.parse().map_err(|_| err(ln2, "bad count"))?;
                for _ in 0..cnt {
                    let (ln3, e) = lines.next().ok_or_else(|| err(ln2, "missing entry"))?;
                    let mut it = e.split_whitespace();
                    let r: usize = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad row"))?;
                    let v: f64 = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| err(ln3, "bad value"))?;
                    b_entries.push((r, v));
                }
            }
            other => {
                return Err(err(ln, &format!("unknown section `{other}`")));
            }
        }
    }

    let total_rows: usize = cones.iter().map(|c| c.dim()).sum();
    let mut rows: Vec<LinExpr> = vec![LinExpr::zero(); total_rows];
    for (r, j, v) in a_entries {
        if r >= total_rows || j >= num_vars {
            return Err(err(0, "coordinate out of range"));
        }
        rows[r].terms.push((j, v));
    }
    for (r, v) in b_entries {
        if r >= total_rows {
            return Err(err(0, "coordinate out of range"));
        }
        rows[r].constant = v;
    }

    let mut blocks = Vec::with_capacity(cones.len());
    let mut at = 0usize;
    for (bi, cone) in cones.into_iter().enumerate() {
        let d = cone.dim();
        blocks.push(ConstraintBlock {
            cone,
            rows: rows[at..at + d].to_vec(),
            label: format!("block_{bi}"),
        });
        at += d;
    }

    let p = ConicProgram {
        num_vars,
        objective,
        objective_constant,
        blocks,
        var_names: (0..num_vars).map(|i| format!("x{i}")).collect(),
    };
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{LinExpr, ProgramBuilder};

    #[test]
    fn dump_load_round_trip() {
        let mut pb = ProgramBuilder::new();
        let x = pb.add_var("x");
        let y = pb.add_var("y");
        pb.add_objective_term(x, -1.0);
        pb.add_objective_expr(&LinExpr::constant(2.5));
        pb.nonneg(LinExpr::var(x) - LinExpr::constant(3.0), "lb");
        pb.norm_le(
            vec![LinExpr::var(y)],
            LinExpr::constant(2.0),
            "abs_bound",
        );
        pb.quad_le(vec![LinExpr::var(x)], LinExpr::var(y), "lift");
        let p = pb.finish();
        let text = dump(&p);
        let q = load(&text).unwrap();
        assert_eq!(q.num_vars, p.num_vars);
        assert_eq!(q.blocks.len(), p.blocks.len());
        assert_eq!(q.objective, p.objective);
        assert_eq!(q.objective_constant, p.objective_constant);
        // identical evaluation of every row at a probe point
        let pt = [1.25, -0.5];
        for (bp, bq) in p.blocks.iter().zip(&q.blocks) {
            assert_eq!(bp.cone, bq.cone);
            for (rp, rq) in bp.rows.iter().zip(&bq.rows) {
                assert!((rp.eval(&pt) - rq.eval(&pt)).abs() < 1e-15);
            }
        }
    }
}
