//! Sparse affine expressions over program variables.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Handle to a scalar decision variable of a [`crate::ProgramBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub usize);

/// A real affine expression `sum_i coef_i * x_i + constant`.
///
/// Terms may repeat a variable; they are merged when a block is emitted.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self {
            terms: vec![(v.0, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        Self {
            terms: vec![(v.0, coef)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
    }

    /// Evaluates the expression at a full variable assignment.
    pub fn eval(&self, point: &[f64]) -> f64 {
        let mut acc = self.constant;
        for &(i, c) in &self.terms {
            acc += c * point[i];
        }
        acc
    }

    /// Merges duplicate variable terms and drops zeros.
    pub fn compress(&mut self) {
        if self.terms.len() <= 1 {
            return;
        }
        self.terms.sort_unstable_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, c) in &self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }

    pub fn scaled(mut self, a: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= a;
        }
        self.constant *= a;
        self
    }

    pub fn max_var(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self += rhs;
        self
    }
}

impl AddAssign for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self -= rhs;
        self
    }
}

impl SubAssign for LinExpr {
    fn sub_assign(&mut self, rhs: LinExpr) {
        self.terms
            .extend(rhs.terms.into_iter().map(|(i, c)| (i, -c)));
        self.constant -= rhs.constant;
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}
