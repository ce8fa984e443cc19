//! Program representation: a minimization LP in sparse column form, plus a
//! binary-marked wrapper for mixed-binary programs.

use std::fmt::{self, Write as _};

use crate::error::SolverError;

/// Sense of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }
}

/// Handle to a column returned by [`LinearProgram::add_var`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub usize);

/// Handle to a row returned by [`LinearProgram::add_row`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Row(pub usize);

/// A linear program `min c'x + offset  s.t.  A x (<=,=,>=) b,  l <= x <= u`.
///
/// Columns are stored sparsely; rows may be added in any order and the
/// coefficients are appended to the touched columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub(crate) cost: Vec<f64>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) names: Vec<String>,
    /// `columns[j]` holds `(row, coefficient)` pairs sorted by row index.
    pub(crate) columns: Vec<Vec<(usize, f64)>>,
    pub(crate) senses: Vec<Sense>,
    pub(crate) rhs: Vec<f64>,
    pub(crate) offset: f64,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Adds a column with objective coefficient `cost` and bounds
    /// `[lower, upper]`. Use `f64::INFINITY` / `f64::NEG_INFINITY` for
    /// missing bounds.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> Var {
        let name = format!("x{}", self.cost.len());
        self.add_named_var(name, cost, lower, upper)
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> Var {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.push(name.into());
        self.columns.push(Vec::new());
        Var(self.cost.len() - 1)
    }

    /// Adds the row `sum(coef * var) sense rhs`. Repeated variables are summed.
    pub fn add_row(&mut self, terms: &[(Var, f64)], sense: Sense, rhs: f64) -> Row {
        let row = self.rhs.len();
        let mut merged: Vec<(usize, f64)> = terms.iter().map(|&(v, a)| (v.0, a)).collect();
        merged.sort_by_key(|&(j, _)| j);
        let mut k = 0;
        while k < merged.len() {
            let (j, mut a) = merged[k];
            k += 1;
            while k < merged.len() && merged[k].0 == j {
                a += merged[k].1;
                k += 1;
            }
            assert!(j < self.cost.len(), "row references unknown variable {j}");
            if a != 0.0 {
                self.columns[j].push((row, a));
            }
        }
        self.senses.push(sense);
        self.rhs.push(rhs);
        Row(row)
    }

    pub fn set_objective_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn objective_offset(&self) -> f64 {
        self.offset
    }

    pub fn set_cost(&mut self, var: Var, cost: f64) {
        self.cost[var.0] = cost;
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) {
        self.lower[var.0] = lower;
        self.upper[var.0] = upper;
    }

    pub fn bounds(&self, var: Var) -> (f64, f64) {
        (self.lower[var.0], self.upper[var.0])
    }

    pub fn cost(&self, var: Var) -> f64 {
        self.cost[var.0]
    }

    pub fn column(&self, var: Var) -> &[(usize, f64)] {
        &self.columns[var.0]
    }

    pub fn sense(&self, row: Row) -> Sense {
        self.senses[row.0]
    }

    pub fn rhs(&self, row: Row) -> f64 {
        self.rhs[row.0]
    }

    /// Objective value `c'x + offset` at `x`.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    /// Row activities `A x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_rows()];
        for (col, &xj) in self.columns.iter().zip(x) {
            if xj != 0.0 {
                for &(i, a) in col {
                    act[i] += a * xj;
                }
            }
        }
        act
    }

    /// Largest absolute violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        for (i, act) in self.activities(x).into_iter().enumerate() {
            let b = self.rhs[i];
            let viol = match self.senses[i] {
                Sense::Le => act - b,
                Sense::Ge => b - act,
                Sense::Eq => (act - b).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Checks the structural invariants: finite data, consistent bounds.
    pub fn validate(&self) -> Result<(), SolverError> {
        for j in 0..self.num_vars() {
            let (l, u, c) = (self.lower[j], self.upper[j], self.cost[j]);
            if !c.is_finite() {
                return Err(SolverError::Malformed(format!("non-finite cost on {}", self.names[j])));
            }
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(SolverError::Malformed(format!("invalid bounds on {}", self.names[j])));
            }
            if l > u {
                return Err(SolverError::Malformed(format!(
                    "lower bound {l} exceeds upper bound {u} on {}",
                    self.names[j]
                )));
            }
            if let Some(&(i, a)) = self.columns[j].iter().find(|(_, a)| !a.is_finite()) {
                return Err(SolverError::Malformed(format!(
                    "non-finite coefficient {a} in row {i}, column {}",
                    self.names[j]
                )));
            }
            if let Some(&(i, _)) = self.columns[j].iter().find(|(i, _)| *i >= self.num_rows()) {
                return Err(SolverError::Malformed(format!("column {} references row {i}", self.names[j])));
            }
        }
        if self.senses.len() != self.rhs.len() {
            return Err(SolverError::Malformed("row sense and rhs lengths differ".into()));
        }
        if let Some(i) = self.rhs.iter().position(|b| !b.is_finite()) {
            return Err(SolverError::Malformed(format!("non-finite right-hand side in row {i}")));
        }
        if !self.offset.is_finite() {
            return Err(SolverError::Malformed("non-finite objective offset".into()));
        }
        Ok(())
    }

    /// Row-major copy of the constraint matrix; rows are `(col, coef)` lists.
    pub(crate) fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.num_rows()];
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, a) in col {
                rows[i].push((j, a));
            }
        }
        rows
    }

    fn write_text(&self, out: &mut String, binaries: &[bool]) -> fmt::Result {
        let fmt_terms = |out: &mut String, terms: &mut dyn Iterator<Item = (usize, f64)>| -> fmt::Result {
            let mut first = true;
            for (j, a) in terms {
                if a == 0.0 {
                    continue;
                }
                let sign = if a < 0.0 { "-" } else { "+" };
                if first {
                    write!(out, "{:?} {}", a, self.names[j])?;
                } else {
                    write!(out, " {sign} {:?} {}", a.abs(), self.names[j])?;
                }
                first = false;
            }
            if first {
                out.push('0');
            }
            Ok(())
        };
        out.push_str("min: ");
        fmt_terms(out, &mut self.cost.iter().copied().enumerate())?;
        if self.offset != 0.0 {
            write!(out, " + {:?}", self.offset)?;
        }
        out.push('\n');
        for (i, row) in self.rows().into_iter().enumerate() {
            write!(out, "r{i}: ")?;
            fmt_terms(out, &mut row.into_iter())?;
            writeln!(out, " {} {:?}", self.senses[i].symbol(), self.rhs[i])?;
        }
        for j in 0..self.num_vars() {
            let kind = if binaries.get(j).copied().unwrap_or(false) { " bin" } else { "" };
            writeln!(out, "bound {} {:?} {:?}{kind}", self.names[j], self.lower[j], self.upper[j])?;
        }
        Ok(())
    }

    /// Line-oriented dump: objective, one row per line, then bounds.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out, &[]).expect("writing to a String cannot fail");
        out
    }
}

/// A [`LinearProgram`] with a subset of columns restricted to `{0, 1}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixedBinaryProgram {
    pub lp: LinearProgram,
    pub(crate) binary: Vec<bool>,
}

impl MixedBinaryProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_lp(lp: LinearProgram) -> Self {
        let binary = vec![false; lp.num_vars()];
        Self { lp, binary }
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> Var {
        self.binary.push(false);
        self.lp.add_var(cost, lower, upper)
    }

    pub fn add_named_var(&mut self, name: impl Into<String>, cost: f64, lower: f64, upper: f64) -> Var {
        self.binary.push(false);
        self.lp.add_named_var(name, cost, lower, upper)
    }

    pub fn add_binary(&mut self, cost: f64) -> Var {
        let name = format!("b{}", self.lp.num_vars());
        self.add_named_binary(name, cost)
    }

    pub fn add_named_binary(&mut self, name: impl Into<String>, cost: f64) -> Var {
        self.binary.push(true);
        self.lp.add_named_var(name, cost, 0.0, 1.0)
    }

    pub fn add_row(&mut self, terms: &[(Var, f64)], sense: Sense, rhs: f64) -> Row {
        self.lp.add_row(terms, sense, rhs)
    }

    pub fn is_binary(&self, var: Var) -> bool {
        self.binary[var.0]
    }

    pub fn binaries(&self) -> impl Iterator<Item = Var> + '_ {
        self.binary.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| Var(j))
    }

    pub fn num_binaries(&self) -> usize {
        self.binary.iter().filter(|&&b| b).count()
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        if self.binary.len() != self.lp.num_vars() {
            return Err(SolverError::Malformed("binary mask length differs from column count".into()));
        }
        for v in self.binaries() {
            let (l, u) = self.lp.bounds(v);
            if l < 0.0 || u > 1.0 {
                return Err(SolverError::Malformed(format!(
                    "binary column {} has bounds [{l}, {u}] outside [0, 1]",
                    self.lp.names[v.0]
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.lp.write_text(&mut out, &self.binary).expect("writing to a String cannot fail");
        out
    }
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl fmt::Display for MixedBinaryProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_terms_are_merged() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 0.0, 1.0);
        lp.add_row(&[(x, 1.0), (x, 2.0)], Sense::Le, 3.0);
        assert_eq!(lp.column(x), &[(0, 3.0)]);
    }

    #[test]
    fn rejects_crossed_bounds_and_nan() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(1.0, 2.0, 1.0);
        assert!(matches!(lp.validate(), Err(SolverError::Malformed(_))));
        lp.set_bounds(x, 0.0, 1.0);
        lp.add_row(&[(x, f64::NAN)], Sense::Le, 1.0);
        assert!(lp.validate().is_err());
    }

    #[test]
    fn rejects_binary_with_wide_bounds() {
        let mut mip = MixedBinaryProgram::new();
        let b = mip.add_binary(1.0);
        mip.lp.set_bounds(b, 0.0, 2.0);
        assert!(mip.validate().is_err());
    }

    #[test]
    fn text_dump_lists_rows_and_bounds() {
        let mut mip = MixedBinaryProgram::new();
        let a = mip.add_named_binary("a", -2.0);
        let b = mip.add_named_binary("b", -3.0);
        mip.add_row(&[(a, 1.0), (b, 1.0)], Sense::Le, 1.0);
        let text = mip.to_text();
        assert_eq!(text, "min: -2.0 a - 3.0 b\nr0: 1.0 a + 1.0 b <= 1.0\nbound a 0.0 1.0 bin\nbound b 0.0 1.0 bin\n");
    }
}
