//! Exact checks of grid-valued assignments. Every `f64` coefficient is read
//! as its shortest decimal representation.

use num::bigint::BigInt;
use num::{BigRational, ToPrimitive, Zero};

use super::{LpProblem, Relation};

/// Shortest decimal `(numerator, exponent)` with value `numerator / 10^exponent`.
pub fn decimal_rational(value: f64) -> Option<(BigInt, u32)> {
    if !value.is_finite() {
        return None;
    }
    let text = format!("{value}");
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits = format!("{int}{frac}");
    let mut num: BigInt = digits.parse().ok()?;
    if neg {
        num = -num;
    }
    Some((num, frac.len() as u32))
}

/// Rounds each value to the nearest multiple of `10^-precision`, in units.
pub fn snap_to_grid(values: &[f64], precision: u32) -> Vec<i64> {
    let scale = 10f64.powi(precision as i32);
    values.iter().map(|&v| (v * scale).round() as i64).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExactCheck {
    pub violated_rows: Vec<usize>,
    pub violated_bounds: Vec<usize>,
}

impl ExactCheck {
    pub fn is_ok(&self) -> bool {
        self.violated_rows.is_empty() && self.violated_bounds.is_empty()
    }
}

fn ratio(value: f64) -> BigRational {
    let (num, exp) = decimal_rational(value).expect("finite by problem check");
    BigRational::new(num, BigInt::from(10).pow(exp))
}

/// i128 fast path: `sum(a_j * u_j) / 10^q` against `rhs`, scaled to a common
/// power of ten. `None` on overflow.
fn fast_compare(terms: &[(f64, i64)], rhs: f64, q: u32) -> Option<std::cmp::Ordering> {
    let mut parts = Vec::with_capacity(terms.len());
    let mut max_exp = 0;
    for &(a, u) in terms {
        let (num, exp) = decimal_rational(a)?;
        max_exp = max_exp.max(exp);
        parts.push((num.to_i128()?, exp, u));
    }
    let (rnum, rexp) = decimal_rational(rhs)?;
    let rnum = rnum.to_i128()?;
    max_exp = max_exp.max(rexp);
    if max_exp + q > 36 {
        return None;
    }
    let mut lhs: i128 = 0;
    for (num, exp, u) in parts {
        let term = num.checked_mul(10i128.pow(max_exp - exp))?.checked_mul(i128::from(u))?;
        lhs = lhs.checked_add(term)?;
    }
    let right = rnum.checked_mul(10i128.pow(max_exp - rexp + q))?;
    Some(lhs.cmp(&right))
}

fn slow_compare(terms: &[(f64, i64)], rhs: f64, q: u32) -> std::cmp::Ordering {
    let scale = BigRational::from_integer(BigInt::from(10).pow(q));
    let mut lhs = BigRational::zero();
    for &(a, u) in terms {
        lhs += ratio(a) * BigRational::from_integer(BigInt::from(u)) / &scale;
    }
    lhs.cmp(&ratio(rhs))
}

fn compare(terms: &[(f64, i64)], rhs: f64, q: u32) -> std::cmp::Ordering {
    fast_compare(terms, rhs, q).unwrap_or_else(|| slow_compare(terms, rhs, q))
}

/// Checks every row and finite bound exactly for the assignment
/// `x_j = units[j] * 10^-precision`.
pub fn verify_exact(problem: &LpProblem, units: &[i64], precision: u32) -> ExactCheck {
    use std::cmp::Ordering::*;
    let mut out = ExactCheck::default();
    for (j, v) in problem.variables.iter().enumerate() {
        let term = [(1.0, units[j])];
        let low_ok = !v.lower.is_finite() || compare(&term, v.lower, precision) != Less;
        let up_ok = !v.upper.is_finite() || compare(&term, v.upper, precision) != Greater;
        if !(low_ok && up_ok) {
            out.violated_bounds.push(j);
        }
    }
    for (r, c) in problem.constraints.iter().enumerate() {
        let terms: Vec<(f64, i64)> = c.coeffs.iter().map(|&(j, a)| (a, units[j])).collect();
        let ord = compare(&terms, c.rhs, precision);
        let ok = match c.relation {
            Relation::Ge => ord != Less,
            Relation::Le => ord != Greater,
            Relation::Eq => ord == Equal,
        };
        if !ok {
            out.violated_rows.push(r);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_decimals() {
        assert_eq!(decimal_rational(0.1), Some((BigInt::from(1), 1)));
        assert_eq!(decimal_rational(-2.5), Some((BigInt::from(-25), 1)));
        assert_eq!(decimal_rational(3.0), Some((BigInt::from(3), 0)));
        assert_eq!(decimal_rational(f64::NAN), None);
    }

    #[test]
    fn fast_and_slow_paths_agree() {
        let terms = [(0.1, 3), (0.2, 4), (-1.0, 1)];
        for rhs in [0.0, 0.001, -0.001, 0.0001] {
            assert_eq!(fast_compare(&terms, rhs, 3), Some(slow_compare(&terms, rhs, 3)));
        }
        // 0.1 * 0.003 + 0.2 * 0.004 - 0.001 = 0.0001 exactly
        assert_eq!(compare(&terms, 0.0001, 3), std::cmp::Ordering::Equal);
        let huge = [(1e30, i64::MAX)];
        assert_eq!(fast_compare(&huge, 1.0, 3), None);
        assert_eq!(compare(&huge, 1.0, 3), std::cmp::Ordering::Greater);
    }
}
