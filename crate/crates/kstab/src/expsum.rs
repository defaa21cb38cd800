//! Exact sums Σ c_k e^{r_k} with rational c_k, r_k.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::rational::{fmt_q, to_f64, Q};

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ExpSum {
    /// exponent → coefficient, zero coefficients removed.
    pub terms: BTreeMap<Q, Q>,
}

impl ExpSum {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(coeff: Q, exponent: Q) -> Self {
        let mut s = Self::zero();
        s.add_term(coeff, exponent);
        s
    }

    pub fn rational(c: Q) -> Self {
        Self::term(c, Q::zero())
    }

    pub fn add_term(&mut self, coeff: Q, exponent: Q) {
        if coeff.is_zero() {
            return;
        }
        let e = self.terms.entry(exponent.clone()).or_insert_with(Q::zero);
        *e += coeff;
        if e.is_zero() {
            self.terms.remove(&exponent);
        }
    }

    pub fn add(&self, o: &ExpSum) -> ExpSum {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            r.add_term(c.clone(), e.clone());
        }
        r
    }

    pub fn neg(&self) -> ExpSum {
        ExpSum { terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect() }
    }

    pub fn sub(&self, o: &ExpSum) -> ExpSum {
        self.add(&o.neg())
    }

    pub fn scale(&self, k: &Q) -> ExpSum {
        let mut r = ExpSum::zero();
        for (e, c) in &self.terms {
            r.add_term(c * k, e.clone());
        }
        r
    }

    pub fn mul(&self, o: &ExpSum) -> ExpSum {
        let mut r = ExpSum::zero();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                r.add_term(c1 * c2, e1 + e2);
            }
        }
        r
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Float value with a rounding bound (a few ulps per term).
    pub fn value(&self) -> (f64, f64) {
        let mut s = 0.0;
        let mut mag = 0.0;
        for (e, c) in &self.terms {
            let t = to_f64(c) * to_f64(e).exp();
            s += t;
            mag += t.abs();
        }
        (s, 8.0 * f64::EPSILON * mag)
    }

    pub fn to_f64(&self) -> f64 {
        self.value().0
    }

    pub fn render(&self) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(e, c)| if e.is_zero() { fmt_q(c) } else { format!("{}*e^({})", fmt_q(c), fmt_q(e)) })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    #[test]
    fn cancellation_is_exact() {
        let a = ExpSum::term(q(2), q(1));
        let b = ExpSum::term(q(-2), q(1));
        assert!(a.add(&b).is_zero());
        let e2 = ExpSum::term(q(1), q(1)).mul(&ExpSum::term(q(1), q(1)));
        assert!((e2.to_f64() - 1f64.exp().powi(2)).abs() < 1e-12);
    }
}
