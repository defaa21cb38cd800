//! Closed-form integrals of Σ q(x) e^{κ−λx} over intervals.

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::expsum::ExpSum;
use crate::poly::UPoly;
use crate::rational::{q, Q};

/// Exact value as an exponential sum; `None` bounds mean ±∞.
pub fn integrate_exact(terms: &[(UPoly, Q, Q)], lo: Option<&Q>, hi: Option<&Q>) -> Result<ExpSum> {
    let mut out = ExpSum::zero();
    for (p, lam, kappa) in terms {
        if p.is_zero() {
            continue;
        }
        if lam.is_zero() {
            let (Some(a), Some(b)) = (lo, hi) else {
                return Err(Error::DivergentIntegral("polynomial term on an unbounded interval".into()));
            };
            let anti = antiderivative(p);
            out = out.add(&ExpSum::term(anti.eval(b) - anti.eval(a), kappa.clone()));
            continue;
        }
        // F(x) = −e^{κ−λx} Σ_j p^{(j)}(x)/λ^{j+1}
        let at = |x: &Q| -> ExpSum {
            let mut c = Q::zero();
            let mut d = p.clone();
            let mut lp = lam.clone();
            while !d.is_zero() {
                c += d.eval(x) / &lp;
                d = d.deriv();
                lp *= lam;
            }
            ExpSum::term(-c, kappa - lam * x)
        };
        let upper = match hi {
            Some(b) => at(b),
            None if lam.is_positive() => ExpSum::zero(),
            None => return Err(Error::DivergentIntegral("growing exponential at +∞".into())),
        };
        let lower = match lo {
            Some(a) => at(a),
            None if lam.is_negative() => ExpSum::zero(),
            None => return Err(Error::DivergentIntegral("growing exponential at −∞".into())),
        };
        out = out.add(&upper.sub(&lower));
    }
    Ok(out)
}

fn antiderivative(p: &UPoly) -> UPoly {
    let mut c = vec![Q::zero()];
    for (k, a) in p.coeffs.iter().enumerate() {
        c.push(a / q(k as i64 + 1));
    }
    UPoly::new(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn moments_of_shifted_exponential() {
        let one = Q::one();
        let e = 1f64.exp();
        let expect = [e, 0.0, e, 2.0 * e];
        for (k, ex) in expect.iter().enumerate() {
            let mut c = vec![Q::zero(); k + 1];
            c[k] = one.clone();
            let s = integrate_exact(&[(UPoly::new(c), one.clone(), Q::zero())], Some(&q(-1)), None).unwrap();
            assert!((s.to_f64() - ex).abs() < 1e-14, "k={k}");
        }
        let m1 = integrate_exact(&[(UPoly::new(vec![Q::zero(), one.clone()]), one.clone(), Q::zero())], Some(&q(-1)), None)
            .unwrap();
        assert!(m1.is_zero());
    }
}
