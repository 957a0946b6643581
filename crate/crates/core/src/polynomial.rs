//! Sparse multivariate polynomials, used for polynomial drifts and input maps.

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

/// `coeff * prod_k x_k^powers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub powers: Vec<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Term>,
}

impl Polynomial {
    pub fn constant(value: f64, dim: usize) -> Self {
        Polynomial {
            terms: vec![Term {
                coeff: value,
                powers: vec![0; dim],
            }],
        }
    }

    /// Highest variable count referenced by any term.
    pub fn arity(&self) -> Option<usize> {
        let first = self.terms.first()?.powers.len();
        self.terms
            .iter()
            .all(|t| t.powers.len() == first)
            .then_some(first)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * monomial(&t.powers, x))
            .sum()
    }

    pub fn partial(&self, x: &Vector, var: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * monomial_partial(&t.powers, x, var))
            .sum()
    }
}

pub fn monomial(powers: &[u32], x: &Vector) -> f64 {
    powers
        .iter()
        .zip(x.iter())
        .map(|(&p, &xi)| xi.powi(p as i32))
        .product()
}

pub fn monomial_partial(powers: &[u32], x: &Vector, var: usize) -> f64 {
    let p = powers[var];
    if p == 0 {
        return 0.0;
    }
    let mut value = p as f64 * x[var].powi(p as i32 - 1);
    for (k, (&pk, &xk)) in powers.iter().zip(x.iter()).enumerate() {
        if k != var {
            value *= xk.powi(pk as i32);
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_partial() {
        // 3 x0^2 x1 - x1
        let p = Polynomial {
            terms: vec![
                Term { coeff: 3.0, powers: vec![2, 1] },
                Term { coeff: -1.0, powers: vec![0, 1] },
            ],
        };
        let x = Vector::from_vec(vec![2.0, 5.0]);
        assert_eq!(p.eval(&x), 55.0);
        assert_eq!(p.partial(&x, 0), 60.0);
        assert_eq!(p.partial(&x, 1), 11.0);
        assert_eq!(p.arity(), Some(2));
    }
}
