use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LandscapeError, Potential};

/// One term `coeff · x₁^e₁ ⋯ x_d^e_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, Vec<u32>)", into = "(f64, Vec<u32>)")]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl From<(f64, Vec<u32>)> for Monomial {
    fn from((coeff, exponents): (f64, Vec<u32>)) -> Self {
        Self { coeff, exponents }
    }
}

impl From<Monomial> for (f64, Vec<u32>) {
    fn from(m: Monomial) -> Self {
        (m.coeff, m.exponents)
    }
}

/// Multivariate polynomial potential with analytic gradient and Hessian.
///
/// Like terms are merged and zero coefficients dropped on construction, so two
/// polynomials describing the same function compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: Vec<Monomial>,
}

#[inline]
fn ipow(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}

impl Polynomial {
    pub fn new<I, M>(dim: usize, terms: I) -> Result<Self, LandscapeError>
    where
        I: IntoIterator<Item = M>,
        M: Into<Monomial>,
    {
        if dim == 0 {
            return Err(LandscapeError::Config("polynomial dimension must be positive".into()));
        }
        let mut merged: Vec<Monomial> = Vec::new();
        for term in terms {
            let term = term.into();
            if term.exponents.len() != dim {
                return Err(LandscapeError::Dimension { expected: dim, found: term.exponents.len() });
            }
            if !term.coeff.is_finite() {
                return Err(LandscapeError::Config(format!(
                    "non-finite coefficient in term {:?}",
                    term.exponents
                )));
            }
            match merged.iter_mut().find(|m| m.exponents == term.exponents) {
                Some(existing) => existing.coeff += term.coeff,
                None => merged.push(term),
            }
        }
        merged.retain(|m| m.coeff != 0.0);
        merged.sort_by(|a, b| b.exponents.cmp(&a.exponents));
        Ok(Self { dim, terms: merged })
    }

    /// `U(x) = |x|²/2`.
    pub fn quadratic(dim: usize) -> Self {
        let terms = (0..dim).map(|k| {
            let mut e = vec![0; dim];
            e[k] = 2;
            (0.5, e)
        });
        Self::new(dim, terms).expect("valid quadratic")
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .map(|m| m.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }
}

impl Potential for Polynomial {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| m.coeff * m.exponents.iter().zip(x).map(|(&e, &xi)| ipow(xi, e)).product::<f64>())
            .sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for m in &self.terms {
            for k in 0..self.dim {
                let ek = m.exponents[k];
                if ek == 0 {
                    continue;
                }
                let mut prod = m.coeff * ek as f64 * ipow(x[k], ek - 1);
                for (j, (&e, &xj)) in m.exponents.iter().zip(x).enumerate() {
                    if j != k {
                        prod *= ipow(xj, e);
                    }
                }
                out[k] += prod;
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let mut h = DMatrix::zeros(d, d);
        let mut e = vec![0u32; d];
        for m in &self.terms {
            for k in 0..d {
                for l in k..d {
                    e.copy_from_slice(&m.exponents);
                    let mut c = m.coeff;
                    for idx in [k, l] {
                        if e[idx] == 0 {
                            c = 0.0;
                            break;
                        }
                        c *= e[idx] as f64;
                        e[idx] -= 1;
                    }
                    if c == 0.0 {
                        continue;
                    }
                    let v = c * e.iter().zip(x).map(|(&ei, &xi)| ipow(xi, ei)).product::<f64>();
                    h[(k, l)] += v;
                    if k != l {
                        h[(l, k)] += v;
                    }
                }
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doublewell2d() -> Polynomial {
        Polynomial::new(
            2,
            [(0.25, vec![4, 0]), (-0.5, vec![2, 0]), (0.25, vec![0, 0]), (0.5, vec![0, 2])],
        )
        .unwrap()
    }

    #[test]
    fn values_gradient_hessian_by_hand() {
        let p = doublewell2d();
        // (x²-1)²/4 + y²/2 at (0.5, 1): 0.5625/4 + 0.5
        assert!((p.value(&[0.5, 1.0]) - (0.140625 + 0.5)).abs() < 1e-15);
        let mut g = [0.0; 2];
        p.gradient_into(&[0.5, 0.0], &mut g);
        assert_eq!(g, [-0.375, 0.0]);
        let h = p.hessian(&[0.0, 0.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]));
        let h = p.hessian(&[1.0, 0.0]);
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn mixed_terms() {
        // x²y³
        let p = Polynomial::new(2, [(1.0, vec![2, 3])]).unwrap();
        let mut g = [0.0; 2];
        p.gradient_into(&[2.0, 1.5], &mut g);
        assert!((g[0] - 2.0 * 2.0 * 3.375).abs() < 1e-12);
        assert!((g[1] - 4.0 * 3.0 * 2.25).abs() < 1e-12);
        let h = p.hessian(&[2.0, 1.5]);
        assert!((h[(0, 0)] - 2.0 * 3.375).abs() < 1e-12);
        assert!((h[(0, 1)] - 2.0 * 2.0 * 3.0 * 2.25).abs() < 1e-12);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
        assert!((h[(1, 1)] - 4.0 * 6.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn merges_like_terms_and_rejects_bad_input() {
        let p = Polynomial::new(1, [(1.0, vec![2]), (-1.0, vec![2]), (3.0, vec![1])]).unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.degree(), 1);
        assert!(matches!(
            Polynomial::new(2, [(1.0, vec![1])]),
            Err(LandscapeError::Dimension { expected: 2, found: 1 })
        ));
        assert!(Polynomial::new(1, [(f64::NAN, vec![1])]).is_err());
        assert!(Polynomial::new(0, Vec::<(f64, Vec<u32>)>::new()).is_err());
    }

    #[test]
    fn quadratic_is_half_norm_squared() {
        let q = Polynomial::quadratic(3);
        assert_eq!(q.value(&[1.0, 2.0, 2.0]), 4.5);
        assert_eq!(q.hessian(&[0.3, -1.0, 7.0]), DMatrix::identity(3, 3));
    }
}
