use nalgebra::DMatrix;

/// The matrix-valued map `u ↦ J(u)` generating `ℓ(x) = J(U(x))∇U(x)`.
///
/// `J(u)` is meant to be skew-symmetric for every `u`; construction does not
/// enforce it so that corrupted generators can be certified as failing (see
/// [`LandscapeSpec::certify_orthogonality`](super::LandscapeSpec::certify_orthogonality)).
#[derive(Debug, Clone, PartialEq)]
pub enum SkewGenerator {
    /// `J ≡ 0`, the reversible dynamics.
    Zero { dim: usize },
    /// `J(u) = S` for a fixed matrix `S`.
    Constant(DMatrix<f64>),
    /// `J(u) = (c₀ + c₁u + c₂u² + …) · S`.
    ScalarPoly { base: DMatrix<f64>, coeffs: Vec<f64> },
}

fn poly(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
}

fn poly_derivative(coeffs: &[f64], u: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * u + k as f64 * c)
}

impl SkewGenerator {
    /// `a · [[0, 1], [-1, 0]]`, the planar rotation generator used by the 2D benchmarks.
    pub fn planar(a: f64) -> Self {
        Self::Constant(DMatrix::from_row_slice(2, 2, &[0.0, a, -a, 0.0]))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Zero { dim } => *dim,
            Self::Constant(m) => m.nrows(),
            Self::ScalarPoly { base, .. } => base.nrows(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero { .. } => true,
            Self::Constant(m) => m.iter().all(|v| *v == 0.0),
            Self::ScalarPoly { base, coeffs } => {
                base.iter().all(|v| *v == 0.0) || coeffs.iter().all(|c| *c == 0.0)
            }
        }
    }

    /// Scalar multiplying the base matrix at level `u` (1 for constant generators).
    fn scale(&self, u: f64) -> f64 {
        match self {
            Self::Zero { .. } => 0.0,
            Self::Constant(_) => 1.0,
            Self::ScalarPoly { coeffs, .. } => poly(coeffs, u),
        }
    }

    pub fn matrix(&self, u: f64) -> DMatrix<f64> {
        match self {
            Self::Zero { dim } => DMatrix::zeros(*dim, *dim),
            Self::Constant(m) => m.clone(),
            Self::ScalarPoly { base, coeffs } => base * poly(coeffs, u),
        }
    }

    /// `J′(u)`.
    pub fn derivative(&self, u: f64) -> DMatrix<f64> {
        match self {
            Self::Zero { dim } => DMatrix::zeros(*dim, *dim),
            Self::Constant(m) => DMatrix::zeros(m.nrows(), m.ncols()),
            Self::ScalarPoly { base, coeffs } => base * poly_derivative(coeffs, u),
        }
    }

    /// `out = J(u) g` without allocating.
    pub fn apply_into(&self, u: f64, g: &[f64], out: &mut [f64]) {
        let base = match self {
            Self::Zero { .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            Self::Constant(m) => m,
            Self::ScalarPoly { base, .. } => base,
        };
        let s = self.scale(u);
        let d = out.len();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..d {
                acc += base[(i, j)] * g[j];
            }
            *o = s * acc;
        }
    }

    /// Whether `J` needs `U(x)` to be evaluated (non-constant generators).
    pub fn depends_on_level(&self) -> bool {
        matches!(self, Self::ScalarPoly { coeffs, .. } if coeffs.len() > 1)
    }
}
