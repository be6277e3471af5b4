//! Bundled benchmark potentials.
//!
//! | name           | U                                                   | critical points |
//! |----------------|-----------------------------------------------------|-----------------|
//! | `doublewell1d` | `(x²-1)²/4`                                         | minima ±1, saddle 0 |
//! | `doublewell2d` | `(x²-1)²/4 + y²/2`                                  | minima (±1,0), saddle (0,0) |
//! | `triplewell2d` | `x⁶/6 - 5x⁴/4 + 2x² + 0.9x + y²/2`                  | three minima on the x-axis, two gates |
//! | `quadratic2d`  | `(x² + y²)/2`                                       | single minimum at 0 |
//!
//! In `triplewell2d` the tilt `0.9x` orders the landscape as
//! `m_A ≈ (-2.035, 0)` (deepest, U ≈ -3.149), lower gate `σ₁ ≈ (-0.818, 0)`
//! (U ≈ 0.092), shallow middle well `m_B ≈ (-0.243, 0)` (U ≈ -0.105), higher
//! gate `σ₂ ≈ (1.137, 0)` (U ≈ 1.880) and far well `m_C ≈ (1.959, 0)`
//! (U ≈ 0.449). Because `U(σ₁) < U(m_C) < U(σ₂)`, the far well only becomes a
//! target once the level reaches the higher gate.

use super::Polynomial;
use crate::linalg::Bounds;

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub potential: Polynomial,
    pub default_box: Bounds,
}

pub const NAMES: [&str; 4] = ["doublewell1d", "doublewell2d", "triplewell2d", "quadratic2d"];

pub fn get(name: &str) -> Option<CatalogEntry> {
    let entry = match name {
        "doublewell1d" => CatalogEntry {
            name: "doublewell1d",
            description: "U(x) = (x^2-1)^2/4",
            potential: Polynomial::new(1, [(0.25, vec![4]), (-0.5, vec![2]), (0.25, vec![0])]).ok()?,
            default_box: Bounds::cube(1, 2.0),
        },
        "doublewell2d" => CatalogEntry {
            name: "doublewell2d",
            description: "U(x,y) = (x^2-1)^2/4 + y^2/2",
            potential: Polynomial::new(
                2,
                [(0.25, vec![4, 0]), (-0.5, vec![2, 0]), (0.25, vec![0, 0]), (0.5, vec![0, 2])],
            )
            .ok()?,
            default_box: Bounds::cube(2, 2.0),
        },
        "triplewell2d" => CatalogEntry {
            name: "triplewell2d",
            description: "U(x,y) = x^6/6 - 5x^4/4 + 2x^2 + 0.9x + y^2/2",
            potential: Polynomial::new(
                2,
                [
                    (1.0 / 6.0, vec![6, 0]),
                    (-1.25, vec![4, 0]),
                    (2.0, vec![2, 0]),
                    (0.9, vec![1, 0]),
                    (0.5, vec![0, 2]),
                ],
            )
            .ok()?,
            default_box: Bounds::new(vec![-3.0, -2.0], vec![3.0, 2.0]),
        },
        "quadratic2d" => CatalogEntry {
            name: "quadratic2d",
            description: "U(x,y) = (x^2+y^2)/2",
            potential: Polynomial::quadratic(2),
            default_box: Bounds::cube(2, 2.0),
        },
        _ => return None,
    };
    Some(entry)
}
