//! Globally adaptive Gauss–Kronrod 7/15 quadrature.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights at XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Upper bound on the number of panels.
pub const MAX_PANELS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// `∫|f|`, the scale the relative tolerance refers to.
    pub abs_value: f64,
    pub panels: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error.total_cmp(&o.error).is_eq()
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let f1 = f(c - h * XGK[j]);
        let f2 = f(c + h * XGK[j]);
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Panel { a, b, value: k * h, error: ((k - g) * h).abs(), abs_value: abs * h.abs() }
}

/// `∫_a^b f` to relative accuracy `rel` of `∫|f|`.
///
/// Returns `None` when `MAX_PANELS` panels do not reach the tolerance or the
/// integrand is not finite.
pub fn integrate(f: impl FnMut(f64) -> f64, a: f64, b: f64, rel: f64) -> Option<Estimate> {
    integrate_abs(f, a, b, rel, 0.0)
}

/// As [`integrate`], also accepting an absolute error of `abs`.
pub fn integrate_abs(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel: f64, abs: f64) -> Option<Estimate> {
    if a == b {
        return Some(Estimate { value: 0.0, error: 0.0, abs_value: 0.0, panels: 0 });
    }
    let first = gk15(&mut f, a, b);
    let (mut value, mut error, mut abs_value) = (first.value, first.error, first.abs_value);
    let mut heap = BinaryHeap::from([first]);
    loop {
        if !(value.is_finite() && error.is_finite()) {
            return None;
        }
        if error <= (rel * abs_value).max(abs) {
            return Some(Estimate { value, error, abs_value, panels: heap.len() });
        }
        if heap.len() >= MAX_PANELS {
            return None;
        }
        let worst = heap.pop()?;
        let mid = 0.5 * (worst.a + worst.b);
        let l = gk15(&mut f, worst.a, mid);
        let r = gk15(&mut f, mid, worst.b);
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        abs_value += l.abs_value + r.abs_value - worst.abs_value;
        heap.push(l);
        heap.push(r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let e = integrate(|x| x.powi(20) - 3.0 * x.powi(7), -1.0, 2.0, 1e-14).unwrap();
        let exact = (2f64.powi(21) + 1.0) / 21.0 - 3.0 * (2f64.powi(8) - 1.0) / 8.0;
        assert!((e.value - exact).abs() < 1e-10 * exact.abs());
    }

    #[test]
    fn gaussian_and_kink() {
        let e = integrate(|x| (-x * x).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert!((e.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let e = integrate(|x: f64| x.abs(), -1.0, 3.0, 1e-10).unwrap();
        assert!((e.value - 5.0).abs() < 1e-9);
        assert!(integrate(|_| f64::NAN, 0.0, 1.0, 1e-8).is_none());
    }
}
