//! Gaunt coefficients `𝒢(a; b; c) = ∫ Y_a conj(Y_b) conj(Y_c) dΩ`.

use super::harmonics::{legendre_table, sign};
use crate::quadrature::gauss_legendre;

/// Normalized Legendre functions tabulated at Gauss-Legendre nodes, which
/// makes every needed triple product integral exact.
pub struct Gaunt {
    order: usize,
    weights: Vec<f64>,
    /// `tables[i]` holds `T_lm(x_i)` at `l(l+1)/2 + m`.
    tables: Vec<Vec<f64>>,
}

impl Gaunt {
    /// Supports all degrees `≤ order`.
    pub fn new(order: usize) -> Self {
        // integrand degree is at most 3·order
        let (x, w) = gauss_legendre(3 * order / 2 + 2);
        Self {
            order,
            tables: x.iter().map(|&xi| legendre_table(xi, order)).collect(),
            weights: w,
        }
    }

    #[inline]
    fn t(&self, i: usize, l: usize, m: isize) -> f64 {
        let am = m.unsigned_abs();
        let v = self.tables[i][l * (l + 1) / 2 + am];
        if m < 0 {
            sign(m) * v
        } else {
            v
        }
    }

    /// `𝒢((la, ma); (lb, mb); (lc, mc))`; zero unless `ma = mb + mc`.
    pub fn get(&self, la: usize, ma: isize, lb: usize, mb: isize, lc: usize, mc: isize) -> f64 {
        assert!(la.max(lb).max(lc) <= self.order);
        if ma != mb + mc
            || ma.unsigned_abs() > la
            || mb.unsigned_abs() > lb
            || mc.unsigned_abs() > lc
            || (la + lb + lc) % 2 == 1
            || la > lb + lc
            || lb > la + lc
            || lc > la + lb
        {
            return 0.0;
        }
        let s: f64 = (0..self.weights.len())
            .map(|i| self.weights[i] * self.t(i, la, ma) * self.t(i, lb, mb) * self.t(i, lc, mc))
            .sum();
        2.0 * std::f64::consts::PI * s
    }
}
