//! Modified spherical Bessel functions in power-scaled forms that stay
//! finite for every order at small and moderate arguments.
//!
//! `k_n` is normalized so that `k_0(z) = e^{-z}/z`.

/// `i_n(z) / z^n` for `n = 0..=order`, by the positive power series
/// `Σ_k (z²/2)^k / (k! (2n+2k+1)!!)`.
pub fn i_over_power(z: f64, order: usize, out: &mut Vec<f64>) {
    out.clear();
    let h = 0.5 * z * z;
    let mut lead = 1.0; // 1 / (2n+1)!!
    for n in 0..=order {
        if n > 0 {
            lead /= (2 * n + 1) as f64;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1usize;
        loop {
            term *= h / (k as f64 * (2 * n + 2 * k + 1) as f64);
            sum += term;
            if term <= 1e-17 * sum {
                break;
            }
            k += 1;
        }
        out.push(lead * sum);
    }
}

/// `k_n(z) z^{n+1}` for `n = 0..=order` by the upward recurrence
/// `a_{n+1} = z² a_{n-1} + (2n+1) a_n`, which only adds positive terms.
pub fn k_times_power(z: f64, order: usize, out: &mut Vec<f64>) {
    out.clear();
    let e = (-z).exp();
    out.push(e);
    if order >= 1 {
        out.push(e * (1.0 + z));
    }
    for n in 1..order {
        let next = z * z * out[n - 1] + (2 * n + 1) as f64 * out[n];
        out.push(next);
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;

    #[test]
    fn low_orders_closed_form() {
        let z: f64 = 1.7;
        let (mut i, mut k) = (vec![], vec![]);
        i_over_power(z, 2, &mut i);
        k_times_power(z, 2, &mut k);
        assert_relative_eq!(i[0], z.sinh() / z, max_relative = 1e-15);
        assert_relative_eq!(i[1] * z, (z * z.cosh() - z.sinh()) / (z * z), max_relative = 1e-14);
        let i2 = ((z * z + 3.0) * z.sinh() - 3.0 * z * z.cosh()) / z.powi(3);
        assert_relative_eq!(i[2] * z * z, i2, max_relative = 1e-13);
        let k2 = (-z).exp() * (z * z + 3.0 * z + 3.0) / z.powi(3);
        assert_relative_eq!(k[2], k2 * z.powi(3), max_relative = 1e-14);
    }

    #[test]
    fn wronskian() {
        // i_n k_{n+1} + i_{n+1} k_n = 1 / z² with k_0 = e^{-z}/z
        for &z in &[1e-3, 0.4, 3.0, 25.0] {
            let (mut i, mut k) = (vec![], vec![]);
            i_over_power(z, 40, &mut i);
            k_times_power(z, 41, &mut k);
            for n in 0..40 {
                // i_n = i[n] z^n, k_n = k[n] / z^{n+1}
                let w = i[n] * k[n + 1] / (z * z) + i[n + 1] * k[n];
                assert_relative_eq!(w * z * z, 1.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn zero_argument() {
        let mut i = vec![];
        i_over_power(0.0, 3, &mut i);
        for (a, b) in i.iter().zip([1.0, 1.0 / 3.0, 1.0 / 15.0, 1.0 / 105.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-15);
        }
    }
}
