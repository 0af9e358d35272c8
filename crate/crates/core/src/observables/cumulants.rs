//! Cumulants of a Bernoulli variable as integer polynomials in p.
//!
//! With K(t) = ln(1 - p + p e^t) one has dK/dt = p(t) and dp/dt = p(1-p), so
//! kappa_{n+1}(p) = p(1-p) kappa_n'(p) starting from kappa_1 = p. The table is
//! built by the compiler from that recursion.

pub const MAX_CUMULANT_ORDER: usize = 8;
const DEGREE: usize = MAX_CUMULANT_ORDER + 1;

/// BERNOULLI_CUMULANTS[n][k] is the coefficient of p^k in kappa_n(p).
pub const BERNOULLI_CUMULANTS: [[i64; DEGREE]; DEGREE] = bernoulli_table();

const fn bernoulli_table() -> [[i64; DEGREE]; DEGREE] {
    let mut t = [[0i64; DEGREE]; DEGREE];
    t[1][1] = 1;
    let mut n = 1;
    while n < MAX_CUMULANT_ORDER {
        let mut deriv = [0i64; DEGREE];
        let mut k = 0;
        while k + 1 < DEGREE {
            deriv[k] = (k as i64 + 1) * t[n][k + 1];
            k += 1;
        }
        // multiply by p - p^2
        let mut k = 1;
        while k < DEGREE {
            let mut c = deriv[k - 1];
            if k >= 2 {
                c -= deriv[k - 2];
            }
            t[n + 1][k] = c;
            k += 1;
        }
        n += 1;
    }
    t
}

/// kappa_n(p) for 1 <= n <= 8, evaluated by Horner's rule.
pub fn bernoulli_cumulant(order: usize, p: f64) -> f64 {
    assert!((1..=MAX_CUMULANT_ORDER).contains(&order), "cumulant order out of range");
    BERNOULLI_CUMULANTS[order].iter().rev().fold(0.0, |acc, &c| acc * p + c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_match_known_polynomials() {
        for &p in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let v = p * (1.0 - p);
            assert!((bernoulli_cumulant(2, p) - v).abs() < 1e-15);
            assert!((bernoulli_cumulant(3, p) - v * (1.0 - 2.0 * p)).abs() < 1e-15);
            assert!((bernoulli_cumulant(4, p) - v * (1.0 - 6.0 * v)).abs() < 1e-15);
        }
    }

    #[test]
    fn half_filling_values() {
        assert_eq!(bernoulli_cumulant(2, 0.5), 0.25);
        assert_eq!(bernoulli_cumulant(4, 0.5), -0.125);
        assert_eq!(bernoulli_cumulant(6, 0.5), 0.25);
        assert_eq!(bernoulli_cumulant(8, 0.5), -17.0 / 16.0);
    }

    #[test]
    fn cumulants_match_moments_of_a_coin() {
        // Central moments of Bernoulli(p): mu_k = p(1-p)^k + (1-p)(-p)^k.
        let p: f64 = 0.3;
        let mu = |k: i32| p * (1.0 - p).powi(k) + (1.0 - p) * (-p).powi(k);
        let k6 = mu(6) - 15.0 * mu(4) * mu(2) - 10.0 * mu(3).powi(2) + 30.0 * mu(2).powi(3);
        assert!((bernoulli_cumulant(6, p) - k6).abs() < 1e-15);
    }

    #[test]
    fn odd_cumulants_vanish_at_half_filling() {
        for n in [3, 5, 7] {
            assert!(bernoulli_cumulant(n, 0.5).abs() < 1e-15);
        }
    }
}
