/// `x^k` for an integer exponent by repeated squaring.
pub fn pow_u(x: f64, mut k: u32) -> f64 {
    let mut base = x;
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

/// Neumaier-compensated sum, accumulated in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow_matches_powi() {
        for k in 0..12u32 {
            for x in [0.0, 0.3, 0.5, 0.999, 1.0] {
                let want = f64::powi(x, k as i32);
                assert!(
                    (pow_u(x, k) - want).abs() <= 1e-15 * want.max(1.0),
                    "{x}^{k}"
                );
            }
        }
        assert_eq!(pow_u(0.0, 0), 1.0);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0, 1e-16, 1e-16, 1e-16, 1e-16, -1.0];
        assert!((compensated_sum(xs) - 4e-16).abs() < 1e-30);
    }
}
