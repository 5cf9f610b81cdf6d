use crate::scalar::Real;

/// Coordinate-wise composite step with an L1 term:
/// `sign(v)·[|v| − ηθ/h]₊` where `v = w − (η/h)·g`.
///
/// This is the minimizer over `v` of `η g v + η θ |v| + ½ h (v − w)²`.
#[inline]
pub fn sadaoam_prox_coordinate<T: Real>(w_i: T, g_i: T, h_ii: T, eta: T, theta: T) -> T {
    let v = w_i - eta / h_ii * g_i;
    soft_threshold(v, eta * theta / h_ii)
}

/// `k` consecutive zero-gradient prox steps collapsed into one:
/// `sign(w)·[|w| − k·ηθ/h]₊`.
#[inline]
pub fn lazy_shrink<T: Real>(w_i: T, h_ii: T, eta: T, theta: T, k: usize) -> T {
    if k == 0 || w_i == T::zero() {
        return w_i;
    }
    soft_threshold(w_i, eta * theta / h_ii * T::from_usize(k).unwrap())
}

#[inline]
fn soft_threshold<T: Real>(v: T, t: T) -> T {
    let mag = v.abs() - t;
    if mag <= T::zero() {
        T::zero()
    } else if v > T::zero() {
        mag
    } else {
        -mag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_threshold_is_plain_step() {
        let (w, g, h, eta) = (0.4, -1.5, 2.0, 0.3);
        assert_eq!(sadaoam_prox_coordinate(w, g, h, eta, 0.0), w - eta / h * g);
    }

    #[test]
    fn inside_threshold_band_is_zero() {
        // v = 0.1 - 0.5*0.1 = 0.05 with threshold 0.5*0.2 = 0.1
        assert_eq!(sadaoam_prox_coordinate(0.1, 0.1, 1.0, 0.5, 0.2), 0.0);
        assert_eq!(sadaoam_prox_coordinate(-0.1, -0.1, 1.0, 0.5, 0.2), 0.0);
    }

    #[test]
    fn sign_is_preserved_outside_band() {
        assert!((sadaoam_prox_coordinate(1.0f64, 0.0, 1.0, 0.5, 0.2) - 0.9).abs() < 1e-15);
        assert!((sadaoam_prox_coordinate(-1.0f64, 0.0, 1.0, 0.5, 0.2) + 0.9).abs() < 1e-15);
    }

    #[test]
    fn lazy_equals_repeated_zero_gradient_steps() {
        let (h, eta, theta) = (1.7, 0.2, 0.05);
        for w0 in [0.8f64, -0.35, 0.01, 0.0] {
            for k in 0..40 {
                let mut eager = w0;
                for _ in 0..k {
                    eager = sadaoam_prox_coordinate(eager, 0.0, h, eta, theta);
                }
                let lazy = lazy_shrink(w0, h, eta, theta, k);
                assert!((eager - lazy).abs() < 1e-12, "w0={w0} k={k}");
            }
        }
    }

    #[test]
    fn lazy_clamps_instead_of_flipping() {
        assert_eq!(lazy_shrink(0.3, 1.0, 1.0, 0.1, 100), 0.0);
        assert_eq!(lazy_shrink(-0.3, 1.0, 1.0, 0.1, 100), 0.0);
    }
}
