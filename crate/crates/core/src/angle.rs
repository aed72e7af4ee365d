//! Plane-angle helpers shared by the kinematics and the estimators.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let shifted = (angle + PI).rem_euclid(TAU);
    // rem_euclid may round up to TAU for tiny negative inputs
    if shifted >= TAU {
        -PI
    } else {
        shifted - PI
    }
}

/// Smallest absolute difference between two angles, in `[0, π]`.
pub fn angular_error(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn error_examples() {
        assert_abs_diff_eq!(angular_error(0.0, TAU), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(angular_error(PI - 0.1, -PI + 0.1), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(angular_error(0.3, 1.0), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn wrap_seam() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!(wrap_angle(-1e-300) < PI);
    }

    proptest! {
        #[test]
        fn wrap_is_in_range_and_congruent(a in -100.0f64..100.0) {
            let w = wrap_angle(a);
            prop_assert!((-PI..PI).contains(&w));
            let k = ((a - w) / TAU).round();
            prop_assert!((a - w - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn error_is_symmetric_and_bounded(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let e = angular_error(a, b);
            prop_assert!((0.0..=PI).contains(&e));
            prop_assert!((e - angular_error(b, a)).abs() < 1e-12);
        }
    }
}
