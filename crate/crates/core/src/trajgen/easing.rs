//! Exponential speed easing for camera paths.

use crate::error::{Error, Result};

/// Largest accepted `|a|`; beyond it the profile saturates numerically.
pub const MAX_EASING: f64 = 20.0;

/// Path fraction reached at normalised time `x ∈ [0, 1]`:
/// `(1 - exp(-a x)) / (1 - exp(-a))`, with `a = 0` meaning constant speed.
///
/// `a > 0` starts fast and slows down; `a < 0` starts slow and speeds up.
pub fn ease_fraction(a: f64, x: f64) -> Result<f64> {
    if !a.is_finite() || a.abs() > MAX_EASING {
        return Err(Error::Domain {
            value: a,
            domain: "|a| <= 20",
        });
    }
    if a == 0.0 {
        return Ok(x);
    }
    // expm1 keeps the ratio accurate for small |a|
    Ok((-a * x).exp_m1() / (-a).exp_m1())
}

/// Fractions for frames `0..f`, with frame `f - 1` landing on the end of the
/// path.
pub fn frame_fractions(a: f64, frames: usize) -> Result<Vec<f64>> {
    if frames < 2 {
        return Err(Error::Config(format!("trajectory needs >= 2 frames, got {frames}")));
    }
    let denom = (frames - 1) as f64;
    (0..frames)
        .map(|i| {
            if i == frames - 1 {
                // exact endpoint regardless of rounding in the ratio
                ease_fraction(a, 1.0).map(|_| 1.0)
            } else {
                ease_fraction(a, i as f64 / denom)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_value() {
        // (1 - e^-1) / (1 - e^-2), evaluated by hand: 0.6321206 / 0.8646647
        let v = ease_fraction(2.0, 0.5).unwrap();
        assert!((v - 0.731_058_578_6).abs() < 1e-9, "{v}");
    }

    #[test]
    fn endpoints() {
        for a in [-7.5, -1.0, -1e-6, 0.0, 1e-6, 0.5, 2.0, 19.9] {
            assert!(ease_fraction(a, 0.0).unwrap().abs() <= 1e-12);
            assert!((ease_fraction(a, 1.0).unwrap() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn small_a_is_linear() {
        for i in 0..=16 {
            let x = i as f64 / 16.0;
            assert!((ease_fraction(1e-6, x).unwrap() - x).abs() < 1e-5);
        }
    }

    #[test]
    fn saturated_values_rejected() {
        assert!(ease_fraction(20.5, 0.5).is_err());
        assert!(ease_fraction(-21.0, 0.5).is_err());
        assert!(ease_fraction(f64::NAN, 0.5).is_err());
        assert!(ease_fraction(20.0, 0.5).is_ok());
    }

    #[test]
    fn frame_fractions_are_strictly_increasing() {
        for a in [-4.0, -0.5, 0.0, 0.5, 4.0] {
            let fr = frame_fractions(a, 16).unwrap();
            assert_eq!(fr[0], 0.0);
            assert_eq!(fr[15], 1.0);
            assert!(fr.windows(2).all(|w| w[1] > w[0]));
        }
        assert!(frame_fractions(1.0, 1).is_err());
    }
}
