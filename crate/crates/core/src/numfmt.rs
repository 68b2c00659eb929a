//! Six-significant-digit rounding for every number written to reports.

/// Round to 6 significant digits. Non-finite values pass through.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

pub fn sig6_vec<const N: usize>(v: [f64; N]) -> [f64; N] {
    v.map(sig6)
}

/// Text form used in CSV output.
pub fn fmt6(x: f64) -> String {
    format!("{}", sig6(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_six_digits() {
        assert_eq!(sig6(1.23456789), 1.23457);
        assert_eq!(sig6(-0.000123456789), -0.000123457);
        assert_eq!(sig6(885456.0), 885456.0);
        assert_eq!(sig6(-0.0), 0.0);
        assert_eq!(fmt6(2.5), "2.5");
    }
}
