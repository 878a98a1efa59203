//! Deterministic number formatting shared by every CSV writer.

/// First line of every CSV file.
pub const UNITS_LINE: &str = "# units: t and mixing times in chain-time (continuous time: rate-1 jumps; discrete time: steps)";

/// Marker for values that do not exist at a row (out-of-window bounds, failed indices).
pub const ABSENT: &str = "NA";

/// 17 significant digits; infinities as `inf` / `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| ABSENT.to_string(), fmt_f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_opt(None), "NA");
    }
}
