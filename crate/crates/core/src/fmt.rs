//! Number formatting shared by the CSV writers.

/// Formats `v` with 10 significant digits in positional notation.
/// Very small or very large magnitudes fall back to scientific notation.
pub fn sig10(v: f64) -> String {
    sig(v, 10)
}

pub fn sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-7..=15).contains(&exp) {
        return format!("{:.*e}", digits - 1, v);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Rounds to `decimals` places and prints the shortest representation, so
/// `0.800` becomes `0.8` and `-0.0` becomes `0`.
pub fn rounded(v: f64, decimals: i32) -> String {
    let scale = 10f64.powi(decimals);
    let r = (v * scale).round() / scale;
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

/// Table cell in the `estimate (t)` layout: 3 decimals for the estimate,
/// 2 for the t-statistic, `NA` when the t-statistic is undefined.
pub fn estimate_cell(estimate: f64, t_stat: Option<f64>) -> String {
    let t = t_stat.map_or_else(|| "NA".to_string(), |t| rounded(t, 2));
    format!("{} ({t})", rounded(estimate, 3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(sig10(0.005), "0.005000000000");
        assert_eq!(sig10(-1.6448536269514722), "-1.644853627");
        assert_eq!(sig10(123456.0), "123456.0000");
        assert_eq!(sig10(0.0), "0");
        assert_eq!(sig10(1e-12), "1.000000000e-12");
    }

    #[test]
    fn table_cells_match_layout() {
        assert_eq!(estimate_cell(-0.9861, Some(-9.1312)), "-0.986 (-9.13)");
        assert_eq!(estimate_cell(0.8, Some(10.18)), "0.8 (10.18)");
        assert_eq!(estimate_cell(-0.0001, Some(0.0)), "0 (0)");
        assert_eq!(estimate_cell(0.5, None), "0.5 (NA)");
    }
}
