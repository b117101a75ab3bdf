//! Number formatting shared by every CSV/JSON writer.

/// Round-trip decimal form with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}
