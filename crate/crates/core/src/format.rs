//! Fixed-precision number formatting for the text interchange formats.

/// Formats `v` with 7 significant digits, plain notation for moderate
/// magnitudes and scientific notation otherwise.
///
/// `fmt_sig7(v.parse(fmt_sig7(v)))` reproduces the same string.
pub fn fmt_sig7(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.6e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..7).contains(&exp) {
        let decimals = (6 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}
