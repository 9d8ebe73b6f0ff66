//! Fixed-precision number formatting for persisted reports.

/// Significant digits used in every CSV/JSON output.
pub const SIG_DIGITS: usize = 9;

/// `%g`-style formatting with `digits` significant digits and trailing zeros
/// trimmed. Identical inputs always produce identical text.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn sig9(x: f64) -> String {
    sig(x, SIG_DIGITS)
}

/// `x` rounded to nine significant digits.
pub fn round9(x: f64) -> f64 {
    if x.is_finite() {
        sig9(x).parse().expect("formatted float parses")
    } else {
        x
    }
}
