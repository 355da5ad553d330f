//! Numeric literals with SPICE scale suffixes.

/// Scale suffixes, longest match first (`meg` must win over `m`).
const SUFFIXES: &[(&str, i32)] = &[
    ("meg", 6),
    ("t", 12),
    ("g", 9),
    ("k", 3),
    ("m", -3),
    ("u", -6),
    ("n", -9),
    ("p", -12),
    ("f", -15),
];

/// Parse a number such as `0.35u`, `10f`, `1meg`, `2.5e-3` or `3.3v`.
///
/// Suffixes are case-insensitive and trailing unit letters after the
/// suffix are ignored (`10fF`). The scale is applied in decimal before the
/// conversion to `f64`, so `0.35u` yields exactly the same value as the
/// literal `0.35e-6`.
pub fn parse_value(text: &str) -> Option<f64> {
    let s = text.trim().to_ascii_lowercase();
    let bytes = s.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let mut has_digits = i > digits_start;
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        let frac_start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        has_digits |= i > frac_start;
    }
    if !has_digits {
        return None;
    }
    let mantissa = &s[..i];

    let mut exponent: i32 = 0;
    if i < bytes.len() && bytes[i] == b'e' {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        let exp_digits = j;
        while j < bytes.len() && bytes[j].is_ascii_digit() {
            j += 1;
        }
        if j > exp_digits {
            exponent = s[i + 1..j].parse().ok()?;
            i = j;
        }
    }

    let rest = &s[i..];
    if !rest.is_empty() {
        let (scale, tail) = SUFFIXES
            .iter()
            .find(|(suffix, _)| rest.starts_with(suffix))
            .map(|&(suffix, scale)| (scale, &rest[suffix.len()..]))
            .unwrap_or((0, rest));
        if !tail.chars().all(|c| c.is_ascii_alphabetic()) {
            return None;
        }
        exponent += scale;
    }
    format!("{mantissa}e{exponent}").parse().ok()
}
