//! Canonical text encodings: floats that round-trip exactly, stable hashes,
//! and small CSV helpers.

/// Formats a float with 17 significant digits, enough for an exact `f64`
/// round trip; the output is canonical (same value, same bytes).
pub fn f64_to_decimal(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a float written by [`f64_to_decimal`] (or any decimal literal).
pub fn decimal_to_f64(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Four-decimal rendering for human-facing rates.
pub fn rate4(v: f64) -> String {
    format!("{v:.4}")
}

/// FNV-1a over bytes, rendered as fixed-width hex.
pub fn fnv64_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Joins fields into one CSV line. Fields are expected to be CSV-safe
/// (no commas, quotes or newlines); every producer in this crate emits
/// plain numbers and identifier-like tags.
pub fn csv_line(fields: &[String]) -> String {
    fields.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        for &v in &[0.0, 1.0, -1.5, 0.1, 1e-300, -3.0e300, std::f64::consts::PI, 2.0 / 3.0] {
            let s = f64_to_decimal(v);
            let back = decimal_to_f64(&s).unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn formatting_is_stable() {
        let s1 = f64_to_decimal(2.0 / 3.0);
        let s2 = f64_to_decimal(decimal_to_f64(&s1).unwrap());
        assert_eq!(s1, s2);
    }

    #[test]
    fn fnv_is_order_sensitive() {
        assert_ne!(fnv64_hex(b"ab"), fnv64_hex(b"ba"));
        assert_eq!(fnv64_hex(b""), fnv64_hex(b""));
    }
}
