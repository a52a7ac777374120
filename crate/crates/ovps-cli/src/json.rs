//! Canonical JSON emission: fixed key order (struct declaration order) and
//! floats at 17 significant digits, so identical values always produce
//! identical bytes and round-trip exactly.

use serde::Serialize;
use std::io;

struct CanonicalFormatter;

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        // 1 leading digit + 16 fractional digits = 17 significant digits,
        // enough to reproduce any f64 exactly
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.16e}", value as f64)
    }
}

/// Serialize to canonical JSON bytes.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut serializer = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut serializer)?;
    Ok(out)
}

/// Canonical JSON plus a trailing newline, ready to write to disk.
pub fn to_canonical_file_bytes<T: Serialize>(value: &T) -> serde_json::Result<Vec<u8>> {
    let mut bytes = to_canonical_bytes(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;

    #[derive(Serialize)]
    struct Sample {
        b: f64,
        a: i64,
        xs: Vec<f64>,
    }

    #[test]
    fn floats_round_trip_exactly() {
        let values: [f64; 5] = [0.5, 1.0 / 3.0, 1e-300, -2.5e17, 0.1 + 0.2];
        for v in values {
            let bytes = to_canonical_bytes(&v).unwrap();
            let text = String::from_utf8(bytes).unwrap();
            let back: f64 = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "value {v} as {text}");
        }
    }

    #[test]
    fn key_order_follows_declaration() {
        let s = Sample {
            b: 0.5,
            a: 3,
            xs: vec![1.0],
        };
        let text = String::from_utf8(to_canonical_bytes(&s).unwrap()).unwrap();
        assert!(text.find("\"b\"").unwrap() < text.find("\"a\"").unwrap());
        assert_eq!(
            text,
            "{\"b\":5.0000000000000000e-1,\"a\":3,\"xs\":[1.0000000000000000e0]}"
        );
    }

    #[test]
    fn identical_values_produce_identical_bytes() {
        let s1 = Sample {
            b: 0.1 + 0.2,
            a: -9,
            xs: vec![3.5, 4.25],
        };
        let s2 = Sample {
            b: 0.1 + 0.2,
            a: -9,
            xs: vec![3.5, 4.25],
        };
        assert_eq!(
            to_canonical_bytes(&s1).unwrap(),
            to_canonical_bytes(&s2).unwrap()
        );
    }
}
