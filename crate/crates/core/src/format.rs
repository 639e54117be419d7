//! Text encodings shared by the file formats.
//!
//! Every float written by this crate uses 17 significant digits, which is
//! enough for any `f64` to parse back to the same bits.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;

pub fn float_text(value: f64) -> String {
    format!("{value:.16e}")
}

/// Compact JSON formatter printing floats with 17 significant digits.
struct ExactFloats;

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(float_text(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serialises `value` as single-line JSON followed by a newline.
pub fn to_exact_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}
