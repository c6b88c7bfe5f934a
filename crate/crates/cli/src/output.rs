//! Deterministic JSON rendering with a fixed number of decimals.

use std::io::{self, Write};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};

/// Pretty printing with floats at `decimals` places, or in shortest
/// round-trip form when `None`.
struct Fixed<'a> {
    pretty: PrettyFormatter<'a>,
    decimals: Option<usize>,
}

impl Formatter for Fixed<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        match self.decimals {
            Some(d) => {
                let s = format!("{v:.d$}");
                // No "-0.0000".
                if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                    write!(w, "{:.d$}", 0.0)
                } else {
                    w.write_all(s.as_bytes())
                }
            }
            None => self.pretty.write_f64(w, v),
        }
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(w)
    }
}

pub const DECIMALS: usize = 4;

pub fn render<T: Serialize>(value: &T, full_precision: bool) -> String {
    let mut buf = Vec::new();
    let fmt = Fixed {
        pretty: PrettyFormatter::new(),
        decimals: (!full_precision).then_some(DECIMALS),
    };
    let mut ser = Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}
