//! Versioned JSON reports with stable field order and 17-digit reals.

use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "numeraire-report/1";

/// Pretty-printing formatter writing every real as `{:.16e}`.
struct ReportFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for ReportFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Writes a JSON value in report format. Non-finite reals cannot be
/// represented in JSON and appear as `null`.
pub fn render(value: &Value) -> String {
    let mut out = Vec::new();
    let formatter = ReportFormatter { inner: PrettyFormatter::with_indent(b"  ") };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value.serialize(&mut ser).expect("writing to a Vec cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json writes UTF-8")
}

/// Report document: the schema header, then the `(key, value)` sections in
/// the given order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    sections: Vec<(String, Value)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<T: Serialize + ?Sized>(mut self, key: &str, value: &T) -> Result<Self> {
        self.push(key, value)?;
        Ok(self)
    }

    pub fn push<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::Domain(format!("cannot serialize `{key}`: {e}")))?;
        match self.sections.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = v,
            None => self.sections.push((key.to_string(), v)),
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("schema".into(), Value::String(SCHEMA.into()));
        for (k, v) in &self.sections {
            map.insert(k.clone(), v.clone());
        }
        Value::Object(map)
    }

    pub fn render(&self) -> String {
        render(&self.to_value())
    }
}

/// Parses a document and renders it again; rendering is idempotent.
pub fn reformat(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text)?;
    Ok(render(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Serialize)]
    struct Sample {
        b: f64,
        a: Vec<f64>,
        n: usize,
    }

    #[test]
    fn empty_report_is_schema_only() {
        let s = Report::new().render();
        assert_eq!(s, "{\n  \"schema\": \"numeraire-report/1\"\n}\n");
    }

    #[test]
    fn field_order_and_digits() {
        let r = Report::new()
            .with("zeta", &1)
            .unwrap()
            .with("alpha", &Sample { b: 0.1, a: vec![1.0 / 3.0], n: 7 })
            .unwrap();
        let s = r.render();
        assert!(s.find("zeta").unwrap() < s.find("alpha").unwrap());
        assert!(s.find("\"b\"").unwrap() < s.find("\"a\"").unwrap());
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.contains("3.3333333333333331e-1"));
        assert!(s.contains("\"n\": 7"));
    }

    #[test]
    fn non_finite_is_null() {
        let s = Report::new().with("x", &f64::INFINITY).unwrap().render();
        assert!(s.contains("\"x\": null"));
    }

    #[test]
    fn malformed_input_reports_position() {
        match reformat("{\n  \"a\": [1,\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_idempotent(xs in prop::collection::vec(-1e300..1e300f64, 0..8), k in any::<i64>()) {
            let r = Report::new().with("xs", &xs).unwrap().with("k", &k).unwrap();
            let once = r.render();
            let twice = reformat(&once).unwrap();
            prop_assert_eq!(&once, &twice);
            let back: Value = serde_json::from_str(&once).unwrap();
            let parsed: Vec<f64> = serde_json::from_value(back["xs"].clone()).unwrap();
            prop_assert_eq!(parsed, xs);
        }
    }
}
