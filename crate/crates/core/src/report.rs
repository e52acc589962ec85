//! Report emission: JSON with 17 significant digits and CSV time series.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// JSON tree whose floats serialize as `{:.16e}`. Object keys keep insertion
/// order so reports are byte-stable.
#[derive(Debug, Clone, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
    /// Arbitrary serde value, written with serde_json's own formatting.
    Value(serde_json::Value),
}

/// 17 significant digits in scientific notation; non-finite values have no
/// JSON form and become `null`.
pub fn format_f64(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

impl Json {
    pub fn obj() -> Self {
        Json::Obj(Vec::new())
    }

    /// Appends a key to an object.
    pub fn with(mut self, key: &str, value: impl Into<Json>) -> Self {
        match &mut self {
            Json::Obj(fields) => fields.push((key.to_string(), value.into())),
            _ => panic!("`with` on a non-object"),
        }
        self
    }

    pub fn to_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }
}

impl Serialize for Json {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Json::Null => s.serialize_unit(),
            Json::Bool(b) => s.serialize_bool(*b),
            Json::Int(i) => s.serialize_i64(*i),
            Json::Num(x) => match format_f64(*x) {
                Some(text) => RawValue::from_string(text)
                    .map_err(serde::ser::Error::custom)?
                    .serialize(s),
                None => s.serialize_unit(),
            },
            Json::Str(t) => s.serialize_str(t),
            Json::Arr(items) => {
                let mut seq = s.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Json::Obj(fields) => {
                let mut map = s.serialize_map(Some(fields.len()))?;
                for (k, v) in fields {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
            Json::Value(v) => v.serialize(s),
        }
    }
}

impl From<f64> for Json {
    fn from(x: f64) -> Self {
        Json::Num(x)
    }
}

impl From<bool> for Json {
    fn from(b: bool) -> Self {
        Json::Bool(b)
    }
}

impl From<usize> for Json {
    fn from(i: usize) -> Self {
        Json::Int(i as i64)
    }
}

impl From<u64> for Json {
    fn from(i: u64) -> Self {
        // Seeds above i64::MAX keep their exact digits as a string.
        i64::try_from(i).map_or_else(|_| Json::Str(i.to_string()), Json::Int)
    }
}

impl From<&str> for Json {
    fn from(t: &str) -> Self {
        Json::Str(t.to_string())
    }
}

impl From<String> for Json {
    fn from(t: String) -> Self {
        Json::Str(t)
    }
}

impl From<&DVector<f64>> for Json {
    fn from(v: &DVector<f64>) -> Self {
        Json::Arr(v.iter().map(|&x| Json::Num(x)).collect())
    }
}

impl From<&[f64]> for Json {
    fn from(v: &[f64]) -> Self {
        Json::Arr(v.iter().map(|&x| Json::Num(x)).collect())
    }
}

/// Matrices are written as a list of rows.
impl From<&DMatrix<f64>> for Json {
    fn from(m: &DMatrix<f64>) -> Self {
        Json::Arr(
            m.row_iter()
                .map(|row| Json::Arr(row.iter().map(|&x| Json::Num(x)).collect()))
                .collect(),
        )
    }
}

impl<T: Into<Json>> From<Option<T>> for Json {
    fn from(v: Option<T>) -> Self {
        v.map_or(Json::Null, Into::into)
    }
}

impl From<Vec<Json>> for Json {
    fn from(v: Vec<Json>) -> Self {
        Json::Arr(v)
    }
}

/// Time series with header `t,k_1..k_N,c_1..c_N`; `states` and `rates` have
/// one row per time.
pub fn trajectory_csv(times: &[f64], states: &DMatrix<f64>, rates: &DMatrix<f64>) -> String {
    let n = states.ncols();
    let mut out = String::from("t");
    for i in 1..=n {
        write!(out, ",k_{i}").unwrap();
    }
    for i in 1..=n {
        write!(out, ",c_{i}").unwrap();
    }
    out.push('\n');
    for (row, &t) in times.iter().enumerate() {
        out.push_str(&csv_number(t));
        for x in states.row(row).iter().chain(rates.row(row).iter()) {
            out.push(',');
            out.push_str(&csv_number(*x));
        }
        out.push('\n');
    }
    out
}

fn csv_number(x: f64) -> String {
    format_f64(x).unwrap_or_else(|| "nan".to_string())
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), contents)
}
