//! Number formatting and report/table emission.

use anyhow::Result;
use clap::ValueEnum;
use serde_json::{json, Map, Value as Json};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

/// `x` with 12 significant digits, `%g` style, independent of locale.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..12).contains(&exp) {
        trim_zeros(format!("{:.*}", (11 - exp) as usize, x))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// JSON number carrying exactly the printed digits.
fn json_num(x: f64) -> Json {
    num(x)
        .parse::<f64>()
        .ok()
        .and_then(serde_json::Number::from_f64)
        .map_or(Json::Null, Json::Number)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Nums(Vec<f64>),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl Value {
    fn text(&self) -> String {
        match self {
            Value::Num(x) => num(*x),
            Value::Nums(xs) => xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", "),
            Value::Int(n) => n.to_string(),
            Value::Text(s) => s.clone(),
            Value::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Json {
        match self {
            Value::Num(x) => json_num(*x),
            Value::Nums(xs) => Json::Array(xs.iter().map(|x| json_num(*x)).collect()),
            Value::Int(n) => json!(n),
            Value::Text(s) => json!(s),
            Value::Flag(b) => json!(b),
        }
    }
}

/// Provenance written ahead of every CSV and JSON document.
#[derive(Debug, Clone)]
pub struct Header {
    pub command: String,
    pub config: Json,
}

impl Header {
    fn comment_lines(&self) -> String {
        format!(
            "# cvtool {VERSION}\n# command: {}\n# config: {}\n",
            self.command,
            serde_json::to_string(&self.config).expect("config json")
        )
    }

    fn json(&self) -> Map<String, Json> {
        let mut map = Map::new();
        map.insert("tool".into(), json!(format!("cvtool {VERSION}")));
        map.insert("command".into(), json!(self.command));
        map.insert("config".into(), self.config.clone());
        map
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub entries: Vec<(String, Value)>,
}

impl Report {
    pub fn push(&mut self, key: &str, value: Value) {
        self.entries.push((key.to_string(), value));
    }

    pub fn num(&mut self, key: &str, x: f64) {
        self.push(key, Value::Num(x));
    }

    pub fn render(&self, format: Format, header: &Header) -> Result<String> {
        Ok(match format {
            Format::Text => self
                .entries
                .iter()
                .map(|(k, v)| format!("{k}: {}\n", v.text()))
                .collect(),
            Format::Csv => {
                let mut out = header.comment_lines();
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["quantity", "value"])?;
                for (k, v) in &self.entries {
                    match v {
                        Value::Nums(xs) => {
                            for (i, x) in xs.iter().enumerate() {
                                w.write_record([format!("{k}[{i}]"), num(*x)])?;
                            }
                        }
                        _ => w.write_record([k.clone(), v.text()])?,
                    }
                }
                out.push_str(&String::from_utf8(w.into_inner()?)?);
                out
            }
            Format::Json => {
                let mut map = header.json();
                let results: Map<String, Json> = self.entries.iter().map(|(k, v)| (k.clone(), v.json())).collect();
                map.insert("results".into(), Json::Object(results));
                serde_json::to_string_pretty(&map)? + "\n"
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Scalars recorded in the header.
    pub meta: Report,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    /// Text and CSV render identically.
    pub fn render(&self, format: Format, header: &Header) -> Result<String> {
        Ok(match format {
            Format::Text | Format::Csv => {
                let mut out = header.comment_lines();
                for (k, v) in &self.meta.entries {
                    out.push_str(&format!("# {k}: {}\n", v.text()));
                }
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|x| num(*x)))?;
                }
                out.push_str(&String::from_utf8(w.into_inner()?)?);
                out
            }
            Format::Json => {
                let mut map = header.json();
                let meta: Map<String, Json> = self.meta.entries.iter().map(|(k, v)| (k.clone(), v.json())).collect();
                map.insert("meta".into(), Json::Object(meta));
                map.insert("columns".into(), json!(self.columns));
                let rows: Vec<Json> = self
                    .rows
                    .iter()
                    .map(|r| Json::Array(r.iter().map(|x| json_num(*x)).collect()))
                    .collect();
                map.insert("rows".into(), Json::Array(rows));
                serde_json::to_string_pretty(&map)? + "\n"
            }
        })
    }
}
