//! Deterministic rendering: fraction strings for exact values, 12
//! significant digits for floats, sorted-key JSON, hand-rolled CSV.

use std::collections::BTreeMap;

use ergolab::cyclo::ExactComplex;
use ergolab::phases::{Phase, Symbol};
use num::rational::Rational64;
use num::BigRational;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn frac(r: Rational64) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn big_frac(r: &BigRational) -> String {
    if r.denom() == &num::BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// 12 significant digits in scientific notation; exact zero prints as "0".
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if !x.is_finite() {
        format!("{x}")
    } else {
        format!("{:.11e}", x)
    }
}

pub fn no_symbols() -> BTreeMap<Symbol, f64> {
    BTreeMap::new()
}

/// The valuation used for all numeric renderings of symbolic quantities.
pub fn standard_symbols() -> BTreeMap<Symbol, f64> {
    let mut m = BTreeMap::new();
    m.insert(Symbol::new("alpha"), std::f64::consts::SQRT_2 - 1.0);
    m.insert(Symbol::new("beta"), 3.0f64.sqrt() - 1.0);
    m
}

pub fn complex_parts(c: &ExactComplex, vals: &BTreeMap<Symbol, f64>) -> (f64, f64) {
    c.eval_f64(vals).unwrap_or((f64::NAN, f64::NAN))
}

pub fn complex_json(c: &ExactComplex, vals: &BTreeMap<Symbol, f64>) -> Value {
    let mut m = Map::new();
    let (re, im) = complex_parts(c, vals);
    m.insert("re".into(), Value::String(sig(re)));
    m.insert("im".into(), Value::String(sig(im)));
    if let Some(q) = c.rational_value() {
        m.insert("exact".into(), Value::String(big_frac(&q)));
    }
    Value::Object(m)
}

pub fn phase_list(ps: &[Phase]) -> Value {
    Value::Array(ps.iter().map(|p| Value::String(p.to_string())).collect())
}

fn quote(cell: &str) -> String {
    if cell.contains(',') || cell.contains('"') || cell.contains('\n') {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

pub fn csv(rows: &[Vec<String>]) -> Vec<u8> {
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| quote(c)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn json_bytes(v: &Value) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("summary serialization");
    bytes.push(b'\n');
    bytes
}
