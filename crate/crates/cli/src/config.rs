//! Manual JSON config validation. Every accessor carries the JSON-pointer
//! path of the value it inspects, so schema violations report exactly where
//! the problem sits.

use std::fmt;

use ergolab::abgroup::AbGroup;
use ergolab::systems::{abelian_extension, rotation_system, FiniteSystem};
use num::rational::Rational64;
use serde_json::Value;

#[derive(Debug)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "config error at {}: {}", p, self.message)
    }
}

pub fn err(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { pointer: pointer.to_string(), message: message.into() }
}

/// A JSON value paired with its pointer path.
pub struct Node<'a> {
    pub value: &'a Value,
    pub pointer: String,
}

impl<'a> Node<'a> {
    pub fn root(value: &'a Value) -> Node<'a> {
        Node { value, pointer: String::new() }
    }

    fn child(&self, seg: &str) -> String {
        format!("{}/{}", self.pointer, seg)
    }

    pub fn opt(&self, key: &str) -> Option<Node<'a>> {
        self.value.get(key).map(|v| Node { value: v, pointer: self.child(key) })
    }

    pub fn get(&self, key: &str) -> Result<Node<'a>, ConfigError> {
        self.opt(key).ok_or_else(|| err(&self.child(key), "missing required field"))
    }

    /// Rejects objects with fields outside the allowed set, so typos fail
    /// loudly instead of being ignored.
    pub fn expect_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        let obj = self
            .value
            .as_object()
            .ok_or_else(|| err(&self.pointer, "expected an object"))?;
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(err(
                    &self.child(k),
                    format!("unknown field, allowed fields: {}", allowed.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn str(&self) -> Result<&'a str, ConfigError> {
        self.value.as_str().ok_or_else(|| err(&self.pointer, "expected a string"))
    }

    pub fn u64(&self) -> Result<u64, ConfigError> {
        self.value
            .as_u64()
            .ok_or_else(|| err(&self.pointer, "expected a non-negative integer"))
    }

    pub fn i64(&self) -> Result<i64, ConfigError> {
        self.value.as_i64().ok_or_else(|| err(&self.pointer, "expected an integer"))
    }

    pub fn usize(&self) -> Result<usize, ConfigError> {
        Ok(self.u64()? as usize)
    }

    pub fn array(&self) -> Result<Vec<Node<'a>>, ConfigError> {
        let items = self
            .value
            .as_array()
            .ok_or_else(|| err(&self.pointer, "expected an array"))?;
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, v)| Node { value: v, pointer: self.child(&i.to_string()) })
            .collect())
    }

    pub fn i64_array(&self) -> Result<Vec<i64>, ConfigError> {
        self.array()?.iter().map(Node::i64).collect()
    }

    pub fn u64_array(&self) -> Result<Vec<u64>, ConfigError> {
        self.array()?.iter().map(Node::u64).collect()
    }

    pub fn usize_array(&self) -> Result<Vec<usize>, ConfigError> {
        self.array()?.iter().map(Node::usize).collect()
    }

    /// Rationals arrive as strings, either "p/q" or a bare integer "p".
    pub fn rational(&self) -> Result<Rational64, ConfigError> {
        let s = self
            .value
            .as_str()
            .ok_or_else(|| err(&self.pointer, "expected a rational string like \"3/5\""))?;
        parse_rational(s).ok_or_else(|| {
            err(&self.pointer, format!("cannot parse \"{s}\" as a rational \"p/q\""))
        })
    }
}

pub fn parse_rational(s: &str) -> Option<Rational64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let num: i64 = p.trim().parse().ok()?;
            let den: i64 = q.trim().parse().ok()?;
            if den == 0 {
                return None;
            }
            Some(Rational64::new(num, den))
        }
        None => {
            let num: i64 = s.parse().ok()?;
            Some(Rational64::new(num, 1))
        }
    }
}

/// System spec: `{"type": "cyclic", "n": N, "shift": c, "acting": "self" |
/// "free", "carry_fiber": m}`. The optional carry fiber turns the rotation
/// into its extension by the order-m carry cocycle of the shift.
pub fn system(node: &Node, max_n: Option<u64>) -> Result<FiniteSystem, ConfigError> {
    node.expect_keys(&["type", "n", "shift", "acting", "carry_fiber"])?;
    let ty = node.get("type")?;
    if ty.str()? != "cyclic" {
        return Err(err(&ty.pointer, "only \"cyclic\" systems are supported"));
    }
    let n_node = node.get("n")?;
    let n = n_node.u64()?;
    if n == 0 {
        return Err(err(&n_node.pointer, "group order must be at least 1"));
    }
    let shift = match node.opt("shift") {
        Some(s) => s.i64()?,
        None => 1,
    };
    let z = AbGroup::cyclic(n);
    let sv = if n > 1 { z.scalar_mul(shift, &z.generator(0)) } else { z.zero() };
    let acting = match node.opt("acting") {
        None => "self",
        Some(a) => match a.str()? {
            "self" => "self",
            "free" => "free",
            other => {
                return Err(err(&a.pointer, format!("unknown acting \"{other}\", use \"self\" or \"free\"")))
            }
        },
    };
    let base = if acting == "self" {
        rotation_system(&z, &z, &[sv])
    } else {
        rotation_system(&AbGroup::free(1), &z, &[sv])
    }
    .map_err(|e| err(&node.pointer, format!("system construction failed: {e:?}")))?;
    let sys = match node.opt("carry_fiber") {
        None => base,
        Some(cf) => {
            let m = cf.u64()?;
            if m < 2 {
                return Err(err(&cf.pointer, "carry fiber order must be at least 2"));
            }
            if n < 2 {
                return Err(err(&cf.pointer, "carry extensions need a base of order at least 2"));
            }
            let fiber = AbGroup::cyclic(m);
            let s = shift.rem_euclid(n as i64);
            // Going once around the base picks up s units of carry, so a
            // self-acting base only stays a Z/n action when m divides s.
            if acting == "self" && s as u64 % m != 0 {
                return Err(err(
                    &cf.pointer,
                    format!(
                        "the carry winds {s} mod {m} per period, which breaks the cyclic \
                         action; set \"acting\": \"free\" for this extension"
                    ),
                ));
            }
            let table: Vec<_> = (0..n as i64)
                .map(|x| if x + s >= n as i64 { fiber.generator(0) } else { fiber.zero() })
                .collect();
            abelian_extension(&base, &fiber, &[table])
                .map_err(|e| err(&cf.pointer, format!("extension failed: {e:?}")))?
        }
    };
    if let Some(cap) = max_n {
        if sys.size() as u64 > cap {
            return Err(err(
                &node.pointer,
                format!("system has {} points, above the --max-N cap of {cap}", sys.size()),
            ));
        }
    }
    Ok(sys)
}
