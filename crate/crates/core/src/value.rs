//! Typed attribute values and the value types concepts declare.

use std::cmp::Ordering;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::Id;

/// The declared type of an attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Text,
    Integer,
    Decimal,
    Boolean,
    Date,
    /// A reference to an individual of the given concept.
    Reference(Id),
}

impl ValueType {
    pub fn name(&self) -> &'static str {
        match self {
            ValueType::Text => "text",
            ValueType::Integer => "integer",
            ValueType::Decimal => "decimal",
            ValueType::Boolean => "boolean",
            ValueType::Date => "date",
            ValueType::Reference(_) => "reference",
        }
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Reference(target) => write!(f, "reference({target})"),
            other => f.write_str(other.name()),
        }
    }
}

/// A single attribute value. Attributes are single-valued; absence is
/// represented by the attribute not being present in the value map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Text(String),
    Integer(i64),
    Decimal(f64),
    Boolean(bool),
    Date(NaiveDate),
    Ref(Id),
}

impl Value {
    pub fn conforms_to(&self, ty: ValueType) -> bool {
        matches!(
            (self, ty),
            (Value::Text(_), ValueType::Text)
                | (Value::Integer(_), ValueType::Integer)
                | (Value::Decimal(_), ValueType::Decimal)
                | (Value::Boolean(_), ValueType::Boolean)
                | (Value::Date(_), ValueType::Date)
                | (Value::Ref(_), ValueType::Reference(_))
        )
    }

    pub fn as_ref_id(&self) -> Option<Id> {
        match self {
            Value::Ref(id) => Some(*id),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    /// Ordering between two values of compatible types. Integers and
    /// decimals compare numerically; everything else only against its own kind.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Integer(a), Value::Integer(b)) => Some(a.cmp(b)),
            (Value::Integer(a), Value::Decimal(b)) => (*a as f64).partial_cmp(b),
            (Value::Decimal(a), Value::Integer(b)) => a.partial_cmp(&(*b as f64)),
            (Value::Decimal(a), Value::Decimal(b)) => a.partial_cmp(b),
            (Value::Boolean(a), Value::Boolean(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.cmp(b)),
            (Value::Ref(a), Value::Ref(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }

    /// Coerces a loosely typed JSON value (manifests, wire payloads) into a
    /// value of the declared type.
    pub fn from_json(json: &serde_json::Value, ty: ValueType) -> Result<Value, String> {
        use serde_json::Value as J;
        let bad = || format!("expected {ty}, found {json}");
        match (ty, json) {
            (ValueType::Text, J::String(s)) => Ok(Value::Text(s.clone())),
            (ValueType::Integer, J::Number(n)) => n.as_i64().map(Value::Integer).ok_or_else(bad),
            (ValueType::Decimal, J::Number(n)) => n
                .as_f64()
                .filter(|f| f.is_finite())
                .map(Value::Decimal)
                .ok_or_else(bad),
            (ValueType::Boolean, J::Bool(b)) => Ok(Value::Boolean(*b)),
            (ValueType::Date, J::String(s)) => parse_date(s).map(Value::Date).ok_or_else(bad),
            (ValueType::Reference(_), J::Number(n)) => n.as_u64().map(|v| Value::Ref(Id(v))).ok_or_else(bad),
            // Already-tagged values as produced by our own serializer.
            (_, J::Object(_)) => {
                let v: Value = serde_json::from_value(json.clone()).map_err(|_| bad())?;
                if v.conforms_to(ty) {
                    Ok(v)
                } else {
                    Err(bad())
                }
            }
            _ => Err(bad()),
        }
    }

    /// Coerces a plain string (query parameters, CSV cells) into the declared type.
    pub fn from_text(text: &str, ty: ValueType) -> Result<Value, String> {
        let bad = || format!("expected {ty}, found '{text}'");
        match ty {
            ValueType::Text => Ok(Value::Text(text.to_string())),
            ValueType::Integer => text.parse().map(Value::Integer).map_err(|_| bad()),
            ValueType::Decimal => text
                .parse::<f64>()
                .ok()
                .filter(|f| f.is_finite())
                .map(Value::Decimal)
                .ok_or_else(bad),
            ValueType::Boolean => match text {
                "true" => Ok(Value::Boolean(true)),
                "false" => Ok(Value::Boolean(false)),
                _ => Err(bad()),
            },
            ValueType::Date => parse_date(text).map(Value::Date).ok_or_else(bad),
            ValueType::Reference(_) => text.parse().map(|v| Value::Ref(Id(v))).map_err(|_| bad()),
        }
    }

    /// Plain JSON rendering (untagged) used by exports.
    pub fn to_plain_json(&self) -> serde_json::Value {
        match self {
            Value::Text(s) => s.clone().into(),
            Value::Integer(i) => (*i).into(),
            Value::Decimal(d) => serde_json::Number::from_f64(*d).map(Into::into).unwrap_or(serde_json::Value::Null),
            Value::Boolean(b) => (*b).into(),
            Value::Date(d) => d.format("%Y-%m-%d").to_string().into(),
            Value::Ref(id) => id.0.into(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(d) => write!(f, "{d}"),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Value::Ref(id) => write!(f, "{id}"),
        }
    }
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    if s.len() != 10 {
        return None;
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_comparison_crosses_integer_and_decimal() {
        assert_eq!(Value::Integer(2).compare(&Value::Decimal(2.5)), Some(Ordering::Less));
        assert_eq!(Value::Decimal(3.0).compare(&Value::Integer(3)), Some(Ordering::Equal));
        assert_eq!(Value::Text("a".into()).compare(&Value::Integer(1)), None);
    }

    #[test]
    fn json_coercion_follows_declared_type() {
        let j = serde_json::json!("2001-02-03");
        assert_eq!(
            Value::from_json(&j, ValueType::Date).unwrap(),
            Value::Date(NaiveDate::from_ymd_opt(2001, 2, 3).unwrap())
        );
        assert!(Value::from_json(&j, ValueType::Integer).is_err());
        assert!(Value::from_json(&serde_json::json!(1.5), ValueType::Integer).is_err());
        assert_eq!(Value::from_json(&serde_json::json!(7), ValueType::Reference(Id(3))).unwrap(), Value::Ref(Id(7)));
    }

    #[test]
    fn dates_must_be_fully_padded() {
        assert!(parse_date("2001-2-3").is_none());
        assert!(parse_date("2001-13-01").is_none());
    }
}
