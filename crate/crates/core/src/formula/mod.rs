//! The predicate language used for individuation, comprehension, rule
//! guards and mandatory-field conditions.
//!
//! ```text
//! Formula  := Or
//! Or       := And ('or' And)*
//! And      := Unary ('and' Unary)*
//! Unary    := 'not' Unary | Atom
//! Atom     := Compare | InConcept | Exists | '(' Formula ')'
//! Compare  := Path Op Operand
//! InConcept:= Path 'in' ident
//! Exists   := 'exists' ident 'in' ident ':' Formula
//! Path     := ident ('.' ident)*
//! Operand  := 'text' | integer | decimal | 'true' | 'false' | YYYY-MM-DD | 'null' | 'self'
//! ```
//!
//! Keywords are lowercase and case-sensitive. `self` names the subject of
//! the evaluation, both as a path root and as a right-hand operand.

mod eval;
mod lexer;
mod parser;

use std::collections::BTreeSet;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use eval::{check, evaluate_checked, Binding, Subject};
pub(crate) use eval::check_with_vars;
pub use parser::parse;

/// Maximum nesting depth of a formula tree.
pub const MAX_DEPTH: usize = 16;
/// Maximum number of reference hops in a dotted path.
pub const MAX_HOPS: usize = 4;

const KEYWORDS: [&str; 9] = ["and", "or", "not", "exists", "in", "true", "false", "null", "self"];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Compare { path: Path, op: CmpOp, rhs: Operand },
    InConcept { path: Path, domain: String },
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Exists { var: String, domain: String, body: Box<Formula> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path(pub Vec<String>);

impl Path {
    pub fn single(name: impl Into<String>) -> Path {
        Path(vec![name.into()])
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(&self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Text(String),
    Integer(i64),
    Decimal(f64),
    Bool(bool),
    Date(NaiveDate),
    Null,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Literal(Literal),
    SelfRef,
}

impl Formula {
    pub fn and(parts: Vec<Formula>) -> Formula {
        Formula::And(parts)
    }

    pub fn compare(attr: &str, op: CmpOp, lit: Literal) -> Formula {
        Formula::Compare { path: Path::single(attr), op, rhs: Operand::Literal(lit) }
    }

    /// Names of every domain this formula quantifies over or tests membership in.
    pub fn referenced_domains(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_domains(&mut out);
        out
    }

    fn collect_domains(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::Compare { .. } => {}
            Formula::InConcept { domain, .. } => {
                out.insert(domain.clone());
            }
            Formula::And(parts) | Formula::Or(parts) => parts.iter().for_each(|p| p.collect_domains(out)),
            Formula::Not(inner) => inner.collect_domains(out),
            Formula::Exists { domain, body, .. } => {
                out.insert(domain.clone());
                body.collect_domains(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Compare { .. } | Formula::InConcept { .. } => 1,
            Formula::And(parts) | Formula::Or(parts) => 1 + parts.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Not(inner) => 1 + inner.depth(),
            Formula::Exists { body, .. } => 1 + body.depth(),
        }
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Integer(i) => write!(f, "{i}"),
            Literal::Decimal(d) => {
                let text = d.to_string();
                if text.contains('.') {
                    f.write_str(&text)
                } else {
                    write!(f, "{text}.0")
                }
            }
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            Literal::Null => f.write_str("null"),
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Literal(l) => l.fmt(f),
            Operand::SelfRef => f.write_str("self"),
        }
    }
}

impl Formula {
    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Compare { path, op, rhs } => write!(f, "{path} {} {rhs}", op.symbol()),
            Formula::InConcept { path, domain } => write!(f, "{path} in {domain}"),
            Formula::And(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" and ")?;
                    }
                    let parens = matches!(p, Formula::And(_) | Formula::Or(_) | Formula::Exists { .. });
                    p.fmt_child(f, parens)?;
                }
                Ok(())
            }
            Formula::Or(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" or ")?;
                    }
                    let parens = matches!(p, Formula::Or(_) | Formula::Exists { .. });
                    p.fmt_child(f, parens)?;
                }
                Ok(())
            }
            Formula::Not(inner) => {
                f.write_str("not ")?;
                let parens = matches!(**inner, Formula::And(_) | Formula::Or(_) | Formula::Exists { .. });
                inner.fmt_child(f, parens)
            }
            Formula::Exists { var, domain, body } => write!(f, "exists {var} in {domain}: {body}"),
        }
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Position-annotated syntax error.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at {position}: expected {expected}, found {found}")]
pub struct ParseError {
    /// Character offset into the input.
    pub position: usize,
    pub expected: String,
    pub found: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_literal() -> impl Strategy<Value = Literal> {
        prop_oneof![
            "[a-z' ]{0,6}".prop_map(Literal::Text),
            any::<i32>().prop_map(|i| Literal::Integer(i as i64)),
            (-1.0e6..1.0e6f64).prop_map(Literal::Decimal),
            any::<bool>().prop_map(Literal::Bool),
            (1990i32..2030, 1u32..13, 1u32..29)
                .prop_map(|(y, m, d)| Literal::Date(NaiveDate::from_ymd_opt(y, m, d).unwrap())),
            Just(Literal::Null),
        ]
    }

    fn arb_path() -> impl Strategy<Value = Path> {
        prop::collection::vec(prop::sample::select(vec!["name", "dept", "salary", "unit", "x"]), 1..4)
            .prop_map(|segs| Path(segs.into_iter().map(String::from).collect()))
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let ops = prop::sample::select(vec![CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]);
        let leaf = prop_oneof![
            (arb_path(), ops, prop_oneof![arb_literal().prop_map(Operand::Literal), Just(Operand::SelfRef)])
                .prop_map(|(path, op, rhs)| Formula::Compare { path, op, rhs }),
            (arb_path(), prop::sample::select(vec!["Employee", "Sales"]))
                .prop_map(|(path, d)| Formula::InConcept { path, domain: d.into() }),
        ];
        leaf.prop_recursive(5, 24, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
                inner.clone().prop_map(|f| Formula::Not(Box::new(f))),
                inner.prop_map(|f| Formula::Exists { var: "t".into(), domain: "Employee".into(), body: Box::new(f) }),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(f in arb_formula()) {
            let printed = f.to_string();
            let reparsed = parse(&printed).unwrap();
            prop_assert_eq!(reparsed, f);
        }
    }

    #[test]
    fn referenced_domains_collects_quantifiers_and_membership() {
        let f = parse("exists t in Training: t.who = self and self in Sales or x = 1").unwrap();
        let names: Vec<_> = f.referenced_domains().into_iter().collect();
        assert_eq!(names, vec!["Sales", "Training"]);
    }

    #[test]
    fn decimal_literals_keep_their_point() {
        assert_eq!(Literal::Decimal(3.0).to_string(), "3.0");
        assert_eq!(parse("x = 3.0").unwrap(), Formula::compare("x", CmpOp::Eq, Literal::Decimal(3.0)));
    }
}
