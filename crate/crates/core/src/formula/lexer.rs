use chrono::NaiveDate;

use super::{CmpOp, ParseError};

#[derive(Clone, Debug, PartialEq)]
pub(super) enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Dec(f64),
    Date(NaiveDate),
    Op(CmpOp),
    LParen,
    RParen,
    Dot,
    Colon,
    Eof,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Str(s) => format!("text '{s}'"),
            Tok::Int(i) => i.to_string(),
            Tok::Dec(d) => d.to_string(),
            Tok::Date(d) => d.format("%Y-%m-%d").to_string(),
            Tok::Op(op) => format!("'{}'", op.symbol()),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Colon => "':'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
pub(super) struct Token {
    pub tok: Tok,
    /// Character offset of the first character.
    pub pos: usize,
}

pub(super) fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos: usize, expected: &str, found: String| ParseError { position: pos, expected: expected.into(), found };

    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            '.' => {
                i += 1;
                Tok::Dot
            }
            ':' => {
                i += 1;
                Tok::Colon
            }
            '=' => {
                i += 1;
                Tok::Op(CmpOp::Eq)
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    i += 2;
                    Tok::Op(CmpOp::Ne)
                } else {
                    return Err(err(i, "'!='", "'!'".into()));
                }
            }
            '<' | '>' => {
                let eq = chars.get(i + 1) == Some(&'=');
                i += if eq { 2 } else { 1 };
                Tok::Op(match (c, eq) {
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    _ => CmpOp::Ge,
                })
            }
            '\'' | '"' => {
                let quote = c;
                i += 1;
                let mut text = String::new();
                loop {
                    match chars.get(i) {
                        None => return Err(err(chars.len(), "closing quote", "end of input".into())),
                        Some(&q) if q == quote => {
                            if chars.get(i + 1) == Some(&quote) {
                                text.push(quote);
                                i += 2;
                            } else {
                                i += 1;
                                break;
                            }
                        }
                        Some(&other) => {
                            text.push(other);
                            i += 1;
                        }
                    }
                }
                Tok::Str(text)
            }
            c if c.is_ascii_digit() || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                if let Some((date, len)) = lex_date(&chars[i..]) {
                    i += len;
                    Tok::Date(date.ok_or_else(|| err(start, "valid date", chars[start..i].iter().collect()))?)
                } else {
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                    let mut is_dec = false;
                    if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                        is_dec = true;
                        i += 1;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                    let text: String = chars[start..i].iter().collect();
                    if is_dec {
                        Tok::Dec(text.parse().map_err(|_| err(start, "number", text.clone()))?)
                    } else {
                        Tok::Int(text.parse().map_err(|_| err(start, "64-bit integer", text.clone()))?)
                    }
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                Tok::Ident(chars[start..i].iter().collect())
            }
            other => return Err(err(i, "token", format!("'{other}'"))),
        };
        out.push(Token { tok, pos: start });
    }
    out.push(Token { tok: Tok::Eof, pos: chars.len() });
    Ok(out)
}

/// Recognises `dddd-dd-dd` not followed by an identifier character.
/// Returns the parsed date (None when the shape matches but the calendar
/// date is invalid) and the consumed length.
fn lex_date(chars: &[char]) -> Option<(Option<NaiveDate>, usize)> {
    if chars.len() < 10 {
        return None;
    }
    let shape = chars[..10]
        .iter()
        .enumerate()
        .all(|(k, c)| if k == 4 || k == 7 { *c == '-' } else { c.is_ascii_digit() });
    if !shape || chars.get(10).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '.') {
        return None;
    }
    let text: String = chars[..10].iter().collect();
    Some((NaiveDate::parse_from_str(&text, "%Y-%m-%d").ok(), 10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn dates_win_over_subtraction_shaped_numbers() {
        assert_eq!(
            toks("2020-01-31"),
            vec![Tok::Date(NaiveDate::from_ymd_opt(2020, 1, 31).unwrap()), Tok::Eof]
        );
        assert_eq!(toks("-12"), vec![Tok::Int(-12), Tok::Eof]);
        assert_eq!(toks("1.25"), vec![Tok::Dec(1.25), Tok::Eof]);
    }

    #[test]
    fn quotes_double_to_escape() {
        assert_eq!(toks("'O''Brien'"), vec![Tok::Str("O'Brien".into()), Tok::Eof]);
        assert_eq!(tokenize("'open").unwrap_err().position, 5);
    }

    #[test]
    fn invalid_calendar_date_is_an_error() {
        let e = tokenize("d = 2020-13-01").unwrap_err();
        assert_eq!(e.position, 4);
    }
}
