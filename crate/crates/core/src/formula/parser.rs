use super::lexer::{tokenize, Tok, Token};
use super::{is_keyword, Formula, Literal, Operand, ParseError, Path, MAX_DEPTH, MAX_HOPS};
use crate::error::{Error, Result};

/// Parses formula text. Fails with a positioned [`ParseError`] or with
/// [`Error::DepthExceeded`] when nesting goes past [`MAX_DEPTH`].
pub fn parse(text: &str) -> Result<Formula> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, at: 0, nesting: 0 };
    let f = p.formula()?;
    p.expect_eof()?;
    if f.depth() > MAX_DEPTH {
        return Err(Error::DepthExceeded { limit: MAX_DEPTH });
    }
    Ok(f)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> Error {
        let t = self.peek();
        Error::Parse(ParseError { position: t.pos, expected: expected.into(), found: t.tok.describe() })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(&format!("'{kw}'")))
        }
    }

    fn expect_eof(&self) -> Result<()> {
        match self.peek().tok {
            Tok::Eof => Ok(()),
            _ => Err(self.error("'and', 'or' or end of input")),
        }
    }

    /// A user identifier: not a keyword.
    fn ident(&mut self, what: &str) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_keyword(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.nesting += 1;
        // Parse-time guard; the exact tree depth is checked after parsing.
        if self.nesting > MAX_DEPTH * 4 {
            return Err(Error::DepthExceeded { limit: MAX_DEPTH });
        }
        Ok(())
    }

    fn formula(&mut self) -> Result<Formula> {
        self.enter()?;
        let mut parts = vec![self.and()?];
        while self.at_keyword("or") {
            self.bump();
            parts.push(self.and()?);
        }
        self.nesting -= 1;
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::Or(parts) })
    }

    fn and(&mut self) -> Result<Formula> {
        let mut parts = vec![self.unary()?];
        while self.at_keyword("and") {
            self.bump();
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { Formula::And(parts) })
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.at_keyword("not") {
            self.bump();
            self.enter()?;
            let inner = self.unary()?;
            self.nesting -= 1;
            return Ok(Formula::Not(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula> {
        if self.peek().tok == Tok::LParen {
            self.bump();
            let inner = self.formula()?;
            if self.peek().tok != Tok::RParen {
                return Err(self.error("')'"));
            }
            self.bump();
            return Ok(inner);
        }
        if self.at_keyword("exists") {
            self.bump();
            let var = self.ident("variable name")?;
            self.expect_keyword("in")?;
            let domain = self.ident("domain name")?;
            if self.peek().tok != Tok::Colon {
                return Err(self.error("':'"));
            }
            self.bump();
            let body = self.formula()?;
            return Ok(Formula::Exists { var, domain, body: Box::new(body) });
        }
        let path = self.path()?;
        if self.at_keyword("in") {
            self.bump();
            let domain = self.ident("domain name")?;
            return Ok(Formula::InConcept { path, domain });
        }
        let op = match self.peek().tok {
            Tok::Op(op) => op,
            _ => return Err(self.error("comparison operator or 'in'")),
        };
        self.bump();
        let rhs = self.operand()?;
        Ok(Formula::Compare { path, op, rhs })
    }

    fn path(&mut self) -> Result<Path> {
        let first = match &self.peek().tok {
            Tok::Ident(s) if s == "self" || !is_keyword(s) => s.clone(),
            _ => return Err(self.error("attribute path")),
        };
        self.bump();
        let mut segs = vec![first];
        while self.peek().tok == Tok::Dot {
            if segs.len() > MAX_HOPS {
                return Err(self.error(&format!("at most {MAX_HOPS} path hops")));
            }
            self.bump();
            segs.push(self.ident("attribute name")?);
        }
        Ok(Path(segs))
    }

    fn operand(&mut self) -> Result<Operand> {
        let lit = match &self.peek().tok {
            Tok::Str(s) => Literal::Text(s.clone()),
            Tok::Int(i) => Literal::Integer(*i),
            Tok::Dec(d) => Literal::Decimal(*d),
            Tok::Date(d) => Literal::Date(*d),
            Tok::Ident(s) if s == "true" => Literal::Bool(true),
            Tok::Ident(s) if s == "false" => Literal::Bool(false),
            Tok::Ident(s) if s == "null" => Literal::Null,
            Tok::Ident(s) if s == "self" => {
                self.bump();
                return Ok(Operand::SelfRef);
            }
            _ => return Err(self.error("literal")),
        };
        self.bump();
        Ok(Operand::Literal(lit))
    }
}
