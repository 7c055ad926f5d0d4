//! Entitlement expressions: sums and differences of decimals, fractions
//! `p/q` and quadratic surds `sqrt(k)/m`.

use crate::error::{Error, Result};
use crate::proportional::RationalEntitlement;

#[derive(Clone, Debug, PartialEq)]
pub struct Entitlement {
    pub value: f64,
    /// Set only when the whole expression is one fraction or integer.
    pub exact: Option<RationalEntitlement>,
}

#[derive(Clone, Debug, PartialEq)]
enum Atom {
    Number(String),
    Fraction(String, String),
    Surd(String, Option<String>),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Result<String> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let bytes = rest.as_bytes();
        let mut len = 0;
        while len < bytes.len() {
            match bytes[len] {
                b'0'..=b'9' | b'.' => len += 1,
                b'e' | b'E' => {
                    len += 1;
                    if matches!(bytes.get(len), Some(b'+' | b'-')) {
                        len += 1;
                    }
                }
                _ => break,
            }
        }
        if len == 0 {
            return Err(self.error("expected a number"));
        }
        self.pos += len;
        Ok(rest[..len].to_string())
    }

    fn error(&self, what: &str) -> Error {
        Error::MalformedEntitlements(format!("{what} at offset {} in `{}`", self.pos, self.src))
    }

    fn atom(&mut self) -> Result<Atom> {
        if self.eat("sqrt(") {
            let k = self.number()?;
            if !self.eat(")") {
                return Err(self.error("expected `)`"));
            }
            let m = if self.eat("/") {
                Some(self.number()?)
            } else {
                None
            };
            return Ok(Atom::Surd(k, m));
        }
        let p = self.number()?;
        if self.eat("/") {
            Ok(Atom::Fraction(p, self.number()?))
        } else {
            Ok(Atom::Number(p))
        }
    }
}

fn float(text: &str) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::MalformedEntitlements(format!("`{text}` is not a number")))
}

fn divide(num: f64, den: f64) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::MalformedEntitlements("division by zero".into()));
    }
    Ok(num / den)
}

impl Atom {
    fn value(&self) -> Result<f64> {
        match self {
            Atom::Number(x) => float(x),
            Atom::Fraction(p, q) => divide(float(p)?, float(q)?),
            Atom::Surd(k, m) => {
                let root = float(k)?.sqrt();
                match m {
                    Some(m) => divide(root, float(m)?),
                    None => Ok(root),
                }
            }
        }
    }

    fn exact(&self) -> Option<RationalEntitlement> {
        let integer = |s: &str| s.parse::<u64>().ok();
        match self {
            Atom::Number(x) => RationalEntitlement::new(integer(x)?, 1u32).ok(),
            Atom::Fraction(p, q) => RationalEntitlement::new(integer(p)?, integer(q)?).ok(),
            Atom::Surd(..) => None,
        }
    }
}

/// Parses and evaluates an entitlement expression to double precision.
pub fn parse_entitlement(src: &str) -> Result<Entitlement> {
    let mut lexer = Lexer { src, pos: 0 };
    let first = lexer.atom()?;
    let mut value = first.value()?;
    let mut terms = 1;
    loop {
        let sign = if lexer.eat("-") {
            -1.0
        } else if lexer.eat("+") {
            1.0
        } else {
            break;
        };
        value += sign * lexer.atom()?.value()?;
        terms += 1;
    }
    lexer.skip_ws();
    if lexer.pos != src.len() {
        return Err(lexer.error("unexpected input"));
    }
    Ok(Entitlement {
        value,
        exact: if terms == 1 { first.exact() } else { None },
    })
}
