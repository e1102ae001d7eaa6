use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiteralError {
    #[error("empty literal")]
    Empty,
    #[error("invalid atom name {0:?}")]
    BadName(String),
    #[error("unbalanced parentheses in {0:?}")]
    Unbalanced(String),
    #[error("empty argument in {0:?}")]
    EmptyArgument(String),
}

/// A ground literal `[¬]name(arg1,...,argk)`.
///
/// Arguments are ground terms kept in canonical text form (whitespace
/// removed), so nested terms such as `done(move(a,b))` are allowed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub negated: bool,
    pub name: String,
    pub args: Vec<String>,
}

impl Literal {
    pub fn atom(name: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            negated: false,
            name: name.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn negate(&self) -> Literal {
        Literal {
            negated: !self.negated,
            ..self.clone()
        }
    }

    pub fn positive(&self) -> Literal {
        Literal {
            negated: false,
            ..self.clone()
        }
    }

    /// `done(action)`, the completion marker for a performed action.
    pub fn done(action: &Literal) -> Literal {
        Literal::atom("done", [action.to_string()])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_string().into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Literal, LiteralError> {
        std::str::from_utf8(bytes)
            .map_err(|_| LiteralError::BadName(String::from_utf8_lossy(bytes).into_owned()))?
            .parse()
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '\'' | '"' | '#'))
}

impl FromStr for Literal {
    type Err = LiteralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if text.is_empty() {
            return Err(LiteralError::Empty);
        }
        let (negated, rest) = match text.chars().next() {
            Some(c @ ('¬' | '~' | '!')) => (true, &text[c.len_utf8()..]),
            _ => (false, text.as_str()),
        };
        let Some(open) = rest.find('(') else {
            if !valid_name(rest) {
                return Err(LiteralError::BadName(rest.to_string()));
            }
            return Ok(Literal {
                negated,
                name: rest.to_string(),
                args: Vec::new(),
            });
        };
        let name = &rest[..open];
        if !valid_name(name) {
            return Err(LiteralError::BadName(name.to_string()));
        }
        if !rest.ends_with(')') {
            return Err(LiteralError::Unbalanced(text.clone()));
        }
        let inner = &rest[open + 1..rest.len() - 1];
        let mut args = Vec::new();
        let mut depth = 0i32;
        let mut start = 0;
        for (i, c) in inner.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(LiteralError::Unbalanced(text.clone()));
                    }
                }
                ',' if depth == 0 => {
                    args.push(&inner[start..i]);
                    start = i + 1;
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(LiteralError::Unbalanced(text.clone()));
        }
        if !inner.is_empty() {
            args.push(&inner[start..]);
        }
        if args.iter().any(|a| a.is_empty()) {
            return Err(LiteralError::EmptyArgument(text.clone()));
        }
        Ok(Literal {
            negated,
            name: name.to_string(),
            args: args.into_iter().map(str::to_string).collect(),
        })
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("¬")?;
        }
        f.write_str(&self.name)?;
        if !self.args.is_empty() {
            write!(f, "({})", self.args.join(","))?;
        }
        Ok(())
    }
}

impl Serialize for Literal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Literal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}
