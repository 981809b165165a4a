//! Minimal s-expression reader shared by the formula parser and the SMT client.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Atom { text: String, pos: usize },
    List { items: Vec<Sexp>, pos: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SexpError {
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for SexpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.pos, self.message)
    }
}

impl Sexp {
    pub fn pos(&self) -> usize {
        match self {
            Sexp::Atom { pos, .. } | Sexp::List { pos, .. } => *pos,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom { text, .. } => Some(text),
            Sexp::List { .. } => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List { items, .. } => Some(items),
            Sexp::Atom { .. } => None,
        }
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom { text, .. } => f.write_str(text),
            Sexp::List { items, .. } => {
                f.write_str("(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Parses every top-level s-expression in `text`.
pub fn parse_all(text: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut p = Reader {
        bytes: text.as_bytes(),
        text,
        pos: 0,
    };
    let mut out = Vec::new();
    loop {
        p.skip_ws();
        if p.pos >= p.bytes.len() {
            return Ok(out);
        }
        out.push(p.read()?);
    }
}

/// Parses exactly one s-expression.
pub fn parse_one(text: &str) -> Result<Sexp, SexpError> {
    let mut all = parse_all(text)?;
    match all.len() {
        0 => Err(SexpError {
            pos: 0,
            message: "empty input".into(),
        }),
        1 => Ok(all.pop().unwrap()),
        _ => Err(SexpError {
            pos: all[1].pos(),
            message: "trailing input after expression".into(),
        }),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl Reader<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b';' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Sexp, SexpError> {
        self.skip_ws();
        let start = self.pos;
        match self.bytes.get(self.pos) {
            None => Err(SexpError {
                pos: start,
                message: "unexpected end of input".into(),
            }),
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        None => {
                            return Err(SexpError {
                                pos: start,
                                message: "unbalanced '('".into(),
                            })
                        }
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(Sexp::List { items, pos: start });
                        }
                        _ => items.push(self.read()?),
                    }
                }
            }
            Some(b')') => Err(SexpError {
                pos: start,
                message: "unexpected ')'".into(),
            }),
            Some(b'"') => {
                self.pos += 1;
                while self.pos < self.bytes.len() {
                    if self.bytes[self.pos] == b'"' {
                        // "" is an escaped quote in SMT-LIB strings
                        if self.bytes.get(self.pos + 1) == Some(&b'"') {
                            self.pos += 2;
                            continue;
                        }
                        self.pos += 1;
                        return Ok(Sexp::Atom {
                            text: self.text[start..self.pos].to_string(),
                            pos: start,
                        });
                    }
                    self.pos += 1;
                }
                Err(SexpError {
                    pos: start,
                    message: "unterminated string".into(),
                })
            }
            Some(b'|') => {
                self.pos += 1;
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'|' {
                    self.pos += 1;
                }
                if self.pos >= self.bytes.len() {
                    return Err(SexpError {
                        pos: start,
                        message: "unterminated quoted symbol".into(),
                    });
                }
                self.pos += 1;
                Ok(Sexp::Atom {
                    text: self.text[start..self.pos].to_string(),
                    pos: start,
                })
            }
            Some(_) => {
                while self.pos < self.bytes.len() {
                    let c = self.bytes[self.pos];
                    if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b';' {
                        break;
                    }
                    self.pos += 1;
                }
                Ok(Sexp::Atom {
                    text: self.text[start..self.pos].to_string(),
                    pos: start,
                })
            }
        }
    }
}

/// Incremental reader: returns complete top-level expressions as they become
/// available in `buf`, leaving any partial tail in place.
pub(crate) fn split_complete(buf: &str) -> (Vec<String>, usize) {
    let bytes = buf.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut consumed = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            consumed = i;
            continue;
        }
        let start = i;
        if c == b'(' {
            let mut depth = 0usize;
            let mut in_str = false;
            let mut in_bar = false;
            let mut done = false;
            while i < bytes.len() {
                let d = bytes[i];
                if in_str {
                    if d == b'"' {
                        in_str = false;
                    }
                } else if in_bar {
                    if d == b'|' {
                        in_bar = false;
                    }
                } else if d == b'"' {
                    in_str = true;
                } else if d == b'|' {
                    in_bar = true;
                } else if d == b'(' {
                    depth += 1;
                } else if d == b')' {
                    depth -= 1;
                    if depth == 0 {
                        i += 1;
                        done = true;
                        break;
                    }
                }
                i += 1;
            }
            if !done {
                break;
            }
        } else {
            while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'(' {
                i += 1;
            }
            // an atom is only complete once a delimiter follows it
            if i >= bytes.len() {
                break;
            }
        }
        out.push(buf[start..i].to_string());
        consumed = i;
    }
    (out, consumed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_lists() {
        let s = parse_one("(a (b c) ; comment\n d)").unwrap();
        assert_eq!(s.to_string(), "(a (b c) d)");
    }

    #[test]
    fn unbalanced_reports_position() {
        let e = parse_one("  (a (b c)").unwrap_err();
        assert_eq!(e.pos, 2);
    }

    #[test]
    fn split_keeps_partial_tail() {
        let (items, used) = split_complete("sat\n(a b) (c");
        assert_eq!(items, vec!["sat".to_string(), "(a b)".to_string()]);
        assert_eq!(&"sat\n(a b) (c"[used..], "(c");
    }
}
