use super::{ParseError, ParseErrorKind, Span};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Eq,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub text: String,
    pub span: Span,
}

impl Token {
    pub fn describe(&self) -> String {
        match self.tok {
            Tok::Eof => "<eof>".to_string(),
            _ => self.text.clone(),
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn mark(&self) -> Span {
        Span {
            start: self.pos,
            end: self.pos,
            line: self.line,
            column: self.column,
        }
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut cur = Cursor {
        src,
        pos: 0,
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        while let Some(c) = cur.peek() {
            if c.is_whitespace() {
                cur.bump();
            } else if c == '#' {
                while let Some(c) = cur.peek() {
                    if c == '\n' {
                        break;
                    }
                    cur.bump();
                }
            } else {
                break;
            }
        }
        let mut span = cur.mark();
        let Some(c) = cur.peek() else {
            out.push(Token {
                tok: Tok::Eof,
                text: String::new(),
                span,
            });
            return Ok(out);
        };
        let tok = match c {
            '{' | '}' | '[' | ']' | ',' | ';' | '=' => {
                cur.bump();
                match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    _ => Tok::Eq,
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    cur.bump();
                }
                Tok::Ident(src[span.start..cur.pos].to_string())
            }
            c if c.is_ascii_digit()
                || c == '.'
                || ((c == '-' || c == '+')
                    && matches!(cur.peek_at(1), Some(d) if d.is_ascii_digit() || d == '.')) =>
            {
                lex_number(&mut cur, span)?
            }
            other => {
                return Err(ParseError {
                    kind: ParseErrorKind::Lexical,
                    line: span.line,
                    column: span.column,
                    message: format!("unexpected character '{other}'"),
                    token: other.to_string(),
                });
            }
        };
        span.end = cur.pos;
        out.push(Token {
            tok,
            text: src[span.start..span.end].to_string(),
            span,
        });
    }
}

fn lex_number(cur: &mut Cursor<'_>, span: Span) -> Result<Tok, ParseError> {
    if matches!(cur.peek(), Some('-' | '+')) {
        cur.bump();
    }
    let mut digits = 0;
    while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
        cur.bump();
        digits += 1;
    }
    if cur.peek() == Some('.') {
        cur.bump();
        while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
            cur.bump();
            digits += 1;
        }
    }
    if matches!(cur.peek(), Some('e' | 'E')) {
        let exp_digit = match cur.peek_at(1) {
            Some(d) if d.is_ascii_digit() => true,
            Some('-' | '+') => matches!(cur.peek_at(2), Some(d) if d.is_ascii_digit()),
            _ => false,
        };
        if exp_digit {
            cur.bump();
            if matches!(cur.peek(), Some('-' | '+')) {
                cur.bump();
            }
            while matches!(cur.peek(), Some(c) if c.is_ascii_digit()) {
                cur.bump();
            }
        }
    }
    let text = &cur.src[span.start..cur.pos];
    let bad = |msg: String| ParseError {
        kind: ParseErrorKind::Lexical,
        line: span.line,
        column: span.column,
        message: msg,
        token: text.to_string(),
    };
    if digits == 0 {
        return Err(bad(format!("malformed number '{text}'")));
    }
    let v: f64 = text
        .parse()
        .map_err(|_| bad(format!("malformed number '{text}'")))?;
    if !v.is_finite() {
        return Err(bad(format!("number '{text}' out of range")));
    }
    Ok(Tok::Number(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_positions() {
        let toks = tokenize("seq a {\n  delay 5us; # hi\n}").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.tok.clone()).collect();
        assert_eq!(
            kinds,
            vec![
                Tok::Ident("seq".into()),
                Tok::Ident("a".into()),
                Tok::LBrace,
                Tok::Ident("delay".into()),
                Tok::Number(5.0),
                Tok::Ident("us".into()),
                Tok::Semi,
                Tok::RBrace,
                Tok::Eof
            ]
        );
        assert_eq!((toks[3].span.line, toks[3].span.column), (2, 3));
        assert_eq!((toks[7].span.line, toks[7].span.column), (3, 1));
    }

    #[test]
    fn numbers() {
        for (s, v) in [
            ("1e-3", 1e-3),
            ("-90", -90.0),
            ("0.5", 0.5),
            (".25", 0.25),
            ("+2", 2.0),
        ] {
            assert_eq!(tokenize(s).unwrap()[0].tok, Tok::Number(v));
        }
        let t = tokenize("5es").unwrap();
        assert_eq!(t[0].tok, Tok::Number(5.0));
        assert_eq!(t[1].tok, Tok::Ident("es".into()));
        assert!(tokenize("1e999").is_err());
        assert_eq!(tokenize("@").unwrap_err().kind, ParseErrorKind::Lexical);
    }
}
