use std::collections::HashSet;

use super::lexer::{tokenize, Tok, Token};
use super::{
    DelaySpec, ParseError, ParseErrorKind, SequenceAst, Span, Stmt, StmtKind, TimeLit, TimeUnit,
};

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_n(&self, n: usize) -> &Token {
        let k = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[k]
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, tok: &Token, kind: ParseErrorKind, message: String) -> ParseError {
        ParseError {
            kind,
            line: tok.span.line,
            column: tok.span.column,
            message,
            token: tok.describe(),
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let t = self.peek();
        self.error_at(
            t,
            ParseErrorKind::Syntax,
            format!("expected {expected}, found '{}'", t.describe()),
        )
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if self.peek().tok == tok {
            Ok(self.advance())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Token, ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => Ok(self.advance()),
            _ => Err(self.unexpected(&format!("'{kw}'"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Token), ParseError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.advance()))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn number(&mut self, what: &str) -> Result<f64, ParseError> {
        match self.peek().tok {
            Tok::Number(v) => {
                self.advance();
                Ok(v)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn time(&mut self) -> Result<TimeLit, ParseError> {
        let value = self.number("a duration")?;
        let t = self.peek().clone();
        match &t.tok {
            Tok::Ident(u) => match TimeUnit::from_suffix(u) {
                Some(unit) => {
                    self.advance();
                    Ok(TimeLit { value, unit })
                }
                None => Err(self.error_at(
                    &t,
                    ParseErrorKind::UnknownUnit,
                    format!("unknown time unit '{u}' (expected ns, us, ms or s)"),
                )),
            },
            _ => Err(self.unexpected("a time unit (ns, us, ms, s)")),
        }
    }

    /// `key =` where `key` is one of the pulse attribute names.
    fn key(&mut self, name: &str) -> Result<(), ParseError> {
        self.keyword(name)?;
        self.expect(Tok::Eq, "'='")?;
        Ok(())
    }

    fn statement(&mut self) -> Result<Stmt, ParseError> {
        let start = self.peek().span;
        let kind = match &self.peek().tok {
            Tok::Ident(s) if s == "cycle" => {
                self.advance();
                let (label, _) = self.ident("a pulse label")?;
                self.expect(Tok::LBracket, "'['")?;
                let mut phases = vec![self.number("a phase")?];
                while self.peek().tok == Tok::Comma {
                    self.advance();
                    phases.push(self.number("a phase")?);
                }
                self.expect(Tok::RBracket, "',' or ']'")?;
                StmtKind::Cycle { label, phases }
            }
            Tok::Ident(s) if s == "pulse" => {
                self.advance();
                let label = match (&self.peek().tok, &self.peek_n(1).tok) {
                    (Tok::Ident(_), Tok::Eq) => None,
                    (Tok::Ident(_), _) => Some(self.ident("a label")?.0),
                    _ => None,
                };
                self.key("angle")?;
                let angle = self.number("an angle")?;
                self.key("phase")?;
                let phase = self.number("a phase")?;
                let dur = match &self.peek().tok {
                    Tok::Ident(s) if s == "dur" => {
                        self.key("dur")?;
                        Some(self.time()?)
                    }
                    _ => None,
                };
                StmtKind::Pulse {
                    label,
                    angle,
                    phase,
                    dur,
                }
            }
            Tok::Ident(s) if s == "delay" => {
                self.advance();
                match &self.peek().tok {
                    Tok::Number(_) => StmtKind::Delay(DelaySpec::Time(self.time()?)),
                    Tok::Ident(_) => StmtKind::Delay(DelaySpec::Symbol(self.ident("a symbol")?.0)),
                    _ => return Err(self.unexpected("a duration or symbol")),
                }
            }
            _ => return Err(self.unexpected("'cycle', 'pulse', 'delay' or '}'")),
        };
        let end = self.expect(Tok::Semi, "';'")?;
        Ok(Stmt {
            kind,
            span: Span {
                end: end.span.end,
                ..start
            },
        })
    }

    fn sequence(&mut self) -> Result<SequenceAst, ParseError> {
        let start = self.keyword("seq")?.span;
        let (name, _) = self.ident("a sequence name")?;
        self.expect(Tok::LBrace, "'{'")?;
        let mut statements = Vec::new();
        while self.peek().tok != Tok::RBrace {
            if self.peek().tok == Tok::Eof {
                return Err(self.unexpected("'}'"));
            }
            statements.push(self.statement()?);
        }
        let end = self.advance();
        Ok(SequenceAst {
            name,
            statements,
            span: Span {
                end: end.span.end,
                ..start
            },
        })
    }
}

/// Parses one or more `seq` blocks; sequence names must be unique.
pub fn parse_all(text: &str) -> Result<Vec<SequenceAst>, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let mut out = Vec::new();
    let mut names = HashSet::new();
    loop {
        let name_tok = p.peek_n(1).clone();
        let seq = p.sequence()?;
        if !names.insert(seq.name.clone()) {
            return Err(p.error_at(
                &name_tok,
                ParseErrorKind::DuplicateName,
                format!("duplicate sequence name '{}'", seq.name),
            ));
        }
        out.push(seq);
        if p.peek().tok == Tok::Eof {
            return Ok(out);
        }
    }
}

/// Parses exactly one `seq` block.
pub fn parse(text: &str) -> Result<SequenceAst, ParseError> {
    let mut all = parse_all(text)?;
    if all.len() > 1 {
        let tokens = tokenize(text)?;
        // Second `seq` keyword marks the offending block.
        let second = tokens
            .iter()
            .filter(|t| t.tok == Tok::Ident("seq".into()))
            .nth(1)
            .map(|t| t.span)
            .unwrap_or_default();
        return Err(ParseError {
            kind: ParseErrorKind::Syntax,
            line: second.line,
            column: second.column,
            message: "expected end of input after the sequence".into(),
            token: "seq".into(),
        });
    }
    Ok(all.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const HAHN: &str = "seq hahn { cycle p1 [0, 180]; pulse p1 angle=90 phase=0; delay tau; pulse angle=180 phase=0; delay tau; pulse angle=90 phase=0; }";

    #[test]
    fn hahn_text() {
        let ast = parse(HAHN).unwrap();
        assert_eq!(ast.name, "hahn");
        assert_eq!(ast.statements.len(), 6);
        assert_eq!(
            ast.statements[0].kind,
            StmtKind::Cycle {
                label: "p1".into(),
                phases: vec![0.0, 180.0]
            }
        );
        assert_eq!(
            ast.statements[1].kind,
            StmtKind::Pulse {
                label: Some("p1".into()),
                angle: 90.0,
                phase: 0.0,
                dur: None
            }
        );
        assert_eq!(
            ast.statements[2].kind,
            StmtKind::Delay(DelaySpec::Symbol("tau".into()))
        );
    }

    #[test]
    fn single_pulse() {
        let ast = parse("seq r { pulse angle=90 phase=0; }").unwrap();
        assert_eq!(ast.statements.len(), 1);
    }

    #[test]
    fn empty_input_fails_at_origin() {
        let e = parse("").unwrap_err();
        assert_eq!((e.line, e.column, e.kind), (1, 1, ParseErrorKind::Syntax));
    }

    #[test]
    fn spans_are_positioned() {
        let ast = parse("seq a {\n  pulse angle = 90 phase = 0 dur = 10 us;\n}").unwrap();
        let s = ast.statements[0].span;
        assert_eq!((s.line, s.column), (2, 3));
        assert_eq!(
            ast.statements[0].kind,
            StmtKind::Pulse {
                label: None,
                angle: 90.0,
                phase: 0.0,
                dur: Some(TimeLit {
                    value: 10.0,
                    unit: TimeUnit::Us
                })
            }
        );
    }

    #[test]
    fn error_kinds() {
        let e = parse("seq a { delay 5xs; }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownUnit);
        assert_eq!((e.line, e.column), (1, 16));
        let e = parse_all("seq a { }\nseq a { }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::DuplicateName);
        assert_eq!((e.line, e.column), (2, 5));
        let e = parse("seq a { pulse angle=90; }").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!(e.token, ";");
        let e = parse("seq a { delay 5; }").unwrap_err();
        assert!(e.message.contains("time unit"));
        assert!(parse("seq a { } seq b { }").is_err());
        assert_eq!(parse_all("seq a { } seq b { }").unwrap().len(), 2);
    }
}
