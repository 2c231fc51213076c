//! Lexer and recursive-descent parser for signal expressions.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := NUMBER | IDENT | IDENT '(' args ')' | '(' expr ')'
//! args    := expr (',' expr)*
//! ```

use super::{BinOp, Expr, Func, SignalError, MAX_DEPTH};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str) -> Result<Vec<(Tok, usize)>, SignalError> {
        let mut lx = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), SignalError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number(start).map(|v| (Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos])
                .expect("ascii identifier")
                .to_string();
            return Ok((Tok::Ident(name), start));
        }
        Err(SignalError::Syntax {
            offset: start,
            message: format!("unexpected character {:?}", char::from(c)),
        })
    }

    fn number(&mut self, start: usize) -> Result<f64, SignalError> {
        let digits = |lx: &mut Lexer| {
            let s = lx.pos;
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(SignalError::Syntax {
                offset: start,
                message: "malformed number".into(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        let v: f64 = text.parse().map_err(|_| SignalError::Syntax {
            offset: start,
            message: format!("malformed number {text:?}"),
        })?;
        if !v.is_finite() {
            return Err(SignalError::Syntax {
                offset: start,
                message: format!("number {text:?} is out of range"),
            });
        }
        Ok(v)
    }
}

pub(super) struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    n_states: usize,
    depth: usize,
}

impl Parser {
    pub(super) fn parse(text: &str, n_states: usize) -> Result<Expr, SignalError> {
        let toks = Lexer::tokens(text)?;
        if toks.len() == 1 {
            return Err(SignalError::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let mut p = Parser {
            toks,
            idx: 0,
            n_states,
            depth: 0,
        };
        let e = p.expr()?;
        let (tok, at) = p.peek();
        if *tok != Tok::End {
            return Err(SignalError::Syntax {
                offset: at,
                message: format!("unexpected {}", describe(tok)),
            });
        }
        if e.depth() > MAX_DEPTH {
            return Err(SignalError::TooDeep { offset: 0 });
        }
        Ok(e)
    }

    fn peek(&self) -> (&Tok, usize) {
        let (t, at) = &self.toks[self.idx];
        (t, *at)
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.idx].clone();
        if self.idx + 1 < self.toks.len() {
            self.idx += 1;
        }
        t
    }

    fn enter(&mut self, at: usize) -> Result<(), SignalError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(SignalError::TooDeep { offset: at });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, SignalError> {
        let at = self.peek().1;
        self.enter(at)?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().0 {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, SignalError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().0 {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SignalError> {
        let (tok, at) = self.peek();
        if *tok == Tok::Minus {
            self.bump();
            self.enter(at)?;
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, SignalError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect_rparen(at)?;
                Ok(e)
            }
            Tok::Ident(name) => self.identifier(name, at),
            other => Err(SignalError::Syntax {
                offset: at,
                message: format!("expected a value, found {}", describe(&other)),
            }),
        }
    }

    fn identifier(&mut self, name: String, at: usize) -> Result<Expr, SignalError> {
        let called = *self.peek().0 == Tok::LParen;
        let func = Func::from_name(&name);
        if !called {
            if func.is_some() {
                return Err(SignalError::Arity {
                    name,
                    offset: at,
                    expected: 1,
                    found: 0,
                });
            }
            return self.variable(name, at);
        }
        let open = self.bump().1;
        let mut args = vec![self.expr()?];
        while *self.peek().0 == Tok::Comma {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect_rparen(open)?;
        match func {
            Some(f) if args.len() == 1 => Ok(Expr::Call(f, Box::new(args.pop().unwrap()))),
            Some(_) => Err(SignalError::Arity {
                name,
                offset: at,
                expected: 1,
                found: args.len(),
            }),
            None => {
                // Known variables cannot be called; anything else is unknown.
                if self.variable(name.clone(), at).is_ok() {
                    Err(SignalError::Arity {
                        name,
                        offset: at,
                        expected: 0,
                        found: args.len(),
                    })
                } else {
                    Err(SignalError::UnknownIdentifier { name, offset: at })
                }
            }
        }
    }

    fn variable(&self, name: String, at: usize) -> Result<Expr, SignalError> {
        match name.as_str() {
            "t" => return Ok(Expr::Time),
            "pi" => return Ok(Expr::Pi),
            _ => {}
        }
        if let Some(idx) = name.strip_prefix('x') {
            if !idx.starts_with('0') {
                if let Ok(k) = idx.parse::<usize>() {
                    if (1..=self.n_states).contains(&k) {
                        return Ok(Expr::State(k - 1));
                    }
                }
            }
        }
        Err(SignalError::UnknownIdentifier { name, offset: at })
    }

    fn expect_rparen(&mut self, open: usize) -> Result<(), SignalError> {
        let (tok, at) = self.bump();
        if tok != Tok::RParen {
            return Err(SignalError::Syntax {
                offset: at,
                message: format!(
                    "expected ')' to close '(' at byte {open}, found {}",
                    describe(&tok)
                ),
            });
        }
        Ok(())
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::Comma => "','".into(),
        Tok::End => "end of input".into(),
    }
}
