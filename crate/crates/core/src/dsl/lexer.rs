use super::ast::{ParseDiagnostic, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum TokenKind {
    Ident(String),
    Int(i64),
    Str(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eq,
    Comma,
    Semi,
    DotDot,
    Eof,
}

impl TokenKind {
    pub(crate) fn describe(&self) -> String {
        match self {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Int(n) => format!("integer {n}"),
            TokenKind::Str(_) => "string".into(),
            TokenKind::LBrace => "`{`".into(),
            TokenKind::RBrace => "`}`".into(),
            TokenKind::LBracket => "`[`".into(),
            TokenKind::RBracket => "`]`".into(),
            TokenKind::Eq => "`=`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Semi => "`;`".into(),
            TokenKind::DotDot => "`..`".into(),
            TokenKind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokenKind,
    pub span: SourceSpan,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    diags: Vec<ParseDiagnostic>,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> SourceSpan {
        SourceSpan {
            start: self.pos,
            end: self.pos,
            line: self.line,
            column: self.col,
        }
    }

    fn finish(&self, start: SourceSpan) -> SourceSpan {
        SourceSpan { end: self.pos, ..start }
    }

    fn string(&mut self, start: SourceSpan) -> Option<String> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    self.diags.push(ParseDiagnostic::error(
                        "unterminated string literal",
                        self.finish(start),
                    ));
                    return None;
                }
                Some('"') => return Some(out),
                Some('\\') => {
                    let esc_start = self.mark();
                    match self.bump() {
                        Some('n') => out.push('\n'),
                        Some('t') => out.push('\t'),
                        Some('r') => out.push('\r'),
                        Some('0') => out.push('\0'),
                        Some('"') => out.push('"'),
                        Some('\\') => out.push('\\'),
                        Some('u') if self.peek() == Some('{') => {
                            self.bump();
                            let mut hex = String::new();
                            while let Some(c) = self.peek() {
                                if c == '}' || c == '"' || c == '\n' || hex.len() > 6 {
                                    break;
                                }
                                hex.push(c);
                                self.bump();
                            }
                            let ok = self.peek() == Some('}');
                            if ok {
                                self.bump();
                            }
                            match u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32) {
                                Some(c) if ok => out.push(c),
                                _ => self
                                    .diags
                                    .push(ParseDiagnostic::error("invalid unicode escape", self.finish(esc_start))),
                            }
                        }
                        Some(c) => {
                            // an escaped newline would end the string above
                            let span = self.finish(esc_start);
                            self.diags
                                .push(ParseDiagnostic::error(format!("unknown escape `\\{c}`"), span));
                            if c == '\n' {
                                return None;
                            }
                        }
                        None => {}
                    }
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn run(mut self) -> (Vec<Token>, Vec<ParseDiagnostic>) {
        let mut toks = vec![];
        while let Some(c) = self.peek() {
            let start = self.mark();
            let kind = match c {
                c if c.is_whitespace() => {
                    self.bump();
                    continue;
                }
                '#' => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                    continue;
                }
                '{' | '}' | '[' | ']' | '=' | ',' | ';' => {
                    self.bump();
                    match c {
                        '{' => TokenKind::LBrace,
                        '}' => TokenKind::RBrace,
                        '[' => TokenKind::LBracket,
                        ']' => TokenKind::RBracket,
                        '=' => TokenKind::Eq,
                        ',' => TokenKind::Comma,
                        _ => TokenKind::Semi,
                    }
                }
                '.' if self.peek2() == Some('.') => {
                    self.bump();
                    self.bump();
                    TokenKind::DotDot
                }
                '"' => match self.string(start) {
                    Some(s) => TokenKind::Str(s),
                    None => continue,
                },
                c if c.is_ascii_digit() || (c == '-' && self.peek2().is_some_and(|d| d.is_ascii_digit())) => {
                    self.bump();
                    while self.peek().is_some_and(|d| d.is_ascii_digit()) {
                        self.bump();
                    }
                    let span = self.finish(start);
                    match self.src[span.start..span.end].parse::<i64>() {
                        Ok(n) => TokenKind::Int(n),
                        Err(_) => {
                            self.diags
                                .push(ParseDiagnostic::error("integer literal out of range", span));
                            continue;
                        }
                    }
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    while self.peek().is_some_and(|d| d.is_ascii_alphanumeric() || d == '_') {
                        self.bump();
                    }
                    let span = self.finish(start);
                    TokenKind::Ident(self.src[span.start..span.end].to_string())
                }
                other => {
                    self.bump();
                    self.diags.push(ParseDiagnostic::error(
                        format!("unexpected character `{}`", other.escape_debug()),
                        self.finish(start),
                    ));
                    continue;
                }
            };
            toks.push(Token {
                kind,
                span: self.finish(start),
            });
        }
        toks.push(Token {
            kind: TokenKind::Eof,
            span: self.mark(),
        });
        (toks, self.diags)
    }
}

pub(crate) fn lex(src: &str) -> (Vec<Token>, Vec<ParseDiagnostic>) {
    Lexer {
        src,
        pos: 0,
        line: 1,
        col: 1,
        diags: vec![],
    }
    .run()
}

/// True for strings usable as identifiers in schema text.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
