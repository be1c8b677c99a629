//! Recursive-descent parser for schema text.
//!
//! ```text
//! document  := header (property | node)*
//! header    := "schema" IDENT "{" header_stmt* "}"
//! header_stmt := "context" STR ";" | "purpose" STR+ ";" | "language" STR ";" | "registry" INT ";"
//! property  := "property" IDENT ("enum" | "integer" INT ".." INT | "boolean") "{" entry* "}"
//! entry     := (IDENT | INT) STR? ";"
//! node      := "node" IDENT ("[" constraint ("," constraint)* "]")? "{" node_stmt* "}"
//! constraint := IDENT "=" (IDENT | INT)
//! node_stmt := "id" INT ";" | "label" STR ("language" STR)? ";" | "synonyms" STR ("," STR)* ";"
//!            | "gloss" STR+ ";" | node
//! ```
//!
//! Keywords are contextual. After an error the parser skips to the end of the
//! current statement or block and carries on, so one pass reports every
//! independent problem.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{lex, Token, TokenKind};

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    diags: Vec<ParseDiagnostic>,
}

type PResult<T> = Result<T, ()>;

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn peek_kind(&self) -> &TokenKind {
        &self.toks[self.pos].kind
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek_kind(), TokenKind::Eof)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if !self.at_eof() {
            self.pos += 1;
        }
        t
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek_kind(), TokenKind::Ident(s) if s == kw)
    }

    fn error_here(&mut self, message: impl Into<String>, expected: &[&str]) {
        let t = self.peek().clone();
        let message = format!("{}, found {}", message.into(), t.kind.describe());
        self.diags
            .push(ParseDiagnostic::error(message, t.span).expecting(expected));
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> PResult<Token> {
        if *self.peek_kind() == kind {
            Ok(self.bump())
        } else {
            self.error_here(format!("expected {what}"), &[what]);
            Err(())
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.peek_kind().clone() {
            TokenKind::Ident(s) => Ok((s, self.bump().span)),
            _ => {
                self.error_here(format!("expected {what}"), &["identifier"]);
                Err(())
            }
        }
    }

    fn int(&mut self, what: &str) -> PResult<(i64, SourceSpan)> {
        match *self.peek_kind() {
            TokenKind::Int(n) => Ok((n, self.bump().span)),
            _ => {
                self.error_here(format!("expected {what}"), &["integer"]);
                Err(())
            }
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek_kind().clone() {
            TokenKind::Str(s) => {
                self.bump();
                Ok(s)
            }
            _ => {
                self.error_here(format!("expected {what}"), &["string"]);
                Err(())
            }
        }
    }

    /// One or more adjacent string literals, concatenated.
    fn strings(&mut self, what: &str) -> PResult<String> {
        let mut s = self.string(what)?;
        while let TokenKind::Str(more) = self.peek_kind().clone() {
            self.bump();
            s.push_str(&more);
        }
        Ok(s)
    }

    fn literal(&mut self) -> PResult<Literal> {
        match self.peek_kind().clone() {
            TokenKind::Ident(s) => {
                self.bump();
                Ok(Literal::Ident(s))
            }
            TokenKind::Int(n) => {
                self.bump();
                Ok(Literal::Int(n))
            }
            _ => {
                self.error_here("expected a value", &["identifier", "integer"]);
                Err(())
            }
        }
    }

    fn semi(&mut self) -> PResult<()> {
        self.expect(TokenKind::Semi, "`;`").map(|_| ())
    }

    /// Skips to the end of the broken statement or block. Stops after a `;`
    /// or a balanced `}` at depth zero, or before a closing `}` or a
    /// top-level keyword.
    fn synchronize(&mut self) {
        let mut depth = 0usize;
        let mut first = true;
        loop {
            match self.peek_kind() {
                TokenKind::Eof => return,
                TokenKind::Semi if depth == 0 => {
                    self.bump();
                    return;
                }
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace if depth == 0 => return,
                TokenKind::RBrace => {
                    depth -= 1;
                    if depth == 0 {
                        self.bump();
                        return;
                    }
                }
                TokenKind::Ident(s) if depth == 0 && !first && matches!(s.as_str(), "node" | "property" | "schema") => {
                    return
                }
                _ => {}
            }
            first = false;
            self.bump();
        }
    }

    fn document(&mut self) -> Option<SchemaDocument> {
        let header = if self.at_keyword("schema") {
            self.header()
        } else {
            self.error_here("expected schema header", &["schema"]);
            while !self.at_eof() && !self.at_keyword("property") && !self.at_keyword("node") {
                self.bump();
            }
            None
        };
        let mut properties = vec![];
        let mut nodes = vec![];
        while !self.at_eof() {
            if self.at_keyword("property") {
                match self.property() {
                    Ok(p) => properties.push(p),
                    Err(()) => self.synchronize(),
                }
            } else if self.at_keyword("node") {
                match self.node() {
                    Ok(n) => nodes.push(n),
                    Err(()) => self.synchronize(),
                }
            } else if self.at_keyword("schema") {
                self.error_here("duplicate schema header", &[]);
                self.bump();
                self.synchronize();
            } else {
                self.error_here("expected a declaration", &["property", "node"]);
                if matches!(self.peek_kind(), TokenKind::RBrace) {
                    self.bump();
                } else {
                    self.synchronize();
                }
            }
        }
        header.map(|header| SchemaDocument {
            header,
            properties,
            nodes,
        })
    }

    fn header(&mut self) -> Option<Header> {
        let start = self.bump().span;
        let id = match self.ident("schema name") {
            Ok((id, _)) => id,
            Err(()) => {
                self.synchronize();
                return None;
            }
        };
        if self.expect(TokenKind::LBrace, "`{`").is_err() {
            self.synchronize();
            return None;
        }
        let mut fields = HeaderFields::default();
        loop {
            match self.peek_kind().clone() {
                TokenKind::RBrace => break,
                TokenKind::Eof => {
                    self.error_here("unclosed schema header", &["`}`"]);
                    return None;
                }
                TokenKind::Ident(kw) if matches!(kw.as_str(), "context" | "purpose" | "language" | "registry") => {
                    if self.header_field(&kw, &mut fields).is_err() {
                        self.synchronize();
                    }
                }
                _ => {
                    self.error_here("expected header field", &["context", "purpose", "language", "registry"]);
                    self.synchronize();
                }
            }
        }
        let HeaderFields {
            context,
            purpose,
            language,
            registry,
        } = fields;
        let end = self.bump().span;
        let span = start.to(end);
        let mut missing = |field: &str, v: &Option<String>| {
            if v.is_none() {
                self.diags.push(ParseDiagnostic::error(
                    format!("schema header is missing `{field}`"),
                    span,
                ));
            }
        };
        missing("context", &context);
        missing("language", &language);
        Some(Header {
            id,
            context: context?,
            purpose,
            language: language?,
            registry,
            span,
        })
    }

    fn header_field(&mut self, kw: &str, fields: &mut HeaderFields) -> PResult<()> {
        let kw_span = self.bump().span;
        match kw {
            "context" => {
                let s = self.string("context name")?;
                set_once(&mut self.diags, &mut fields.context, s, kw, kw_span);
            }
            "purpose" => {
                let s = self.strings("purpose text")?;
                set_once(&mut self.diags, &mut fields.purpose, s, kw, kw_span);
            }
            "language" => {
                let s = self.string("language tag")?;
                set_once(&mut self.diags, &mut fields.language, s, kw, kw_span);
            }
            _ => {
                let (n, span) = self.int("registry base")?;
                if n <= 0 {
                    self.diags
                        .push(ParseDiagnostic::error("registry base must be positive", span));
                }
                set_once(&mut self.diags, &mut fields.registry, n.max(1) as u64, kw, kw_span);
            }
        }
        self.semi()
    }

    fn property(&mut self) -> PResult<PropertyDecl> {
        let start = self.bump().span;
        let (id, _) = self.ident("property name")?;
        let (kind, kind_span) = self.ident("property kind")?;
        let domain = match kind.as_str() {
            "enum" => DomainDecl::Enum,
            "boolean" => DomainDecl::Boolean,
            "integer" => {
                let (min, _) = self.int("range start")?;
                self.expect(TokenKind::DotDot, "`..`")?;
                let (max, _) = self.int("range end")?;
                DomainDecl::Integer { min, max }
            }
            _ => {
                self.diags.push(
                    ParseDiagnostic::error(format!("unknown property kind `{kind}`"), kind_span)
                        .expecting(&["enum", "integer", "boolean"]),
                );
                return Err(());
            }
        };
        self.expect(TokenKind::LBrace, "`{`")?;
        let mut values = vec![];
        loop {
            match self.peek_kind() {
                TokenKind::RBrace => break,
                TokenKind::Eof => {
                    self.error_here("unclosed property block", &["`}`"]);
                    return Err(());
                }
                _ => {
                    let entry_start = self.peek().span;
                    let res: PResult<ValueDecl> = (|| {
                        let value = self.literal()?;
                        let phrase = match self.peek_kind() {
                            TokenKind::Str(_) => Some(self.strings("phrase")?),
                            _ => None,
                        };
                        let end = self.peek().span;
                        self.semi()?;
                        Ok(ValueDecl {
                            value,
                            phrase,
                            span: entry_start.to(end),
                        })
                    })();
                    match res {
                        Ok(v) => values.push(v),
                        Err(()) => self.synchronize(),
                    }
                }
            }
        }
        let end = self.bump().span;
        Ok(PropertyDecl {
            id,
            domain,
            values,
            span: start.to(end),
        })
    }

    fn constraint(&mut self) -> PResult<ConstraintDecl> {
        let (property, span) = self.ident("property name")?;
        self.expect(TokenKind::Eq, "`=`")?;
        let value_span = self.peek().span;
        let value = self.literal()?;
        Ok(ConstraintDecl {
            property,
            value,
            span: span.to(value_span),
        })
    }

    fn node(&mut self) -> PResult<NodeDecl> {
        let start = self.bump().span;
        let (id, _) = self.ident("node name")?;
        let mut node = NodeDecl::new(id);
        if matches!(self.peek_kind(), TokenKind::LBracket) {
            self.bump();
            if !matches!(self.peek_kind(), TokenKind::RBracket) {
                node.differentiae.push(self.constraint()?);
                while matches!(self.peek_kind(), TokenKind::Comma) {
                    self.bump();
                    node.differentiae.push(self.constraint()?);
                }
            }
            self.expect(TokenKind::RBracket, "`]`")?;
        }
        let head_end = self.expect(TokenKind::LBrace, "`{`")?.span;
        node.span = start.to(head_end);
        loop {
            match self.peek_kind().clone() {
                TokenKind::RBrace => break,
                TokenKind::Eof => {
                    self.error_here("unclosed node block", &["`}`"]);
                    return Err(());
                }
                TokenKind::Ident(kw) if kw == "node" => match self.node() {
                    Ok(child) => node.children.push(child),
                    Err(()) => self.synchronize(),
                },
                TokenKind::Ident(kw) if matches!(kw.as_str(), "id" | "label" | "synonyms" | "gloss") => {
                    if self.node_stmt(&kw, &mut node).is_err() {
                        self.synchronize();
                    }
                }
                _ => {
                    self.error_here("expected node statement", &["id", "label", "synonyms", "gloss", "node"]);
                    self.synchronize();
                }
            }
        }
        self.bump();
        Ok(node)
    }

    fn node_stmt(&mut self, kw: &str, node: &mut NodeDecl) -> PResult<()> {
        let kw_span = self.bump().span;
        match kw {
            "id" => {
                let (n, span) = self.int("concept id")?;
                if n <= 0 {
                    self.diags
                        .push(ParseDiagnostic::error("concept id must be positive", span));
                }
                set_once(&mut self.diags, &mut node.concept_id, n.max(1) as u64, kw, kw_span);
            }
            "label" => {
                let lemma = self.string("lemma")?;
                let language = if self.at_keyword("language") {
                    self.bump();
                    Some(self.string("language tag")?)
                } else {
                    None
                };
                let label = LabelDecl {
                    lemma,
                    language,
                    span: kw_span.to(self.toks[self.pos.saturating_sub(1)].span),
                };
                set_once(&mut self.diags, &mut node.label, label, kw, kw_span);
            }
            "synonyms" => {
                let mut syns = vec![self.string("synonym")?];
                while matches!(self.peek_kind(), TokenKind::Comma) {
                    self.bump();
                    syns.push(self.string("synonym")?);
                }
                if !node.synonyms.is_empty() {
                    self.diags.push(ParseDiagnostic::error("duplicate `synonyms`", kw_span));
                }
                node.synonyms = syns;
            }
            _ => {
                let gloss = self.strings("gloss text")?;
                set_once(&mut self.diags, &mut node.gloss, gloss, kw, kw_span);
            }
        }
        self.semi()
    }
}

#[derive(Default)]
struct HeaderFields {
    context: Option<String>,
    purpose: Option<String>,
    language: Option<String>,
    registry: Option<u64>,
}

fn set_once<T>(diags: &mut Vec<ParseDiagnostic>, slot: &mut Option<T>, value: T, what: &str, span: SourceSpan) {
    if slot.is_some() {
        diags.push(ParseDiagnostic::error(format!("duplicate `{what}`"), span));
    }
    *slot = Some(value);
}

/// Reports constraints that name undeclared properties.
fn resolve_names(doc: &SchemaDocument, diags: &mut Vec<ParseDiagnostic>) {
    let declared: BTreeSet<&str> = doc.properties.iter().map(|p| p.id.as_str()).collect();
    for node in doc.all_nodes() {
        for c in &node.differentiae {
            if !declared.contains(c.property.as_str()) {
                diags.push(ParseDiagnostic::error(
                    format!("unknown property `{}` in differentia of `{}`", c.property, node.id),
                    c.span,
                ));
            }
        }
    }
}

/// Parses schema text. Any error diagnostic fails the parse; all of them are
/// returned.
pub fn parse(text: &str) -> Result<SchemaDocument, Vec<ParseDiagnostic>> {
    let (toks, mut diags) = lex(text);
    let mut parser = Parser {
        toks,
        pos: 0,
        diags: vec![],
    };
    let doc = parser.document();
    diags.extend(parser.diags);
    if let Some(doc) = &doc {
        resolve_names(doc, &mut diags);
    }
    diags.sort_by_key(|d| d.span.start);
    match doc {
        Some(doc) if diags.iter().all(|d| d.severity != DiagnosticSeverity::Error) => Ok(doc),
        _ => Err(diags),
    }
}
