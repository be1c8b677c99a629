use std::fmt;

use serde::Serialize;

/// Location of a piece of source text. `line` and `column` are 1-based and
/// point at `start`; `start..end` is a byte range.
///
/// Spans are positional metadata: two spans always compare equal, so
/// documents compare structurally.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub column: u32,
}

impl PartialEq for SourceSpan {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for SourceSpan {}

impl SourceSpan {
    /// Smallest span covering both.
    pub fn to(self, other: SourceSpan) -> SourceSpan {
        SourceSpan {
            end: other.end.max(self.end),
            ..self
        }
    }

    pub fn same_position(&self, other: &SourceSpan) -> bool {
        (self.start, self.end, self.line, self.column) == (other.start, other.end, other.line, other.column)
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagnosticSeverity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub severity: DiagnosticSeverity,
    pub message: String,
    pub span: SourceSpan,
    pub expected: Vec<String>,
}

impl ParseDiagnostic {
    pub fn error(message: impl Into<String>, span: SourceSpan) -> Self {
        ParseDiagnostic {
            severity: DiagnosticSeverity::Error,
            message: message.into(),
            span,
            expected: vec![],
        }
    }

    pub fn expecting(mut self, expected: &[&str]) -> Self {
        self.expected = expected.iter().map(|s| s.to_string()).collect();
        self
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            DiagnosticSeverity::Error => "error",
            DiagnosticSeverity::Warning => "warning",
        };
        write!(f, "{}: {sev}: {}", self.span, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDocument {
    pub header: Header,
    pub properties: Vec<PropertyDecl>,
    pub nodes: Vec<NodeDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub id: String,
    pub context: String,
    pub purpose: Option<String>,
    pub language: String,
    pub registry: Option<u64>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainDecl {
    Enum,
    Integer { min: i64, max: i64 },
    Boolean,
}

/// A literal value in a constraint or property block.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Literal {
    Int(i64),
    Ident(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(n) => write!(f, "{n}"),
            Literal::Ident(s) => f.write_str(s),
        }
    }
}

/// One entry of a property block: an enum variant (phrase optional) or a
/// value-to-phrase mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueDecl {
    pub value: Literal,
    pub phrase: Option<String>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyDecl {
    pub id: String,
    pub domain: DomainDecl,
    pub values: Vec<ValueDecl>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintDecl {
    pub property: String,
    pub value: Literal,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDecl {
    pub lemma: String,
    pub language: Option<String>,
    pub span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDecl {
    pub id: String,
    pub differentiae: Vec<ConstraintDecl>,
    pub concept_id: Option<u64>,
    pub label: Option<LabelDecl>,
    pub synonyms: Vec<String>,
    pub gloss: Option<String>,
    pub children: Vec<NodeDecl>,
    pub span: SourceSpan,
}

impl NodeDecl {
    pub fn new(id: impl Into<String>) -> Self {
        NodeDecl {
            id: id.into(),
            differentiae: vec![],
            concept_id: None,
            label: None,
            synonyms: vec![],
            gloss: None,
            children: vec![],
            span: SourceSpan::default(),
        }
    }

    /// This node and all descendants, pre-order.
    pub fn walk(&self) -> Vec<&NodeDecl> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }
}

impl SchemaDocument {
    pub fn all_nodes(&self) -> Vec<&NodeDecl> {
        self.nodes.iter().flat_map(NodeDecl::walk).collect()
    }

    /// Puts the document in the order the serializer emits: properties and
    /// sibling nodes by id, integer and boolean phrases by value, constraints
    /// by (property, value). Enum variants keep their declared order.
    pub fn canonicalize(&mut self) {
        self.properties.sort_by(|a, b| a.id.cmp(&b.id));
        for p in &mut self.properties {
            if p.domain != DomainDecl::Enum {
                p.values.sort_by(|a, b| a.value.cmp(&b.value));
            }
        }
        fn canon_nodes(nodes: &mut [NodeDecl]) {
            nodes.sort_by(|a, b| a.id.cmp(&b.id));
            for n in nodes.iter_mut() {
                n.differentiae
                    .sort_by(|a, b| (&a.property, &a.value).cmp(&(&b.property, &b.value)));
                canon_nodes(&mut n.children);
            }
        }
        canon_nodes(&mut self.nodes);
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }
}
