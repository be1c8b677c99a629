use std::collections::BTreeMap;
use std::fmt;

use super::ast::*;
use crate::schema::{
    ConceptId, ContextProfile, DifferentiaConstraint, Domain, LexicalBinding, Locus, PropertyDef, Schema, SchemaError,
    Value,
};

/// A schema-core error with the source location that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerError {
    pub error: SchemaError,
    pub span: SourceSpan,
}

impl fmt::Display for LowerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: error: {}", self.span, self.error)
    }
}

impl std::error::Error for LowerError {}

/// Where each property and node was declared.
#[derive(Debug, Clone, Default)]
pub struct SpanTable {
    pub header: SourceSpan,
    pub properties: BTreeMap<String, SourceSpan>,
    pub nodes: BTreeMap<String, SourceSpan>,
}

impl SpanTable {
    /// Span of the first node a validation locus points at, or the header.
    pub fn locate(&self, locus: &Locus) -> SourceSpan {
        locus
            .primary_node()
            .and_then(|n| self.nodes.get(n).copied())
            .unwrap_or(self.header)
    }
}

#[derive(Debug, Clone)]
pub struct Lowered {
    pub schema: Schema,
    pub spans: SpanTable,
}

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Int(n) => Value::Int(*n),
        Literal::Ident(s) => Value::Symbol(s.clone()),
    }
}

fn property_def(p: &PropertyDecl) -> Result<PropertyDef, LowerError> {
    let domain = match p.domain {
        DomainDecl::Boolean => Domain::Boolean,
        DomainDecl::Integer { min, max } => Domain::Integer { min, max },
        DomainDecl::Enum => {
            let mut variants = vec![];
            for v in &p.values {
                match &v.value {
                    Literal::Ident(s) => variants.push(s.clone()),
                    Literal::Int(_) => {
                        return Err(LowerError {
                            error: SchemaError::ValueOutOfDomain {
                                property: p.id.clone(),
                                value: literal_value(&v.value),
                            },
                            span: v.span,
                        })
                    }
                }
            }
            Domain::Enum { variants }
        }
    };
    let mut def = PropertyDef::new(p.id.clone(), domain);
    for v in &p.values {
        let value = literal_value(&v.value);
        if !def.domain.contains(&value) {
            return Err(LowerError {
                error: SchemaError::ValueOutOfDomain {
                    property: p.id.clone(),
                    value,
                },
                span: v.span,
            });
        }
        if let Some(ph) = &v.phrase {
            def.phrases.insert(value, ph.clone());
        }
    }
    Ok(def)
}

fn binding(n: &NodeDecl, default_language: &str) -> Result<Option<LexicalBinding>, SchemaError> {
    match (&n.label, &n.gloss) {
        (None, None) if n.synonyms.is_empty() => Ok(None),
        (Some(l), Some(g)) => Ok(Some(
            LexicalBinding::new(
                l.lemma.clone(),
                l.language.clone().unwrap_or_else(|| default_language.to_string()),
                g.clone(),
            )
            .with_synonyms(n.synonyms.iter().cloned()),
        )),
        _ => Err(SchemaError::InvalidBinding(n.id.clone())),
    }
}

struct Lowering<'d> {
    doc: &'d SchemaDocument,
    schema: Schema,
    spans: SpanTable,
    errors: Vec<LowerError>,
}

impl Lowering<'_> {
    fn fail(&mut self, error: SchemaError, span: SourceSpan) {
        self.errors.push(LowerError { error, span });
    }

    fn node(&mut self, parent: Option<&str>, n: &NodeDecl) {
        let binding = match binding(n, &self.doc.header.language) {
            Ok(b) => b,
            Err(e) => {
                self.fail(e, n.span);
                None
            }
        };
        let constraints: Vec<DifferentiaConstraint> = n
            .differentiae
            .iter()
            .map(|c| DifferentiaConstraint::new(c.property.clone(), literal_value(&c.value)))
            .collect();
        let added = match parent {
            Some(p) => self.schema.add_node(p, n.id.clone(), constraints, binding),
            None => self.schema.add_root(n.id.clone(), binding).and_then(|id| {
                self.schema.set_differentiae(&id, constraints)?;
                Ok(id)
            }),
        };
        if let Err(e) = added {
            // point domain errors at the offending constraint
            let span = match &e {
                SchemaError::UnknownProperty(p) | SchemaError::ValueOutOfDomain { property: p, .. } => n
                    .differentiae
                    .iter()
                    .find(|c| &c.property == p)
                    .map(|c| c.span)
                    .unwrap_or(n.span),
                _ => n.span,
            };
            self.fail(e, span);
            return;
        }
        self.spans.nodes.insert(n.id.clone(), n.span);
        if let Some(cid) = n.concept_id {
            if let Err(e) = ConceptId::new(cid).and_then(|c| self.schema.set_concept_id(&n.id, Some(c))) {
                self.fail(e, n.span);
            }
        }
        for c in &n.children {
            self.node(Some(&n.id), c);
        }
    }
}

/// Builds a draft by applying the document's declarations in order.
pub fn lower(doc: &SchemaDocument) -> Result<Lowered, Vec<LowerError>> {
    let h = &doc.header;
    let context = ContextProfile::new(
        h.context.clone(),
        h.purpose.clone().unwrap_or_default(),
        h.language.clone(),
    );
    let schema = Schema::new(h.id.clone(), context, h.registry.unwrap_or(1))
        .map_err(|error| vec![LowerError { error, span: h.span }])?;
    let mut l = Lowering {
        doc,
        schema,
        spans: SpanTable {
            header: h.span,
            ..SpanTable::default()
        },
        errors: vec![],
    };
    for p in &doc.properties {
        match property_def(p).and_then(|def| {
            l.schema
                .add_property(def)
                .map_err(|error| LowerError { error, span: p.span })
        }) {
            Ok(()) => {
                l.spans.properties.insert(p.id.clone(), p.span);
            }
            Err(e) => l.errors.push(e),
        }
    }
    for n in &doc.nodes {
        l.node(None, n);
    }
    if l.errors.is_empty() {
        Ok(Lowered {
            schema: l.schema,
            spans: l.spans,
        })
    } else {
        Err(l.errors)
    }
}

/// The document a schema serializes as.
pub fn document_from_schema(schema: &Schema) -> SchemaDocument {
    let ctx = schema.context();
    let header = Header {
        id: schema.id().to_string(),
        context: ctx.name.clone(),
        purpose: Some(ctx.purpose.clone()).filter(|p| !p.is_empty()),
        language: ctx.language.clone(),
        registry: Some(schema.registry_base()),
        span: SourceSpan::default(),
    };
    let to_literal = |v: &Value| match v {
        Value::Int(n) => Literal::Int(*n),
        Value::Symbol(s) => Literal::Ident(s.clone()),
    };
    let properties = schema
        .properties()
        .map(|p| {
            let (domain, values) = match &p.domain {
                Domain::Enum { variants } => (
                    DomainDecl::Enum,
                    variants
                        .iter()
                        .map(|v| ValueDecl {
                            value: Literal::Ident(v.clone()),
                            phrase: p.phrases.get(&Value::Symbol(v.clone())).cloned(),
                            span: SourceSpan::default(),
                        })
                        .collect(),
                ),
                d => (
                    match d {
                        Domain::Integer { min, max } => DomainDecl::Integer { min: *min, max: *max },
                        _ => DomainDecl::Boolean,
                    },
                    p.phrases
                        .iter()
                        .map(|(v, ph)| ValueDecl {
                            value: to_literal(v),
                            phrase: Some(ph.clone()),
                            span: SourceSpan::default(),
                        })
                        .collect(),
                ),
            };
            PropertyDecl {
                id: p.id.clone(),
                domain,
                values,
                span: SourceSpan::default(),
            }
        })
        .collect();
    fn node_decl(schema: &Schema, id: &str, to_literal: &dyn Fn(&Value) -> Literal) -> NodeDecl {
        let n = schema.node(id).expect("node exists");
        let mut d = NodeDecl::new(id);
        d.differentiae = n
            .differentiae
            .iter()
            .map(|c| ConstraintDecl {
                property: c.property.clone(),
                value: to_literal(&c.value),
                span: SourceSpan::default(),
            })
            .collect();
        d.concept_id = n.concept_id.map(ConceptId::get);
        if let Some(b) = &n.binding {
            d.label = Some(LabelDecl {
                lemma: b.lemma.clone(),
                language: Some(b.language.clone()).filter(|l| *l != schema.context().language),
                span: SourceSpan::default(),
            });
            d.synonyms = b.synonyms.clone();
            d.gloss = Some(b.gloss.clone());
        }
        d.children = schema
            .children(id)
            .map(|c| node_decl(schema, &c.id, to_literal))
            .collect();
        d
    }
    let nodes = schema.roots().map(|r| node_decl(schema, &r.id, &to_literal)).collect();
    SchemaDocument {
        header,
        properties,
        nodes,
    }
}
