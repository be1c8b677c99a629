use std::fmt::Write;

use super::ast::*;

/// Renders `s` as a double-quoted literal.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{{{:x}}}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Canonical text: properties and sibling nodes sorted by id, constraints
/// sorted, one statement per line, two-space indentation, no comments.
pub fn serialize(doc: &SchemaDocument) -> String {
    let doc = doc.clone().canonicalized();
    let mut out = String::new();
    let h = &doc.header;
    let _ = writeln!(out, "schema {} {{", h.id);
    let _ = writeln!(out, "  context {};", quote(&h.context));
    if let Some(p) = &h.purpose {
        let _ = writeln!(out, "  purpose {};", quote(p));
    }
    let _ = writeln!(out, "  language {};", quote(&h.language));
    if let Some(r) = h.registry {
        let _ = writeln!(out, "  registry {r};");
    }
    out.push_str("}\n");

    for p in &doc.properties {
        out.push('\n');
        let kind = match p.domain {
            DomainDecl::Enum => "enum".to_string(),
            DomainDecl::Boolean => "boolean".to_string(),
            DomainDecl::Integer { min, max } => format!("integer {min}..{max}"),
        };
        let _ = writeln!(out, "property {} {kind} {{", p.id);
        for v in &p.values {
            match &v.phrase {
                Some(ph) => {
                    let _ = writeln!(out, "  {} {};", v.value, quote(ph));
                }
                None => {
                    let _ = writeln!(out, "  {};", v.value);
                }
            }
        }
        out.push_str("}\n");
    }

    for n in &doc.nodes {
        out.push('\n');
        write_node(&mut out, n, 0);
    }
    out
}

fn write_node(out: &mut String, n: &NodeDecl, depth: usize) {
    let pad = "  ".repeat(depth);
    let _ = write!(out, "{pad}node {}", n.id);
    if !n.differentiae.is_empty() {
        let cs: Vec<String> = n
            .differentiae
            .iter()
            .map(|c| format!("{} = {}", c.property, c.value))
            .collect();
        let _ = write!(out, " [{}]", cs.join(", "));
    }
    out.push_str(" {\n");
    if let Some(id) = n.concept_id {
        let _ = writeln!(out, "{pad}  id {id};");
    }
    if let Some(l) = &n.label {
        match &l.language {
            Some(lang) => {
                let _ = writeln!(out, "{pad}  label {} language {};", quote(&l.lemma), quote(lang));
            }
            None => {
                let _ = writeln!(out, "{pad}  label {};", quote(&l.lemma));
            }
        }
    }
    if !n.synonyms.is_empty() {
        let syns: Vec<String> = n.synonyms.iter().map(|s| quote(s)).collect();
        let _ = writeln!(out, "{pad}  synonyms {};", syns.join(", "));
    }
    if let Some(g) = &n.gloss {
        let _ = writeln!(out, "{pad}  gloss {};", quote(g));
    }
    for c in &n.children {
        write_node(out, c, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}
