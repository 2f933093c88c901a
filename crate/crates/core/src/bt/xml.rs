//! Canonical XML form of a task graph.
//!
//! ```text
//! <TaskGraph name="...">
//!   <Sequence> ... </Sequence>
//!   <Fallback> ... </Fallback>
//!   <Retry num_attempts="3"> one child </Retry>
//!   <Action name="Grasp" target="cracker_box"/>
//!   <Condition name="IsObjectHeld" target="cracker_box"/>
//! </TaskGraph>
//! ```
//!
//! Unknown leaf attributes become parameters. Serialization emits attributes
//! as `name`, `num_attempts`, then parameters alphabetically, indents by two
//! spaces and ends every line with LF.

use std::fmt::Write as _;

use thiserror::Error;

use super::validate::{validate_structure, Issue, Severity};
use super::{NodeKind, Params, TaskGraph, Tree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    /// Not well-formed XML.
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: u32, column: u32, message: String },
    /// Well-formed XML that does not describe a task graph.
    #[error("schema error in <{element}>: {message}")]
    Schema { element: String, message: String },
}

impl ParseError {
    pub fn is_syntax(&self) -> bool {
        matches!(self, ParseError::Syntax { .. })
    }

    pub fn is_schema(&self) -> bool {
        matches!(self, ParseError::Schema { .. })
    }

    fn schema(element: &str, message: impl Into<String>) -> Self {
        ParseError::Schema {
            element: element.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot serialize invalid graph: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct SerializeError(pub Vec<Issue>);

pub fn parse_xml(text: &str) -> Result<TaskGraph, ParseError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| {
        let pos = e.pos();
        ParseError::Syntax {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    let tag = root.tag_name().name();
    if tag != "TaskGraph" {
        return Err(ParseError::schema(tag, "root element must be TaskGraph"));
    }
    let mut name = String::new();
    for attr in root.attributes() {
        match attr.name() {
            "name" => name = attr.value().to_string(),
            other => return Err(ParseError::schema("TaskGraph", format!("unknown attribute {other}"))),
        }
    }
    let children = child_elements(root)?;
    if children.len() != 1 {
        return Err(ParseError::schema(
            "TaskGraph",
            format!("TaskGraph requires exactly one child element, found {}", children.len()),
        ));
    }
    let tree = parse_node(children[0])?;
    Ok(TaskGraph::new(name, tree))
}

fn child_elements<'a, 'i>(node: roxmltree::Node<'a, 'i>) -> Result<Vec<roxmltree::Node<'a, 'i>>, ParseError> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return Err(ParseError::schema(node.tag_name().name(), "unexpected text content"));
        }
    }
    Ok(out)
}

fn parse_node(el: roxmltree::Node<'_, '_>) -> Result<Tree, ParseError> {
    let tag = el.tag_name().name();
    let children = child_elements(el)?;
    match tag {
        "Sequence" | "Fallback" => {
            if let Some(attr) = el.attributes().next() {
                return Err(ParseError::schema(tag, format!("unknown attribute {}", attr.name())));
            }
            if children.is_empty() {
                return Err(ParseError::schema(tag, format!("{tag} requires at least one child")));
            }
            let kids = children.into_iter().map(parse_node).collect::<Result<Vec<_>, _>>()?;
            Ok(if tag == "Sequence" {
                Tree::sequence(kids)
            } else {
                Tree::fallback(kids)
            })
        }
        "Retry" => {
            const MSG: &str = "Retry requires num_attempts and one child";
            let mut attempts = None;
            for attr in el.attributes() {
                match attr.name() {
                    "num_attempts" => {
                        let n = attr.value().trim().parse::<u32>().ok().filter(|&n| n >= 1);
                        attempts = Some(n.ok_or_else(|| {
                            ParseError::schema(tag, format!("{MSG}; num_attempts must be a positive integer"))
                        })?);
                    }
                    other => return Err(ParseError::schema(tag, format!("unknown attribute {other}"))),
                }
            }
            match (attempts, children.as_slice()) {
                (Some(n), [child]) => Ok(Tree::retry(n, parse_node(*child)?)),
                _ => Err(ParseError::schema(tag, MSG)),
            }
        }
        "Action" | "Condition" => {
            if !children.is_empty() {
                return Err(ParseError::schema(tag, format!("{tag} cannot have children")));
            }
            let mut name = None;
            let mut params = Params::new();
            for attr in el.attributes() {
                if attr.name() == "name" {
                    name = Some(attr.value().to_string());
                } else if attr.name() == "num_attempts" {
                    return Err(ParseError::schema(tag, "num_attempts is only valid on Retry"));
                } else {
                    params.insert(attr.name(), attr.value());
                }
            }
            let name = name
                .filter(|n| !n.trim().is_empty())
                .ok_or_else(|| ParseError::schema(tag, format!("{tag} requires a name attribute")))?;
            let kind = if tag == "Action" {
                NodeKind::Action { behavior: name, params }
            } else {
                NodeKind::Condition {
                    condition: name,
                    params,
                }
            };
            Ok(Tree {
                kind,
                children: Vec::new(),
            })
        }
        other => Err(ParseError::schema(other, format!("unknown element {other}"))),
    }
}

/// Canonical serialization; byte-identical for equal graphs.
pub fn serialize(graph: &TaskGraph) -> Result<String, SerializeError> {
    let errors: Vec<Issue> = validate_structure(graph)
        .into_iter()
        .filter(|i| i.severity == Severity::Error)
        .collect();
    if !errors.is_empty() {
        return Err(SerializeError(errors));
    }
    let mut out = String::new();
    let _ = writeln!(out, "<TaskGraph name=\"{}\">", escape_attr(&graph.name));
    write_node(graph, graph.root, 1, &mut out);
    out.push_str("</TaskGraph>\n");
    Ok(out)
}

fn write_node(graph: &TaskGraph, id: super::NodeId, depth: usize, out: &mut String) {
    let node = graph.node(id).expect("structure validated");
    let indent = "  ".repeat(depth);
    let element = node.kind.element();
    match &node.kind {
        NodeKind::Action { behavior: name, params }
        | NodeKind::Condition {
            condition: name,
            params,
        } => {
            let _ = write!(out, "{indent}<{element} name=\"{}\"", escape_attr(name));
            for (k, v) in params.iter() {
                let _ = write!(out, " {k}=\"{}\"", escape_attr(v));
            }
            out.push_str("/>\n");
        }
        _ => {
            match node.kind {
                NodeKind::Retry { max_attempts } => {
                    let _ = writeln!(out, "{indent}<{element} num_attempts=\"{max_attempts}\">");
                }
                _ => {
                    let _ = writeln!(out, "{indent}<{element}>");
                }
            }
            for &child in &node.children {
                write_node(graph, child, depth + 1, out);
            }
            let _ = writeln!(out, "{indent}</{element}>");
        }
    }
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            // Attribute-value normalization would turn raw whitespace into spaces.
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out
}

/// Escapes text content (`&`, `<`, `>`) so it can be embedded in XML.
pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            c => out.push(c),
        }
    }
    out
}
