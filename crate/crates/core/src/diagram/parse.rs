//! Line-oriented diagram text format.
//!
//! ```text
//! # comments run to end of line
//! node V
//! node U latent
//! edge P -> V
//! treatment A
//! outcome Y
//! selection P
//! ```
//!
//! Statements may appear in any order; nodes must be declared exactly once.

use std::fmt;
use std::str::FromStr;

use super::{DiagramBuilder, Role, SelectionDiagram};
use crate::error::{Error, Result};
use crate::model::is_identifier;

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in code.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(Token {
                    text: &code[s..i],
                    column: code[..s].chars().count() + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &code[s..],
            column: code[..s].chars().count() + 1,
        });
    }
    tokens
}

enum Statement<'a> {
    Node { name: Token<'a>, latent: bool },
    Edge { from: Token<'a>, to: Token<'a> },
    Role { role: Role, name: Token<'a> },
}

fn statement(line_no: usize, mut tokens: Vec<Token<'_>>) -> Result<Statement<'_>> {
    let err = |column: usize, msg: String| Error::parse(line_no, column, msg);
    let keyword = &tokens[0];
    let end_column = tokens
        .last()
        .map_or(1, |t| t.column + t.text.chars().count());
    let name_at = |tok: &Token<'_>| -> Result<()> {
        if is_identifier(tok.text) {
            Ok(())
        } else {
            Err(err(tok.column, format!("invalid node name {:?}", tok.text)))
        }
    };
    match keyword.text {
        "node" => {
            let latent = match tokens.len() {
                2 => false,
                3 if tokens[2].text == "latent" => true,
                3 => {
                    return Err(err(
                        tokens[2].column,
                        format!("expected `latent`, found {:?}", tokens[2].text),
                    ))
                }
                1 => return Err(err(end_column, "expected node name".into())),
                _ => return Err(err(tokens[3].column, "unexpected token".into())),
            };
            tokens.truncate(2);
            let name = tokens.pop().unwrap();
            name_at(&name)?;
            Ok(Statement::Node { name, latent })
        }
        "edge" => {
            if tokens.len() < 4 {
                return Err(err(end_column, "expected `edge <name> -> <name>`".into()));
            }
            if tokens.len() > 4 {
                return Err(err(tokens[4].column, "unexpected token".into()));
            }
            if tokens[2].text != "->" {
                return Err(err(
                    tokens[2].column,
                    format!("expected `->`, found {:?}", tokens[2].text),
                ));
            }
            let to = tokens.pop().unwrap();
            tokens.pop();
            let from = tokens.pop().unwrap();
            name_at(&from)?;
            name_at(&to)?;
            Ok(Statement::Edge { from, to })
        }
        kw @ ("treatment" | "outcome" | "selection") => {
            let role = match kw {
                "treatment" => Role::Treatment,
                "outcome" => Role::Outcome,
                _ => Role::Selection,
            };
            match tokens.len() {
                1 => Err(err(end_column, "expected node name".into())),
                2 => {
                    let name = tokens.pop().unwrap();
                    name_at(&name)?;
                    Ok(Statement::Role { role, name })
                }
                _ => Err(err(tokens[2].column, "unexpected token".into())),
            }
        }
        other => Err(err(keyword.column, format!("unknown statement {other:?}"))),
    }
}

/// Parses and validates a selection diagram.
///
/// Syntax problems and references to undeclared nodes are reported as
/// [`Error::Parse`] with a 1-based line and column; structural problems
/// (cycles, roles, selection downstream of treatment) with their own
/// variants.
pub fn parse_diagram(text: &str) -> Result<SelectionDiagram> {
    let mut statements = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens = tokenize(line);
        if !tokens.is_empty() {
            statements.push((i + 1, statement(i + 1, tokens)?));
        }
    }

    let mut builder = DiagramBuilder::new();
    for (line, st) in &statements {
        if let Statement::Node { name, latent } = st {
            if builder.dag.id(name.text).is_some() {
                return Err(Error::parse(
                    *line,
                    name.column,
                    format!("node {} declared twice", name.text),
                ));
            }
            builder.add_node(name.text, *latent)?;
        }
    }
    let known = |line: usize, tok: &Token<'_>, b: &DiagramBuilder| -> Result<()> {
        match b.dag.id(tok.text) {
            Some(_) => Ok(()),
            None => Err(Error::parse(
                line,
                tok.column,
                format!("undeclared node {}", tok.text),
            )),
        }
    };
    for (line, st) in &statements {
        match st {
            Statement::Node { .. } => {}
            Statement::Edge { from, to } => {
                known(*line, from, &builder)?;
                known(*line, to, &builder)?;
                let (a, b) = (
                    builder.dag.require(from.text)?,
                    builder.dag.require(to.text)?,
                );
                if builder.dag.has_edge(a, b) {
                    return Err(Error::parse(
                        *line,
                        from.column,
                        format!("duplicate edge {} -> {}", from.text, to.text),
                    ));
                }
                builder.add_edge(from.text, to.text)?;
            }
            Statement::Role { role, name } => {
                known(*line, name, &builder)?;
                builder.set_role(*role, name.text)?;
            }
        }
    }
    builder.build()
}

impl FromStr for SelectionDiagram {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_diagram(s)
    }
}

/// Canonical form: nodes sorted by name, then edges sorted by
/// `(from, to)` name, then the three roles.
impl fmt::Display for SelectionDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dag = self.dag();
        let mut nodes: Vec<usize> = (0..dag.len()).collect();
        nodes.sort_by_key(|&i| dag.name(i));
        for i in nodes {
            if self.latent_flags()[i] {
                writeln!(f, "node {} latent", dag.name(i))?;
            } else {
                writeln!(f, "node {}", dag.name(i))?;
            }
        }
        let mut edges: Vec<(&str, &str)> = dag
            .edges()
            .map(|(a, b)| (dag.name(a), dag.name(b)))
            .collect();
        edges.sort();
        for (a, b) in edges {
            writeln!(f, "edge {a} -> {b}")?;
        }
        writeln!(f, "treatment {}", self.treatment())?;
        writeln!(f, "outcome {}", self.outcome())?;
        writeln!(f, "selection {}", self.selection())
    }
}
