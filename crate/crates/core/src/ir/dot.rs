//! DOT interchange form of a [`Pipeline`].
//!
//! ```text
//! digraph pipeline {
//!   "asr" [kind="function", function="speech_recognition", params="language=en"];
//!   "video_in" [kind="input", modality="video"];
//!   "video_in" -> "asr" [ports="data->audio"];
//! }
//! ```
//!
//! Node attributes: `kind` (required), `function`, `params` (URL-encoded
//! `key=value` pairs), `payload`, `modality`, `inputs`/`outputs` as
//! `name:modality,...`, `binding` as `model:<id>` or `unresolved:<reason>`.
//! Edges carry `ports="out->in"`. A graph attribute `metadata` holds the
//! metadata object as JSON. Subgraphs and `node:port` syntax are not
//! supported. Edges may name undeclared nodes; those are kept as dangling
//! edges for the validator, as in the JSON form.

use std::collections::BTreeMap;

use super::json::{default_ports, parse_kind, parse_modality, ParseError};
use super::{Binding, Edge, Endpoint, FunctionCatalog, IrError, Node, Pipeline, Port};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Equals,
    Arrow,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.char_indices().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize, usize)>, ParseError> {
        let mut out = Vec::new();
        while let Some(c) = self.peek() {
            let (line, column) = (self.line, self.column);
            match c {
                c if c.is_whitespace() => {
                    self.bump();
                }
                '#' if column == 1 => self.skip_line(),
                '/' => {
                    self.bump();
                    match self.bump() {
                        Some('/') => self.skip_line(),
                        Some('*') => self.skip_block(line, column)?,
                        _ => return Err(syntax(line, column, "unexpected `/`")),
                    }
                }
                '{' | '}' | '[' | ']' | ';' | ',' | '=' => {
                    self.bump();
                    let tok = match c {
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        ';' => Tok::Semi,
                        ',' => Tok::Comma,
                        _ => Tok::Equals,
                    };
                    out.push((tok, line, column));
                }
                '-' => {
                    self.bump();
                    match self.peek() {
                        Some('>') => {
                            self.bump();
                            out.push((Tok::Arrow, line, column));
                        }
                        Some('-') => {
                            return Err(syntax(line, column, "undirected edge `--` in a digraph"))
                        }
                        _ => {
                            let rest = self.bare_id();
                            out.push((Tok::Id(format!("-{rest}")), line, column));
                        }
                    }
                }
                '"' => {
                    self.bump();
                    out.push((Tok::Id(self.quoted(line, column)?), line, column));
                }
                c if is_id_char(c) => out.push((Tok::Id(self.bare_id()), line, column)),
                other => {
                    return Err(syntax(
                        line,
                        column,
                        format!("unexpected character `{other}`"),
                    ))
                }
            }
        }
        Ok(out)
    }

    fn skip_line(&mut self) {
        while let Some(c) = self.bump() {
            if c == '\n' {
                break;
            }
        }
    }

    fn skip_block(&mut self, line: usize, column: usize) -> Result<(), ParseError> {
        let mut star = false;
        while let Some(c) = self.bump() {
            if star && c == '/' {
                return Ok(());
            }
            star = c == '*';
        }
        Err(syntax(line, column, "unterminated comment"))
    }

    fn bare_id(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !is_id_char(c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn quoted(&mut self, line: usize, column: usize) -> Result<String, ParseError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(syntax(line, column, "unterminated string")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('"') => s.push('"'),
                    Some('\\') => s.push('\\'),
                    Some('n') => s.push('\n'),
                    Some('\n') => {}
                    Some(other) => {
                        s.push('\\');
                        s.push(other);
                    }
                    None => return Err(syntax(line, column, "unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
    }
}

fn is_id_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.'
}

type Attrs = Vec<(String, String, usize)>;

struct Parser {
    toks: Vec<(Tok, usize, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or(self.toks.last())
            .map(|t| (t.1, t.2))
            .unwrap_or((1, 1))
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, column) = self.here();
        syntax(line, column, message)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn id(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Id(_)) => match self.next() {
                Some(Tok::Id(s)) => Ok(s),
                _ => unreachable!(),
            },
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn attr_list(&mut self) -> Result<Attrs, ParseError> {
        let mut attrs = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            loop {
                match self.peek() {
                    Some(Tok::RBracket) => {
                        self.pos += 1;
                        break;
                    }
                    Some(Tok::Comma) | Some(Tok::Semi) => self.pos += 1,
                    _ => {
                        let line = self.here().0;
                        let key = self.id("attribute name")?;
                        self.expect(Tok::Equals, "`=`")?;
                        let value = self.id("attribute value")?;
                        attrs.push((key, value, line));
                    }
                }
            }
        }
        Ok(attrs)
    }
}

struct DeclaredNode {
    id: String,
    line: usize,
    attrs: BTreeMap<String, String>,
}

struct DeclaredEdge {
    from: String,
    to: String,
    line: usize,
    attrs: BTreeMap<String, String>,
}

pub fn parse_pipeline_dot(text: &str, catalog: &FunctionCatalog) -> Result<Pipeline, ParseError> {
    let toks = Lexer::new(text).tokens()?;
    let mut p = Parser { toks, pos: 0 };
    if matches!(p.peek(), Some(Tok::Id(s)) if s.eq_ignore_ascii_case("strict")) {
        p.pos += 1;
    }
    match p.next() {
        Some(Tok::Id(s)) if s.eq_ignore_ascii_case("digraph") => {}
        _ => {
            p.pos = p.pos.saturating_sub(1);
            return Err(p.err("expected `digraph`"));
        }
    }
    if matches!(p.peek(), Some(Tok::Id(_))) {
        p.pos += 1;
    }
    p.expect(Tok::LBrace, "`{`")?;

    let mut graph_attrs: BTreeMap<String, String> = BTreeMap::new();
    let mut node_defaults: BTreeMap<String, String> = BTreeMap::new();
    let mut edge_defaults: BTreeMap<String, String> = BTreeMap::new();
    let mut nodes: Vec<DeclaredNode> = Vec::new();
    let mut node_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut edges: Vec<DeclaredEdge> = Vec::new();

    loop {
        match p.peek() {
            None => return Err(p.err("expected `}`")),
            Some(Tok::RBrace) => {
                p.pos += 1;
                break;
            }
            Some(Tok::Semi) => p.pos += 1,
            Some(Tok::LBrace) => return Err(p.err("subgraphs are not supported")),
            Some(Tok::Id(_)) => {
                let line = p.here().0;
                let first = p.id("identifier")?;
                let keyword = first.to_ascii_lowercase();
                if matches!(keyword.as_str(), "graph" | "node" | "edge")
                    && p.peek() == Some(&Tok::LBracket)
                {
                    let attrs = p.attr_list()?;
                    let target = match keyword.as_str() {
                        "graph" => &mut graph_attrs,
                        "node" => &mut node_defaults,
                        _ => &mut edge_defaults,
                    };
                    target.extend(attrs.into_iter().map(|(k, v, _)| (k, v)));
                } else if keyword == "subgraph" {
                    return Err(p.err("subgraphs are not supported"));
                } else if p.peek() == Some(&Tok::Equals) {
                    p.pos += 1;
                    let value = p.id("attribute value")?;
                    graph_attrs.insert(first, value);
                } else if p.peek() == Some(&Tok::Arrow) {
                    p.pos += 1;
                    let to = p.id("edge target")?;
                    if p.peek() == Some(&Tok::Arrow) {
                        return Err(
                            p.err("edge chains are not supported; write one edge per statement")
                        );
                    }
                    let mut attrs = edge_defaults.clone();
                    attrs.extend(p.attr_list()?.into_iter().map(|(k, v, _)| (k, v)));
                    edges.push(DeclaredEdge {
                        from: first,
                        to,
                        line,
                        attrs,
                    });
                } else {
                    let attrs = p.attr_list()?;
                    let slot = match node_index.get(&first) {
                        Some(&i) => i,
                        None => {
                            node_index.insert(first.clone(), nodes.len());
                            nodes.push(DeclaredNode {
                                id: first,
                                line,
                                attrs: node_defaults.clone(),
                            });
                            nodes.len() - 1
                        }
                    };
                    nodes[slot]
                        .attrs
                        .extend(attrs.into_iter().map(|(k, v, _)| (k, v)));
                }
            }
            Some(_) => return Err(p.err("expected a statement")),
        }
    }
    if p.pos < p.toks.len() {
        return Err(p.err("trailing input after graph"));
    }

    let mut pipeline = Pipeline::new();
    if let Some(meta) = graph_attrs.get("metadata") {
        pipeline.metadata = serde_json::from_str(meta).map_err(|e| ParseError::Schema {
            location: "graph.metadata".into(),
            message: e.to_string(),
        })?;
    }
    for decl in nodes {
        let location = format!("line {}: node `{}`", decl.line, decl.id);
        let node = node_from_attrs(decl, &location, catalog)?;
        pipeline.add_node(node).map_err(|e| match e {
            IrError::DuplicateNode(id) => ParseError::DuplicateNode {
                location: location.clone(),
                id,
            },
            other => ParseError::Schema {
                location: location.clone(),
                message: other.to_string(),
            },
        })?;
    }
    for decl in edges {
        let location = format!("line {}: edge `{}` -> `{}`", decl.line, decl.from, decl.to);
        let ports = decl
            .attrs
            .get("ports")
            .ok_or_else(|| ParseError::MissingAttribute {
                location: location.clone(),
                attribute: "ports".into(),
            })?;
        let (out, inp) = ports.split_once("->").ok_or_else(|| ParseError::Schema {
            location: location.clone(),
            message: format!("`ports` must be `out->in`, got `{ports}`"),
        })?;
        pipeline.edges.insert(Edge::new(
            Endpoint::new(decl.from, out.trim()),
            Endpoint::new(decl.to, inp.trim()),
        ));
    }
    pipeline.check_acyclic().map_err(|e| match e {
        IrError::Cycle(n) => ParseError::Cycle(n),
        other => ParseError::Schema {
            location: "graph".into(),
            message: other.to_string(),
        },
    })?;
    Ok(pipeline)
}

fn ports_attr(value: &str, location: &str) -> Result<Vec<Port>, ParseError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, modality) = item.split_once(':').ok_or_else(|| ParseError::Schema {
                location: location.to_string(),
                message: format!("port must be `name:modality`, got `{item}`"),
            })?;
            Ok(Port::new(
                name.trim(),
                parse_modality(modality.trim(), location)?,
            ))
        })
        .collect()
}

fn node_from_attrs(
    mut decl: DeclaredNode,
    location: &str,
    catalog: &FunctionCatalog,
) -> Result<Node, ParseError> {
    let kind = decl
        .attrs
        .remove("kind")
        .ok_or_else(|| ParseError::MissingAttribute {
            location: location.to_string(),
            attribute: "kind".into(),
        })?;
    let kind = parse_kind(&kind, location)?;
    let function = decl.attrs.remove("function");
    let modality = decl
        .attrs
        .remove("modality")
        .map(|m| parse_modality(&m, location))
        .transpose()?;
    let (default_in, default_out) = default_ports(kind, function.as_deref(), modality, catalog);
    let inputs = match decl.attrs.remove("inputs") {
        Some(v) => ports_attr(&v, location)?,
        None => default_in,
    };
    let outputs = match decl.attrs.remove("outputs") {
        Some(v) => ports_attr(&v, location)?,
        None => default_out,
    };
    let params = decl
        .attrs
        .remove("params")
        .map(|v| {
            form_urlencoded::parse(v.as_bytes())
                .map(|(k, v)| (k.into_owned(), v.into_owned()))
                .collect()
        })
        .unwrap_or_default();
    let binding = decl
        .attrs
        .remove("binding")
        .map(|b| match b.split_once(':') {
            Some(("model", id)) => Ok(Binding::Model(id.to_string())),
            Some(("unresolved", why)) => Ok(Binding::Unresolved(why.to_string())),
            _ => Err(ParseError::Schema {
                location: location.to_string(),
                message: format!(
                    "`binding` must be `model:<id>` or `unresolved:<reason>`, got `{b}`"
                ),
            }),
        })
        .transpose()?;
    Ok(Node {
        id: decl.id,
        kind,
        function,
        params,
        inputs,
        outputs,
        payload: decl.attrs.remove("payload"),
        binding,
    })
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn render_ports(ports: &[Port]) -> String {
    ports
        .iter()
        .map(|p| format!("{}:{}", p.name, p.modality))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn serialize_pipeline_dot(p: &Pipeline) -> String {
    let mut out = String::from("digraph pipeline {\n");
    if !p.metadata.is_empty() {
        let meta = serde_json::to_string(&p.metadata).expect("metadata serializes");
        out.push_str(&format!("  graph [metadata={}];\n", quote(&meta)));
    }
    for n in p.nodes.values() {
        let mut attrs = vec![("kind", n.kind.as_str().to_string())];
        if let Some(f) = &n.function {
            attrs.push(("function", f.clone()));
        }
        if !n.params.is_empty() {
            let encoded = form_urlencoded::Serializer::new(String::new())
                .extend_pairs(n.params.iter())
                .finish();
            attrs.push(("params", encoded));
        }
        if let Some(payload) = &n.payload {
            attrs.push(("payload", payload.clone()));
        }
        attrs.push(("inputs", render_ports(&n.inputs)));
        attrs.push(("outputs", render_ports(&n.outputs)));
        match &n.binding {
            Some(Binding::Model(m)) => attrs.push(("binding", format!("model:{m}"))),
            Some(Binding::Unresolved(r)) => attrs.push(("binding", format!("unresolved:{r}"))),
            None => {}
        }
        let rendered: Vec<String> = attrs
            .into_iter()
            .map(|(k, v)| format!("{k}={}", quote(&v)))
            .collect();
        out.push_str(&format!("  {} [{}];\n", quote(&n.id), rendered.join(", ")));
    }
    for e in &p.edges {
        out.push_str(&format!(
            "  {} -> {} [ports={}];\n",
            quote(&e.source.node),
            quote(&e.target.node),
            quote(&format!("{}->{}", e.source.port, e.target.port))
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Modality, NodeKind};

    fn catalog() -> &'static FunctionCatalog {
        FunctionCatalog::builtin()
    }

    #[test]
    fn empty_digraph() {
        let p = parse_pipeline_dot("digraph {}", catalog()).unwrap();
        assert!(p.nodes.is_empty() && p.edges.is_empty());
        assert_eq!(serialize_pipeline_dot(&p), "digraph pipeline {\n}\n");
    }

    #[test]
    fn missing_kind_is_reported() {
        let err = parse_pipeline_dot("digraph {\n  a [function=\"x\"];\n}", catalog()).unwrap_err();
        assert!(
            matches!(&err, ParseError::MissingAttribute { attribute, location }
                if attribute == "kind" && location.starts_with("line 2")),
            "{err:?}"
        );
    }

    #[test]
    fn missing_ports_on_edge() {
        let doc =
            "digraph { a [kind=input, modality=text]; b [kind=output, modality=text]; a -> b; }";
        assert!(matches!(
            parse_pipeline_dot(doc, catalog()),
            Err(ParseError::MissingAttribute { attribute, .. }) if attribute == "ports"
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_pipeline_dot("digraph {\n  a [kind=\"input\"\n", catalog()).unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }), "{err:?}");
        let err = parse_pipeline_dot("graph { }", catalog()).unwrap_err();
        assert!(
            matches!(
                err,
                ParseError::Syntax {
                    line: 1,
                    column: 1,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn comments_defaults_and_params() {
        let doc = r#"
            // translation
            digraph g {
              /* nodes */
              node [kind="function"];
              mt [function=machine_translation, params="source_language=en&target_language=fr"];
              src [kind=input, modality=text]
              dst [kind=output, modality=text]
              src -> mt [ports="data->text"]
              mt -> dst [ports="text->data"]
            }"#;
        let p = parse_pipeline_dot(doc, catalog()).unwrap();
        assert_eq!(p.nodes["mt"].kind, NodeKind::Function);
        assert_eq!(p.nodes["mt"].params["target_language"], "fr");
        assert_eq!(
            p.nodes["src"].outputs,
            vec![Port::new("data", Modality::Text)]
        );
        assert_eq!(p.edges.len(), 2);
    }

    #[test]
    fn quoting_survives_round_trip() {
        let mut p = Pipeline::new();
        p.add_node(Node::generic_llm("llm", "Say \"hi\"\\ then\nstop"))
            .unwrap();
        p.add_node(Node::input("in", Modality::Text).with_param("name", "a=b&c"))
            .unwrap();
        p.metadata
            .insert("origin".into(), serde_json::json!("test"));
        p.connect(("in", "data"), ("llm", "text"));
        let again = parse_pipeline_dot(&serialize_pipeline_dot(&p), catalog()).unwrap();
        assert_eq!(again, p);
    }

    #[test]
    fn dangling_edge_kept() {
        let doc = r#"digraph { a [kind=input, modality=text]; a -> ghost [ports="data->x"]; }"#;
        let p = parse_pipeline_dot(doc, catalog()).unwrap();
        assert_eq!(p.nodes.len(), 1);
        assert_eq!(p.edges.len(), 1);
    }
}
