use pipewright_core::ir::{Node, Port};
use pipewright_gateway::{AgentRole, Gateway};

use crate::{prompts, AgentError};

const PLACEHOLDER_BODY: &str = "    ...";

/// Fills the script template. `body` is indented to the function level if
/// it is not already.
pub fn render_script(task: &str, inputs: &[Port], outputs: &[Port], body: &str) -> String {
    let params: Vec<&str> = inputs.iter().map(|p| p.name.as_str()).collect();
    let describe = |ports: &[Port]| {
        ports
            .iter()
            .map(|p| format!("        {} ({})", p.name, p.modality))
            .collect::<Vec<_>>()
            .join("\n")
    };
    prompts::fill(
        prompts::SCRIPT_TEMPLATE,
        &[
            ("params", &params.join(", ")),
            ("task", task.trim()),
            ("inputs", &describe(inputs)),
            ("outputs", &describe(outputs)),
            ("body", &indent_body(body)),
        ],
    )
}

/// A Script node whose code is the template completed by the model. The
/// code is stored only, never run.
pub fn generate_script(
    id: &str,
    task: &str,
    inputs: Vec<Port>,
    outputs: Vec<Port>,
    gateway: &Gateway,
) -> Result<Node, AgentError> {
    if task.trim().is_empty() {
        return Err(AgentError::EmptyTask);
    }
    let template = render_script(task, &inputs, &outputs, PLACEHOLDER_BODY);
    let reply = gateway.ask(AgentRole::Utility, prompts::SCRIPT_GENERATOR, &template)?;
    let body = extract_body(&reply);
    if body.trim().is_empty() {
        return Err(AgentError::Malformed {
            stage: "script",
            message: "reply holds no code".into(),
        });
    }
    let code = render_script(task, &inputs, &outputs, &body);
    Ok(Node::script(id, code, inputs, outputs))
}

/// The function body from a reply: code fences are dropped, and when the
/// model repeated the whole function only what follows its docstring is
/// kept.
fn extract_body(reply: &str) -> String {
    let lines: Vec<&str> = reply
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect();
    let mut start = 0;
    if let Some(def) = lines
        .iter()
        .position(|l| l.trim_start().starts_with("def "))
    {
        start = def + 1;
        let quotes: Vec<usize> = lines
            .iter()
            .enumerate()
            .skip(start)
            .filter(|(_, l)| l.contains("\"\"\""))
            .map(|(i, _)| i)
            .take(2)
            .collect();
        if let Some(&first) = quotes.first() {
            if first == start {
                // one-line docstring, or the closing quotes further down
                let closes_same_line = lines[first].matches("\"\"\"").count() >= 2;
                start = if closes_same_line {
                    first + 1
                } else {
                    quotes.get(1).map_or(start, |c| c + 1)
                };
            }
        }
    }
    lines[start..].join("\n").trim_matches('\n').to_string()
}

fn indent_body(body: &str) -> String {
    let body = body.trim_end();
    let min = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    if min >= 4 {
        return body.to_string();
    }
    let pad = " ".repeat(4 - min);
    body.lines()
        .map(|l| {
            if l.trim().is_empty() {
                String::new()
            } else {
                format!("{pad}{l}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use pipewright_core::ir::Modality;

    #[test]
    fn body_is_cut_out_of_a_full_function() {
        let reply = "```python\ndef run(text):\n    \"\"\"Count.\n    \"\"\"\n    return len(text.split())\n```";
        assert_eq!(extract_body(reply), "    return len(text.split())");
        assert_eq!(extract_body("return 1"), "return 1");
    }

    #[test]
    fn template_lists_ports() {
        let s = render_script(
            "Count the words.",
            &[Port::new("text", Modality::Text)],
            &[Port::new("count", Modality::Number)],
            "return len(text.split())",
        );
        assert!(s.starts_with("def run(text):\n    \"\"\"Count the words.\n"));
        assert!(s.contains("        text (text)\n"));
        assert!(s.contains("        count (number)\n"));
        assert!(s.ends_with("    \"\"\"\n    return len(text.split())\n"));
    }
}
