//! Prompt templates. Placeholders are `{name}` and are filled by plain
//! string replacement, so JSON braces in templates need no escaping.

use pipewright_core::ir::FunctionCatalog;

pub const CLARIFIER: &str = include_str!("../assets/clarifier.txt");
pub const EXTRACTOR: &str = include_str!("../assets/extractor.txt");
pub const ATTACHMENTS: &str = include_str!("../assets/attachments.txt");
pub const GRAPH_RULES: &str = include_str!("../assets/graph_rules.txt");
pub const BUILDER: &str = include_str!("../assets/builder.txt");
pub const BUILDER_REPAIR: &str = include_str!("../assets/builder_repair.txt");
pub const SEMANTIC_INSPECTOR: &str = include_str!("../assets/semantic_inspector.txt");
pub const MATCHMAKER: &str = include_str!("../assets/matchmaker.txt");
pub const GENERIC_NODE: &str = include_str!("../assets/generic_node.txt");
pub const SCRIPT_GENERATOR: &str = include_str!("../assets/script_generator.txt");
pub const SCRIPT_TEMPLATE: &str = include_str!("../assets/script_template.py");
pub const DEFAULT_REGISTRY: &str = include_str!("../assets/registry.json");

/// Few-shot pipelines shown to the builder.
pub const EXAMPLES: [&str; 3] = [
    include_str!("../assets/examples/subtitles.json"),
    include_str!("../assets/examples/receipt.json"),
    include_str!("../assets/examples/reviews.json"),
];

pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter().fold(template.to_string(), |t, (k, v)| {
        t.replace(&format!("{{{k}}}"), v)
    })
}

/// One line per catalog function.
pub fn render_catalog(catalog: &FunctionCatalog) -> String {
    catalog
        .iter()
        .map(|f| {
            let ports = |ps: &[pipewright_core::ir::ParamSpec]| {
                ps.iter()
                    .map(|p| {
                        let opt = if p.required { "" } else { "?" };
                        format!("{}{opt}:{}", p.name, p.modality)
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let params: Vec<&str> = f.required_params.iter().map(|p| p.name.as_str()).collect();
            let mut line = format!("{}: {} -> {}", f.id, ports(&f.inputs), ports(&f.outputs));
            if !params.is_empty() {
                line.push_str(&format!("; {}", params.join(", ")));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn graph_rules(catalog: &FunctionCatalog) -> String {
    fill(GRAPH_RULES, &[("catalog", &render_catalog(catalog))])
}

pub fn builder_system(catalog: &FunctionCatalog) -> String {
    fill(
        BUILDER,
        &[
            ("rules", &graph_rules(catalog)),
            ("examples", &EXAMPLES.join("\n")),
        ],
    )
}
