//! Loads a DAG file, turns its conditional inputs into sources and prints the
//! generation order with each node's parents and attention set.
//!
//! cargo run --release --example dag_inspect [dag.json schema.json]

use dagsynth::dag::{build_graph, validate, DagFile, NodeRole};
use dagsynth::schema::TableSchema;

fn main() -> dagsynth::Result<()> {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let mut args = std::env::args().skip(1);
    let dag_path = args.next().unwrap_or_else(|| format!("{data}/lpmc_dag.json"));
    let schema_path = args.next().unwrap_or_else(|| format!("{data}/lpmc_schema.json"));

    let file = DagFile::from_json_file(&dag_path)?;
    let schema = TableSchema::from_json_file(&schema_path)?;
    let dag = file.dag();
    for diagnostic in validate(&dag, &schema) {
        println!("diagnostic: {diagnostic:?}");
    }
    let graph = build_graph(&dag, &file.conditional_inputs, &schema)?;
    let names: Vec<&str> = graph.order().collect();
    for (i, node) in graph.nodes.iter().enumerate() {
        let role = match node.role {
            NodeRole::ConditionalInput => "input",
            NodeRole::Generated => "generated",
        };
        let list = |ix: &[usize]| ix.iter().map(|&j| names[j]).collect::<Vec<_>>().join(", ");
        println!(
            "{i:>2} {:<16} {role:<9} parents [{}] attends to [{}]",
            node.name,
            list(&node.predecessors),
            list(&node.attention)
        );
    }
    Ok(())
}
