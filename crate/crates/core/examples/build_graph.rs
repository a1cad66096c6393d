//! Builds the code property graph of a C function and prints edge counts
//! per type, the reaching definitions and the DOT export.
//!
//! ```text
//! cargo run --example build_graph -- [file.c]
//! ```

use cpgsum::cpg::{build_cfg, build_cpg, export_dot, reaching_definitions, statement_def_use, EdgeType};
use cpgsum::frontend::parse_function;

const DEFAULT: &str = "void f(int a){ if (a % 2 == 0) { int b = a++; call(b); } }";

fn main() -> cpgsum::Result<()> {
    let code = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT.to_string(),
    };
    let ast = parse_function(&code)?;
    let graph = build_cpg(&ast)?;
    println!("{} nodes", graph.m());
    for t in EdgeType::ALL {
        println!("{:>10?} {}", t, graph.edges_of(t).count());
    }

    let cfg = build_cfg(&ast)?;
    let rd = reaching_definitions(&cfg, &statement_def_use(&ast, &cfg));
    println!("reaching definitions ({} sweeps):", rd.iterations);
    for (def, usage, var) in &rd.triples {
        println!("  {var}: `{}` -> `{}`", ast.text(*def), ast.text(*usage));
    }
    println!();
    print!("{}", export_dot(&graph));
    Ok(())
}
