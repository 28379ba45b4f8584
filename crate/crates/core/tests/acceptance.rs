//! Acceptance criteria AC-1..AC-18, one PASS/FAIL line each.

use manifold_core::verify;

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with("AC-") || a.starts_with("ac-"))
        .collect();
    let results = verify::run(&filter);
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {} failed", results.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
