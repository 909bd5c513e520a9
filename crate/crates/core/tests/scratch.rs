use flowopt_core::enumerate::swap_traces;
use flowopt_core::flow::{analyze_flow, Mode};
use flowopt_core::reorder::swap_options;
use flowopt_core::testgen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn seed_63() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let generated = testgen::random_flow(&mut rng, 5, 64);
    let dir = tempfile::tempdir().unwrap();
    let flow = testgen::materialize(&generated, dir.path()).unwrap();
    println!("=== doc ===\n{}", generated.doc);
    for (name, text) in &generated.files {
        println!("=== {name} ===\n{text}");
    }
    let props = analyze_flow(&flow, Mode::Sca).unwrap().props;
    for (op, p) in &props {
        println!(
            "{op}: read={:?} raw={:?} write={:?} emits {}..{:?}",
            flow.attr_names(&p.read),
            flow.attr_names(&p.raw_read),
            flow.attr_names(&p.write),
            p.emit_lower,
            p.emit_upper
        );
    }
    println!("root = {}", flow.root);
    for opt in swap_options(&flow, &props, &flow.root) {
        println!(
            "option {} <-> {}: {} allowed={}",
            opt.parent,
            opt.child,
            opt.swapped,
            opt.verdict.allowed()
        );
        for c in &opt.verdict.conditions {
            println!("   [{}] {} — {}", if c.holds { "ok" } else { "NO" }, c.name, c.detail);
        }
    }
    for (plan, trace) in swap_traces(&flow, &props, &flow.root, None).unwrap() {
        println!("closure plan {plan}: via {trace:?}");
    }
}
