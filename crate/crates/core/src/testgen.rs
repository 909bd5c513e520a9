//! Seeded random generation of UDFs, flows, and data for stress testing.
//!
//! Generated UDFs are assembled from small effect templates (filters, field
//! updates, appended attributes, aggregation loops) whose control flow only
//! jumps forward or follows a `hasNext` loop, so every generated program
//! terminates. Generated flows are emitted as regular flow documents plus
//! their UDF and CSV files, so they exercise the same loading path as
//! hand-written ones; when a flow declares a foreign key, the generated data
//! honours it (referenced keys are unique, referencing values are drawn from
//! them).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::FlowError;
use crate::flow::{parse_flow, Flow};

/// A generated UDF, plus the facts a flow document needs to declare it.
#[derive(Clone, Debug)]
pub struct GeneratedUdf {
    pub source: String,
    pub in_arities: Vec<usize>,
    /// Whether the UDF consumes record lists.
    pub kat: bool,
    /// How many attribute positions beyond the inputs it may set.
    pub creates: usize,
}

const CMPS: [&str; 6] = ["==", "!=", "<", "<=", ">", ">="];
const OPS: [&str; 3] = ["+", "-", "*"];

/// A UDF of random shape: one or two inputs, record- or list-valued, total
/// arity at most four (so behavioural oracles stay affordable).
pub fn random_udf(rng: &mut impl Rng) -> GeneratedUdf {
    let shape = rng.gen_range(0..4);
    let a = rng.gen_range(1..=2);
    let b = rng.gen_range(1..=2);
    match shape {
        0 => record_udf(rng, &[a + b - 1]),
        1 => record_udf(rng, &[a, b]),
        2 => list_udf(rng, a + b - 1),
        _ => cogroup_udf(rng, [a, b]),
    }
}

/// Lays out labels `1..`, resolving `@END` to the final `return` and `@+n`
/// to the label `n` lines below the jump.
fn render(header: &str, body: &[String]) -> String {
    let total = body.len() + 2;
    let mut out = format!("1: {header}\n");
    for (i, line) in body.iter().enumerate() {
        let label = i + 2;
        let mut text = line.replace("@END", &total.to_string());
        while let Some(at) = text.find("@+") {
            let digits: String =
                text[at + 2..].chars().take_while(char::is_ascii_digit).collect();
            let skip: usize = digits.parse().expect("relative jump needs a distance");
            text.replace_range(at..at + 2 + digits.len(), &(label + skip).to_string());
        }
        out.push_str(&format!("{label}: {text}\n"));
    }
    out.push_str(&format!("{total}: return\n"));
    out
}

/// A record-at-a-time UDF over one or two inputs: optional filters, then an
/// output record (copied, concatenated, or built fresh), field updates,
/// appended attributes, and one or two emits. Upstream operators may leave
/// positions unset (a rebuilt record, the far side of a one-sided cogroup),
/// so every read that feeds a comparison or arithmetic is null-guarded.
pub fn record_udf(rng: &mut impl Rng, arities: &[usize]) -> GeneratedUdf {
    let total: usize = arities.iter().sum();
    let pick_field = |rng: &mut dyn rand::RngCore| {
        let input = rng.gen_range(0..arities.len());
        (input, rng.gen_range(0..arities[input]))
    };
    let mut body = Vec::new();

    for k in 0..rng.gen_range(0..=2u32) {
        let (i, p) = pick_field(rng);
        let cmp = CMPS.choose(rng).unwrap();
        let c = rng.gen_range(0..=2);
        body.push(format!("$f{k}:=getField($p{i},{p})"));
        body.push(format!("if($f{k}==null) goto @END"));
        body.push(format!("if($f{k}{cmp}{c}) goto @END"));
    }

    let fresh = rng.gen_bool(0.2);
    if fresh {
        body.push("$or:=create()".into());
        // Carry a few input fields across, or the output is all holes.
        for (k, _) in (0..total).enumerate().take(rng.gen_range(1..=total)) {
            let (i, p) = pick_field(rng);
            body.push(format!("$c{k}:=getField($p{i},{p})"));
            body.push(format!("setField($or,{},$c{k})", rng.gen_range(0..total)));
        }
    } else if arities.len() == 2 {
        body.push("$or:=concat($p0,$p1)".into());
    } else {
        body.push("$or:=copy($p0)".into());
    }

    let creates = rng.gen_range(0..=1usize);
    for k in 0..rng.gen_range(0..=2u32) {
        let (i, p) = pick_field(rng);
        let op = OPS.choose(rng).unwrap();
        let c = rng.gen_range(0..=3);
        let target = rng.gen_range(0..total + creates);
        body.push(format!("$u{k}:=getField($p{i},{p})"));
        body.push(format!("if($u{k}==null) goto @+3"));
        body.push(format!("$u{k}:=$u{k}{op}{c}"));
        body.push(format!("setField($or,{target},$u{k})"));
    }
    if creates > 0 {
        let (i, p) = pick_field(rng);
        body.push(format!("$a0:=getField($p{i},{p})"));
        body.push(format!("setField($or,{total},$a0)"));
    }

    body.push("emit($or)".into());
    if rng.gen_bool(0.15) {
        body.push("emit($or)".into());
    }

    let params: Vec<String> =
        (0..arities.len()).map(|i| format!("InputRecord $p{i}")).collect();
    let header = format!("f({})", params.join(", "));
    GeneratedUdf {
        source: render(&header, &body),
        in_arities: arities.to_vec(),
        kat: false,
        creates,
    }
}

/// A key-at-a-time UDF over one input, drawn from a few loop shapes:
/// pass-through, aggregate-and-annotate, first-record-only, or a groupwise
/// filter on an aggregate.
pub fn list_udf(rng: &mut impl Rng, arity: usize) -> GeneratedUdf {
    let p = rng.gen_range(0..arity);
    let op = *["+", "-"].choose(rng).unwrap();
    let cmp = CMPS.choose(rng).unwrap();
    let c = rng.gen_range(0..=2);
    let (source, creates) = match rng.gen_range(0..4) {
        0 => (
            "\
1: g(RecordList $rl)
2: if(!hasNext($rl)) goto 6
3: $r:=next($rl)
4: emit($r)
5: goto 2
6: return
"
            .to_string(),
            0,
        ),
        1 => {
            let created = rng.gen_bool(0.6);
            let target = if created { arity } else { rng.gen_range(0..arity) };
            (
                format!(
                    "\
1: g(RecordList $rl)
2: $acc:=0
3: if(!hasNext($rl)) goto 9
4: $r:=next($rl)
5: $v:=getField($r,{p})
6: if($v==null) goto 3
7: $acc:=$acc{op}$v
8: goto 3
9: reset($rl)
10: if(!hasNext($rl)) goto 16
11: $r:=next($rl)
12: $or:=copy($r)
13: setField($or,{target},$acc)
14: emit($or)
15: goto 10
16: return
"
                ),
                usize::from(created),
            )
        }
        2 => (
            "\
1: g(RecordList $rl)
2: if(!hasNext($rl)) goto 7
3: $r:=next($rl)
4: $or:=copy($r)
5: emit($or)
6: goto 7
7: return
"
            .to_string(),
            0,
        ),
        _ => (
            format!(
                "\
1: g(RecordList $rl)
2: $acc:=0
3: if(!hasNext($rl)) goto 9
4: $r:=next($rl)
5: $v:=getField($r,{p})
6: if($v==null) goto 3
7: $acc:=$acc+$v
8: goto 3
9: reset($rl)
10: if($acc{cmp}{c}) goto 15
11: if(!hasNext($rl)) goto 15
12: $r:=next($rl)
13: emit($r)
14: goto 11
15: return
"
            ),
            0,
        ),
    };
    GeneratedUdf { source, in_arities: vec![arity], kat: true, creates }
}

/// A key-at-a-time UDF over two inputs: union of both sides, left side
/// annotated with the right side's count, or left side alone.
pub fn cogroup_udf(rng: &mut impl Rng, arities: [usize; 2]) -> GeneratedUdf {
    let total = arities[0] + arities[1];
    let (source, creates) = match rng.gen_range(0..3) {
        0 => (
            "\
1: cg(RecordList $l, RecordList $r)
2: if(!hasNext($l)) goto 6
3: $x:=next($l)
4: emit($x)
5: goto 2
6: if(!hasNext($r)) goto 10
7: $y:=next($r)
8: emit($y)
9: goto 6
10: return
"
            .to_string(),
            0,
        ),
        1 => (
            format!(
                "\
1: cg(RecordList $l, RecordList $r)
2: $n:=0
3: if(!hasNext($r)) goto 7
4: $y:=next($r)
5: $n:=$n+1
6: goto 3
7: if(!hasNext($l)) goto 13
8: $x:=next($l)
9: $or:=copy($x)
10: setField($or,{total},$n)
11: emit($or)
12: goto 7
13: return
"
            ),
            1,
        ),
        _ => (
            "\
1: cg(RecordList $l, RecordList $r)
2: if(!hasNext($l)) goto 6
3: $x:=next($l)
4: emit($x)
5: goto 2
6: return
"
            .to_string(),
            0,
        ),
    };
    GeneratedUdf { source, in_arities: arities.to_vec(), kat: true, creates }
}

/// A generated flow: its document text plus every file it references
/// (UDF sources and CSV data), ready to drop into a directory.
#[derive(Clone, Debug)]
pub struct GeneratedFlow {
    pub doc: String,
    pub files: Vec<(String, String)>,
}

/// Writes the flow's files into `dir` and loads the document from there.
pub fn materialize(gen: &GeneratedFlow, dir: &Path) -> Result<Flow, FlowError> {
    for (name, contents) in &gen.files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| FlowError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    parse_flow(&gen.doc, dir, "generated")
}

struct SourceSpec {
    id: String,
    attrs: Vec<String>,
    rows: Vec<Vec<i64>>,
    unique_first: bool,
    singleton: bool,
    fk: Option<(String, String, String)>, // (from attr, target source, to attr)
}

struct Root {
    id: String,
    attrs: Vec<String>,
}

/// A random tree-shaped flow with at most `max_ops` operators and at most
/// `max_rows` source records in total. Every referenced UDF and CSV file is
/// included. The same `rng` state always yields the same flow.
pub fn random_flow(rng: &mut impl Rng, max_ops: usize, max_rows: usize) -> GeneratedFlow {
    assert!(max_ops >= 1, "a flow needs at least one operator");
    let n_sources = 1 + rng.gen_range(0..=2.min(max_ops - 1).min(2));
    let per_source = (max_rows / n_sources).clamp(1, 12);

    // Sometimes pair source 0 (facts) with source 1 (a dimension with a
    // unique first attribute) through a declared foreign key.
    let fk_pattern = n_sources >= 2 && rng.gen_bool(0.5);

    let mut sources = Vec::new();
    for s in 0..n_sources {
        let arity = rng.gen_range(1..=3);
        let attrs: Vec<String> = (0..arity).map(|a| format!("S{s}A{a}")).collect();
        let n_rows = rng.gen_range(1..=per_source);
        let mut rows = Vec::with_capacity(n_rows);
        for r in 0..n_rows as i64 {
            let mut row: Vec<i64> = (0..arity).map(|_| rng.gen_range(-3..=3)).collect();
            if fk_pattern && s == 1 {
                row[0] = r; // distinct: the unique key
            }
            rows.push(row);
        }
        sources.push(SourceSpec {
            id: format!("s{s}"),
            attrs,
            rows,
            unique_first: fk_pattern && s == 1,
            singleton: false,
            fk: None,
        });
    }
    if fk_pattern {
        let dim_key_count = sources[1].rows.len() as i64;
        for row in &mut sources[0].rows {
            row[0] = rng.gen_range(0..dim_key_count);
        }
        sources[0].fk = Some(("S0A0".into(), "s1".into(), "S1A0".into()));
    }
    for s in &mut sources {
        s.singleton = s.rows.len() == 1 && rng.gen_bool(0.5);
    }

    let mut roots: Vec<Root> = sources
        .iter()
        .map(|s| Root { id: s.id.clone(), attrs: s.attrs.clone() })
        .collect();
    let target_ops = rng.gen_range((n_sources - 1).max(1)..=max_ops);

    let mut op_blocks = Vec::new();
    let mut files: Vec<(String, String)> = Vec::new();
    for i in 0..target_ops {
        let joins_left = roots.len() - 1;
        let must_join = joins_left == target_ops - i;
        let op_id = format!("op{i}");
        let udf_file = format!("op{i}.tac");
        let block;
        if must_join || (roots.len() > 1 && rng.gen_bool(0.5)) {
            let ri = rng.gen_range(0..roots.len());
            let left = roots.remove(ri);
            let rj = rng.gen_range(0..roots.len());
            let right = roots.remove(rj);
            let kind = *["match", "cross", "cogroup"].choose(rng).unwrap();
            let udf = match kind {
                "cogroup" => cogroup_udf(rng, [left.attrs.len(), right.attrs.len()]),
                _ => record_udf(rng, &[left.attrs.len(), right.attrs.len()]),
            };
            let adds: Vec<String> = (0..udf.creates).map(|k| format!("O{i}C{k}")).collect();
            let keys = if kind == "cross" {
                String::new()
            } else {
                let (kl, kr) = join_keys(rng, &sources, &left, &right);
                format!("key_left = [\"{kl}\"]\nkey_right = [\"{kr}\"]\n")
            };
            block = format!(
                "[[operators]]\nid = \"{op_id}\"\nkind = \"{kind}\"\ninputs = [\"{}\", \"{}\"]\n{keys}udf = \"{udf_file}\"\n{}",
                left.id,
                right.id,
                adds_line(&adds),
            );
            files.push((udf_file, udf.source));
            let mut attrs = left.attrs;
            attrs.extend(right.attrs);
            attrs.extend(adds);
            roots.push(Root { id: op_id, attrs });
        } else {
            let ri = rng.gen_range(0..roots.len());
            let input = roots.remove(ri);
            let reduce = rng.gen_bool(0.5);
            let (kind, keys, udf) = if reduce {
                let n_keys = rng.gen_range(1..=2.min(input.attrs.len()));
                let key_attrs: Vec<&String> =
                    input.attrs.choose_multiple(rng, n_keys).collect();
                let keys: Vec<String> = key_attrs.iter().map(|k| format!("\"{k}\"")).collect();
                (
                    "reduce",
                    format!("key = [{}]\n", keys.join(", ")),
                    list_udf(rng, input.attrs.len()),
                )
            } else {
                ("map", String::new(), record_udf(rng, &[input.attrs.len()]))
            };
            let adds: Vec<String> = (0..udf.creates).map(|k| format!("O{i}C{k}")).collect();
            block = format!(
                "[[operators]]\nid = \"{op_id}\"\nkind = \"{kind}\"\ninputs = [\"{}\"]\n{keys}udf = \"{udf_file}\"\n{}",
                input.id,
                adds_line(&adds),
            );
            files.push((udf_file, udf.source));
            let mut attrs = input.attrs;
            attrs.extend(adds);
            roots.push(Root { id: op_id, attrs });
        }
        op_blocks.push(block);
    }
    assert_eq!(roots.len(), 1, "operators reduce the forest to one tree");

    let mut doc = String::new();
    for s in &sources {
        let attrs: Vec<String> = s.attrs.iter().map(|a| format!("[\"{a}\", \"int\"]")).collect();
        doc.push_str(&format!(
            "[[sources]]\nid = \"{}\"\npath = \"{}.csv\"\nattributes = [{}]\n",
            s.id,
            s.id,
            attrs.join(", ")
        ));
        if s.unique_first {
            doc.push_str(&format!("unique = [[\"{}\"]]\n", s.attrs[0]));
        }
        if s.singleton {
            doc.push_str("singleton = true\n");
        }
        if let Some((from, to_source, to)) = &s.fk {
            doc.push_str(&format!(
                "foreign_keys = [{{ from = [\"{from}\"], to_source = \"{to_source}\", to = [\"{to}\"] }}]\n"
            ));
        }
        doc.push('\n');
        let csv: String = s
            .rows
            .iter()
            .map(|row| {
                row.iter().map(i64::to_string).collect::<Vec<_>>().join(",") + "\n"
            })
            .collect();
        files.push((format!("{}.csv", s.id), csv));
    }
    for block in &op_blocks {
        doc.push_str(block);
        doc.push('\n');
    }
    doc.push_str(&format!("[sink]\ninput = \"{}\"\n", roots[0].id));
    GeneratedFlow { doc, files }
}

fn adds_line(adds: &[String]) -> String {
    if adds.is_empty() {
        String::new()
    } else {
        let quoted: Vec<String> = adds.iter().map(|a| format!("\"{a}\"")).collect();
        format!("adds = [{}]\n", quoted.join(", "))
    }
}

/// Join keys for a match or cogroup: prefer a declared foreign-key pair when
/// one spans the two subtrees, otherwise any attribute from each side.
fn join_keys(
    rng: &mut impl Rng,
    sources: &[SourceSpec],
    left: &Root,
    right: &Root,
) -> (String, String) {
    for s in sources {
        if let Some((from, _, to)) = &s.fk {
            if rng.gen_bool(0.8) {
                if left.attrs.contains(from) && right.attrs.contains(to) {
                    return (from.clone(), to.clone());
                }
                if left.attrs.contains(to) && right.attrs.contains(from) {
                    return (to.clone(), from.clone());
                }
            }
        }
    }
    (
        left.attrs.choose(rng).unwrap().clone(),
        right.attrs.choose(rng).unwrap().clone(),
    )
}
