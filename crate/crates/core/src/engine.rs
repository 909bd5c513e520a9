//! Desk-scale plan execution.
//!
//! The engine runs a flow's plan — or any reordered alternative over the same
//! operators — against CSV-backed sources, producing the sink data set plus a
//! cost figure for ranking. Intermediate records are fixed-width carriers
//! over the flow's global attribute space: a slot holds the attribute's value
//! once some operator has produced it and [`Value::Absent`] before then.
//! Because every operator addresses attributes through its own position maps,
//! the same operator definition runs unmodified at any position in a plan; in
//! particular a grouping operator that moves below a join simply sees the
//! not-yet-joined slots as absent, which shrinks its key to the attributes
//! actually present.
//!
//! Cost model: an operator costs the number of records it consumes, plus one
//! unit per invocation of its code (per record, pair, or group), plus the
//! number of records it produces; a plan costs the sum over its operators.
//! Sources are free. The figure is a deterministic stand-in for work and
//! data volume, good enough to rank desk-scale alternatives.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{EngineError, FlowError};
use crate::flow::{Flow, OpKind, PlanNode};
use crate::tac::interp::{run_udf, GlobalModel, UdfInput, DEFAULT_STEP_BUDGET};
use crate::value::{datasets_equal, project, AttributeId, DataSet, Record, Value, ValueTag};

/// Source tables loaded into memory, keyed by source id. Rows are in source
/// layout (declaration order), not yet widened to carriers.
#[derive(Clone, Debug, Default)]
pub struct FlowData {
    pub tables: BTreeMap<String, Vec<Record>>,
}

/// Reads every source's CSV file relative to the flow's base directory.
pub fn load_data(flow: &Flow) -> Result<FlowData, FlowError> {
    let mut tables = BTreeMap::new();
    for (id, decl) in &flow.sources {
        let path = flow.base_dir.join(&decl.path);
        tables.insert(id.clone(), read_csv(&path, &decl.tags)?);
    }
    Ok(FlowData { tables })
}

/// Reads one headerless CSV file, parsing each cell with the given tags.
pub fn read_csv(path: &Path, tags: &[ValueTag]) -> Result<Vec<Record>, FlowError> {
    let fail = |msg: String| FlowError::Csv { path: path.display().to_string(), msg };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| fail(e.to_string()))?;
        if row.len() != tags.len() {
            return Err(fail(format!(
                "row {} has {} cells, expected {}",
                rows.len() + 1,
                row.len(),
                tags.len()
            )));
        }
        let mut values = Vec::with_capacity(tags.len());
        for (cell, &tag) in row.iter().zip(tags) {
            values.push(Value::parse_csv(cell, tag).map_err(|e| fail(e.to_string()))?);
        }
        rows.push(Record::new(values));
    }
    Ok(rows)
}

/// What executing one plan produced.
#[derive(Clone, Debug)]
pub struct ExecutionReport {
    /// Sink output, projected onto the flow's sink layout.
    pub output: DataSet,
    /// Total cost: records consumed plus code invocations plus records
    /// produced, over all operators.
    pub cost: u64,
    /// The same, per operator.
    pub op_costs: BTreeMap<String, u64>,
}

/// Runs `plan` over the loaded source data. The plan must use exactly the
/// flow's operators and sources (any valid reordering qualifies).
pub fn execute_plan(
    flow: &Flow,
    data: &FlowData,
    plan: &PlanNode,
) -> Result<ExecutionReport, EngineError> {
    if plan.op_ids() != flow.root.op_ids() || plan.source_ids() != flow.root.source_ids() {
        return Err(EngineError::Flow(FlowError::Document(format!(
            "plan {plan} does not cover the flow's operators and sources"
        ))));
    }
    let width = flow.global.len();
    let mut op_costs = BTreeMap::new();
    let carriers = eval(flow, data, plan, width, &mut op_costs)?;
    let identity: Vec<AttributeId> = (0..width as u32).map(AttributeId).collect();
    let mut rows = Vec::with_capacity(carriers.len());
    for c in &carriers {
        rows.push(project(c, &identity, &flow.sink_layout)?);
    }
    let output = DataSet::new(flow.sink_layout.clone(), rows)?;
    let cost = op_costs.values().sum();
    Ok(ExecutionReport { output, cost, op_costs })
}

fn eval(
    flow: &Flow,
    data: &FlowData,
    node: &PlanNode,
    width: usize,
    costs: &mut BTreeMap<String, u64>,
) -> Result<Vec<Record>, EngineError> {
    match node {
        PlanNode::Source(id) => {
            let decl = &flow.sources[id];
            let rows = data.tables.get(id).ok_or_else(|| EngineError::Operator {
                op: id.clone(),
                msg: "no data loaded for source".into(),
            })?;
            let mut out = Vec::with_capacity(rows.len());
            for row in rows {
                let mut carrier = vec![Value::Absent; width];
                for (k, attr) in decl.attrs.iter().enumerate() {
                    carrier[attr.0 as usize] = row.0[k].clone();
                }
                out.push(Record::new(carrier));
            }
            Ok(out)
        }
        PlanNode::Op { id, inputs } => {
            let mut ins = Vec::with_capacity(inputs.len());
            for input in inputs {
                ins.push(eval(flow, data, input, width, costs)?);
            }
            let op = flow.op(id);
            let program = op.udf.as_ref().ok_or_else(|| EngineError::Operator {
                op: id.clone(),
                msg: "operator has no code to execute".into(),
            })?;
            let model = GlobalModel {
                in_maps: op
                    .in_attrs
                    .iter()
                    .map(|side| side.iter().map(|a| a.0 as usize).collect())
                    .collect(),
                out_map: op.out_attrs.iter().map(|a| a.0 as usize).collect(),
                width,
            };
            let run = |input: &UdfInput| {
                run_udf(program, &model, input, DEFAULT_STEP_BUDGET)
                    .map_err(|e| EngineError::Udf { op: id.clone(), source: e })
            };

            let consumed: usize = ins.iter().map(Vec::len).sum();
            let mut invocations: u64 = 0;
            let mut out = Vec::new();
            match op.kind {
                OpKind::Map => {
                    let [rows] = &ins[..] else { unreachable!("map has one input") };
                    for r in rows {
                        invocations += 1;
                        out.extend(run(&UdfInput::Records(vec![r.clone()]))?);
                    }
                }
                OpKind::Cross => {
                    let [left, right] = &ins[..] else { unreachable!("cross has two inputs") };
                    for l in left {
                        for r in right {
                            invocations += 1;
                            out.extend(run(&UdfInput::Records(vec![l.clone(), r.clone()]))?);
                        }
                    }
                }
                OpKind::Match => {
                    let [left, right] = &ins[..] else { unreachable!("match has two inputs") };
                    let by_key = group(right, &op.key_right);
                    for l in left {
                        let k = key_of(l, &op.key_left);
                        if let Some(rs) = by_key.get(&k) {
                            for r in rs {
                                invocations += 1;
                                out.extend(run(&UdfInput::Records(vec![l.clone(), r.clone()]))?);
                            }
                        }
                    }
                }
                OpKind::Reduce => {
                    let [rows] = &ins[..] else { unreachable!("reduce has one input") };
                    for rows in group(rows, &op.key).into_values() {
                        invocations += 1;
                        out.extend(run(&UdfInput::Lists(vec![rows]))?);
                    }
                }
                OpKind::CoGroup => {
                    let [left, right] = &ins[..] else { unreachable!("cogroup has two inputs") };
                    let mut lg = group(left, &op.key_left);
                    let mut rg = group(right, &op.key_right);
                    let keys: std::collections::BTreeSet<Vec<Value>> =
                        lg.keys().chain(rg.keys()).cloned().collect();
                    for k in keys {
                        invocations += 1;
                        let ls = lg.remove(&k).unwrap_or_default();
                        let rs = rg.remove(&k).unwrap_or_default();
                        out.extend(run(&UdfInput::Lists(vec![ls, rs]))?);
                    }
                }
            }

            *costs.entry(id.clone()).or_insert(0) +=
                consumed as u64 + invocations + out.len() as u64;
            Ok(out)
        }
    }
}

/// Groups carriers by their values at the key attributes, in key order.
/// Rows within a group are sorted, so list-valued UDF parameters iterate in
/// a canonical order no matter which plan produced the rows. Order-sensitive
/// group code (say, one that keeps the first record it sees) then behaves
/// identically across reordered plans.
fn group(rows: &[Record], key: &[AttributeId]) -> BTreeMap<Vec<Value>, Vec<Record>> {
    let mut groups: BTreeMap<Vec<Value>, Vec<Record>> = BTreeMap::new();
    for r in rows {
        groups.entry(key_of(r, key)).or_default().push(r.clone());
    }
    for rows in groups.values_mut() {
        rows.sort();
    }
    groups
}

fn key_of(rec: &Record, key: &[AttributeId]) -> Vec<Value> {
    key.iter().map(|a| rec.0[a.0 as usize].clone()).collect()
}

/// One plan's execution, compared against the flow's own plan.
#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub plan: PlanNode,
    pub report: ExecutionReport,
    /// Whether the output bag-equals the original plan's output.
    pub matches_baseline: bool,
}

/// Executes the flow's own plan and then every plan in `plans`, comparing
/// each output against the original's by bag equality. Outcomes come back
/// cheapest first; ties break on plan text, so the order is deterministic.
pub fn execute_and_rank(
    flow: &Flow,
    data: &FlowData,
    plans: &[PlanNode],
) -> Result<Vec<PlanOutcome>, EngineError> {
    let baseline = execute_plan(flow, data, &flow.root)?;
    let mut out = Vec::with_capacity(plans.len());
    for plan in plans {
        let report = if *plan == flow.root {
            baseline.clone()
        } else {
            execute_plan(flow, data, plan)?
        };
        let matches_baseline = datasets_equal(&report.output, &baseline.output)?;
        out.push(PlanOutcome { plan: plan.clone(), report, matches_baseline });
    }
    out.sort_by_key(|o| (o.report.cost, o.plan.to_string()));
    Ok(out)
}
