//! Prompt, feedback and hand-off templates.

use rand::seq::SliceRandom;
use serde_json::{json, Value};

use super::{query_payload, ObservationKind, ObservationMessage};
use crate::envcore::StepRecord;
use crate::instance::PublicInfo;
use crate::query::{Feedback, InvalidQuery, NodeId, Query, Task};
use crate::rng::{derive_seed, derived_rng, stream};
use crate::sat::bitstring;

/// Python `repr` of a float: shortest round-trip digits, always with a
/// decimal point or exponent.
pub fn py_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        let s = format!("{v:e}");
        let (mant, exp) = s.split_once('e').expect("exponent form");
        let exp: i32 = exp.parse().expect("integer exponent");
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let s = format!("{v}");
    if s.contains('.') {
        s
    } else {
        s + ".0"
    }
}

fn space_list(nodes: &[NodeId]) -> String {
    nodes.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
}

fn comma_list(nodes: &[NodeId]) -> String {
    nodes.iter().map(u32::to_string).collect::<Vec<_>>().join(", ")
}

const HILL_SYSTEM: &str = "You are playing a game to find the global maximum value of a hidden continuous function f(x). Note that the function may have many local maximums which are not globally maximal. You have a limited number of queries.

The function is defined on the interval [0, 10].

Rules:
- In each turn, you can query the value of the function `f(x)` for any real number `x` in the interval `[0, 10]`.
- The number of remaining queries will be provided in each turn.
- Your goal is to find the global maximum value of `f(x)`.

How to play:
- Use the tool with a JSON payload like this: {\"reason\": \"your strategy for querying x\", \"query\": {\"x\": v}}, where 'v' is any real number between 0 and 10 that you want to query. The tool call MUST ONLY contain this JSON. No other text is allowed.
- After each query, you will be told the value of `f(x)` for the `x` you queried.";

const TREE_SYSTEM: &str = "You are playing a graph game to find the maximum hidden node value. You have limited queries.

Rules:
- You are given the graph structure and the value of a starting node.
- The order of nodes in adjacency lists is randomized. The list of valid nodes to query is ordered such that neighbors of more recently queried nodes appear first, with ties broken randomly.
- Querying a node reveals its value.
- Do not query the same node twice.
- You can only query a node if it's a neighbor of an already known node.
- Values of connected nodes differ by at most 4.

How to play:
- Use the tool with a JSON payload like this: {\"reason\": \"your reasoning here\", \"query\": {\"node\": i}}, where 'i' is the index of the node you want to query. The tool call MUST ONLY contain this JSON. No other text is allowed.
- After each query, you will be told the value of the queried node.";

fn sat_system(n: u32, m: u32, max_arity: u32) -> String {
    format!(
        "You are playing a game to find a Boolean assignment that maximizes the weighted sum of satisfied constraints of a hidden boolean formula.

IMPORTANT: The formula is NOT in Conjunctive Normal Form (CNF).

Rules:
- There are {n} Boolean variables x0..x{last}.
- There are {m} weighted clauses.
- Each clause is formed by 1 to {max_arity} literals (variables or their negations) combined with logical AND.
- A clause is satisfied if and only if ALL its literals are True (unlike standard CNF which uses OR).
- In each turn, you may query ANY full assignment (a list of 0/1 values of length {n}).
- You will receive the sum of weights of satisfied clauses for that assignment.
- Your goal is to find the maximum weighted sum within the query budget.

How to play:
- Use the tool with a JSON payload like this: {{\"reason\":\"your strategy\",\"query\":{{\"x0\":0, \"x1\":1, \"x2\":0, ...}}}}.
- The tool call MUST ONLY contain this JSON. No other text is allowed.",
        last = n.saturating_sub(1)
    )
}

pub fn system_prompt(public: &PublicInfo) -> String {
    match public {
        PublicInfo::Hill { .. } => HILL_SYSTEM.to_string(),
        PublicInfo::Tree { .. } => TREE_SYSTEM.to_string(),
        PublicInfo::Sat { n, m, max_arity } => sat_system(*n, *m, *max_arity),
    }
}

fn base(task: Task, budget: u32, used: u32) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("task".into(), Value::from(task.as_str()));
    m.insert("budget".into(), Value::from(budget));
    m.insert("round".into(), Value::from(used));
    m.insert("remaining".into(), Value::from(budget - used));
    m
}

/// Opening message. Tree intros list the adjacency with node order and
/// neighbor order shuffled from the episode seed, plus the initial valid
/// nodes.
pub fn render_task_intro(
    public: &PublicInfo,
    budget: u32,
    available: Option<&[NodeId]>,
    seed: u64,
) -> ObservationMessage {
    let mut data = base(public.task(), budget, 0);
    let text = match public {
        PublicInfo::Hill { lo, hi } => {
            data.insert("domain".into(), json!([lo, hi]));
            format!("You have {budget} queries. Your goal is to find the maximum value.")
        }
        PublicInfo::Tree { structure, root_value } => {
            let mut rng = derived_rng(seed, stream::INTRO);
            let mut order: Vec<NodeId> = (0..structure.node_count).collect();
            order.shuffle(&mut rng);
            let mut lines = Vec::with_capacity(order.len());
            let mut listing = Vec::with_capacity(order.len());
            for &v in &order {
                let mut nbrs = structure.adjacency[v as usize].clone();
                nbrs.shuffle(&mut rng);
                lines.push(format!("{v}: {}", comma_list(&nbrs)));
                listing.push(json!([v, nbrs]));
            }
            let avail = available.unwrap_or(&[]).to_vec();
            data.insert("n".into(), Value::from(structure.node_count));
            data.insert("root".into(), Value::from(structure.root));
            data.insert("root_value".into(), Value::from(*root_value));
            data.insert("adjacency".into(), Value::from(listing));
            data.insert("available".into(), json!(avail));
            format!(
                "n = {n}\n\nGraph (by adjacency list): The order of nodes in the following adjacency list and the order of neighbors for each node are both randomized.\n\n{adj}\n\nStart node: {root}. Value: {root_value}. You have {budget} queries remaining. Your goal is to find the maximum value.\n\nValid nodes to query next: {avail}.",
                n = structure.node_count,
                adj = lines.join("\n"),
                root = structure.root,
                avail = space_list(&avail),
            )
        }
        PublicInfo::Sat { n, m, max_arity } => {
            data.insert("n".into(), Value::from(*n));
            data.insert("m".into(), Value::from(*m));
            data.insert("max_arity".into(), Value::from(*max_arity));
            format!("You have {budget} queries. Maximize the number of satisfied clauses (m={m}).")
        }
    };
    ObservationMessage {
        kind: ObservationKind::TaskIntro,
        system: Some(system_prompt(public)),
        text,
        structured: Value::Object(data),
    }
}

/// Text of the message following a valid query.
pub fn feedback_text(query: &Query, feedback: &Feedback, remaining: u32) -> String {
    match (query, feedback) {
        (Query::Hill { x }, Feedback::Hill { value }) => {
            format!(
                "Value of f({}) is {}. Remaining queries: {remaining}.",
                py_float(*x),
                py_float(*value)
            )
        }
        (
            Query::Tree { node },
            Feedback::Tree {
                value,
                available,
                exposed_new,
            },
        ) => {
            if *exposed_new {
                format!(
                    "VALUE of {node} is {value}. Remaining queries: {remaining}. This query has made new neighbors available to query: {}. You can still choose to query from previously available neighbors.",
                    space_list(available)
                )
            } else if available.is_empty() {
                format!("VALUE of {node} is {value}. Remaining queries: {remaining}. No nodes are left to query.")
            } else {
                format!(
                    "VALUE of {node} is {value}. Remaining queries: {remaining}. This query did not make new neighbors available. Valid nodes to query next: {}.",
                    space_list(available)
                )
            }
        }
        (Query::Sat { .. }, Feedback::Sat { satisfied }) => {
            format!("Satisfied clauses: {satisfied}. Remaining queries: {remaining}.")
        }
        _ => unreachable!("feedback always matches its query's task"),
    }
}

/// Message after a valid round. Tree rounds that expose nothing new restate
/// the full availability list and are tagged `availability`.
pub fn render_feedback(step: &StepRecord, budget: u32) -> ObservationMessage {
    let remaining = budget - step.step;
    let mut data = base(step.query.task(), budget, step.step);
    data.insert("query".into(), query_payload(&step.query));
    data.insert("best".into(), Value::from(step.best));
    let mut kind = ObservationKind::Feedback;
    match &step.feedback {
        Feedback::Hill { value } => {
            data.insert("value".into(), Value::from(*value));
        }
        Feedback::Tree {
            value,
            available,
            exposed_new,
        } => {
            data.insert("value".into(), Value::from(*value));
            data.insert("available".into(), json!(available));
            data.insert("exposed_new".into(), Value::from(*exposed_new));
            if !exposed_new {
                kind = ObservationKind::Availability;
            }
        }
        Feedback::Sat { satisfied } => {
            data.insert("value".into(), Value::from(*satisfied));
        }
    }
    ObservationMessage {
        kind,
        system: None,
        text: feedback_text(&step.query, &step.feedback, remaining),
        structured: Value::Object(data),
    }
}

/// Message sent on a feedback retry.
pub fn render_error(task: Task, error: &InvalidQuery, budget: u32, used: u32) -> ObservationMessage {
    let mut data = base(task, budget, used);
    data.insert("error".into(), serde_json::to_value(error).expect("errors serialize"));
    ObservationMessage {
        kind: ObservationKind::Error,
        system: None,
        text: format!(
            "Invalid query: {error}. This query was not counted. Remaining queries: {}. Output a valid query.",
            budget - used
        ),
        structured: Value::Object(data),
    }
}

/// Mission hand-off digest of everything revealed so far. Pure in
/// `(public, history, budget, seed, handoff)`.
pub fn render_summary(
    public: &PublicInfo,
    history: &[StepRecord],
    budget: u32,
    seed: u64,
    handoff: u32,
) -> ObservationMessage {
    let used = history.len() as u32;
    let remaining = budget - used;
    let mut data = base(public.task(), budget, used);
    data.insert("handoff".into(), Value::from(handoff));
    let text = match public {
        PublicInfo::Hill { lo, hi } => hill_summary(*lo, *hi, history, remaining, &mut data),
        PublicInfo::Tree { structure, .. } => {
            let mut rng = derived_rng(derive_seed(seed, stream::HANDOFF), u64::from(handoff));
            let depths = structure.depths();
            let mut known = vec![false; structure.node_count as usize];
            known[structure.root as usize] = true;
            let mut lines = Vec::new();
            let mut best: Option<(NodeId, i64)> = None;
            let mut hist_data = Vec::new();
            for rec in history {
                if let (Query::Tree { node }, Feedback::Tree { value, .. }) = (&rec.query, &rec.feedback) {
                    known[*node as usize] = true;
                    lines.push(format!("* Node {node} → value {value}"));
                    hist_data.push(json!([node, value]));
                    if best.is_none_or(|b| *value > b.1) {
                        best = Some((*node, *value));
                    }
                }
            }
            let mut by_height: std::collections::BTreeMap<u32, Vec<NodeId>> = Default::default();
            for v in 0..structure.node_count {
                if known[v as usize] {
                    continue;
                }
                if structure.adjacency[v as usize].iter().any(|&u| known[u as usize]) {
                    by_height.entry(depths[v as usize]).or_default().push(v);
                }
            }
            let mut groups = Vec::new();
            let mut group_data = Vec::new();
            for (h, nodes) in by_height.iter_mut() {
                nodes.shuffle(&mut rng);
                groups.push(format!("* height {h}: [{}]", comma_list(nodes)));
                group_data.push(json!({"height": h, "nodes": nodes}));
            }
            let (bn, bv) = best.unwrap_or((structure.root, 0));
            data.insert("history".into(), Value::from(hist_data));
            data.insert("best".into(), json!({"node": bn, "value": bv}));
            data.insert("frontier".into(), Value::from(group_data));
            format!(
                "### MISSION HAND-OFF ###\n\nA previous agent spent {used} queries exploring the graph but was terminated. You are a NEW agent brought in to take over. You must find the maximum value.\n\n**Query History (in order):**\n\n{hist}\n\n**Current Best Found:**\n\nNode {bn} with Value {bv}.\n\n**Next Nodes to Query (grouped by height):**\nEach listed node is actionable (unknown, with a known neighbor). Node order is shuffled within each height.\n\n{groups}\n\n**Instructions for the New Agent:**\nPick a node to query next. Do not blindly continue the last path; consider switching to a different height/frontier.\nYou have {remaining} queries remaining. Output your next query.",
                hist = lines.join("\n"),
                groups = groups.join("\n"),
            )
        }
        PublicInfo::Sat { n, .. } => sat_summary(*n as usize, history, remaining, &mut data),
    };
    ObservationMessage {
        kind: ObservationKind::SummaryHandoff,
        system: Some(system_prompt(public)),
        text,
        structured: Value::Object(data),
    }
}

/// Rounds to 4 decimals for gap sizes, so 0.1 + 0.2 style noise is hidden.
fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Maximal unexplored intervals between sorted query points, with the
/// domain ends as boundaries. Zero-length gaps are dropped.
pub(crate) fn hill_gaps(lo: f64, hi: f64, xs: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = xs.to_vec();
    pts.sort_by(f64::total_cmp);
    let mut bounds = vec![lo];
    bounds.extend(pts);
    bounds.push(hi);
    bounds
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect()
}

fn hill_summary(
    lo: f64,
    hi: f64,
    history: &[StepRecord],
    remaining: u32,
    data: &mut serde_json::Map<String, Value>,
) -> String {
    let mut pts: Vec<(f64, f64)> = history
        .iter()
        .filter_map(|r| match (&r.query, &r.feedback) {
            (Query::Hill { x }, Feedback::Hill { value }) => Some((*x, *value)),
            _ => None,
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let gaps = hill_gaps(lo, hi, &xs);
    let point_lines: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("x={} → f(x)={}", py_float(*x), py_float(*y)))
        .collect();
    let gap_lines: Vec<String> = gaps
        .iter()
        .map(|(l, r)| {
            format!(
                "* Interval [{}, {}] (Gap size: {}).",
                py_float(*l),
                py_float(*r),
                py_float(round4(r - l))
            )
        })
        .collect();
    data.insert(
        "points".into(),
        json!(pts.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>()),
    );
    data.insert(
        "gaps".into(),
        json!(gaps.iter().map(|g| [g.0, g.1, round4(g.1 - g.0)]).collect::<Vec<_>>()),
    );
    format!(
        "### MISSION HAND-OFF ###\n\nA previous agent spent {used} queries exploring the domain [{lo}, {hi}] but was terminated. You are a NEW agent brought in to take over. You must find the global maximum.\n\n**Data Collected by Previous Agent (Sorted by x):**\n\n{points}\n\n**Unexplored Gaps:**\n\n{gaps}\n\n**Instructions for the New Agent:**\n\n1. Review the history. Did the previous agent get stuck in a local maximum?\n\n2. Formulate a fresh plan to utilize your remaining budget.\n\nYou have {remaining} queries remaining. Review the Hand-off data above and output your next query.",
        used = history.len(),
        points = point_lines.join("\n"),
        gaps = gap_lines.join("\n"),
    )
}

/// Number of variables listed in each coverage line.
const COVERAGE_LIST_LEN: usize = 3;

fn sat_summary(n: usize, history: &[StepRecord], remaining: u32, data: &mut serde_json::Map<String, Value>) -> String {
    let t = history.len();
    let mut zeros = vec![0usize; n];
    let mut ones = vec![0usize; n];
    let mut best: Option<(u32, &[bool])> = None;
    let mut lines = Vec::with_capacity(t);
    let mut hist_data = Vec::with_capacity(t);
    for (i, rec) in history.iter().enumerate() {
        if let (Query::Sat { bits }, Feedback::Sat { satisfied }) = (&rec.query, &rec.feedback) {
            for (j, &b) in bits.iter().enumerate() {
                if b {
                    ones[j] += 1;
                } else {
                    zeros[j] += 1;
                }
            }
            let bs = bitstring(bits);
            lines.push(format!("* step {}: score={satisfied} | assignment={bs}", i + 1));
            hist_data.push(json!([satisfied, bs]));
            if best.is_none_or(|b| *satisfied > b.0) {
                best = Some((*satisfied, bits));
            }
        }
    }
    let fewest = |counts: &[usize]| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by_key(|&j| (counts[j], j));
        idx.truncate(COVERAGE_LIST_LEN);
        idx
    };
    let few0 = fewest(&zeros);
    let few1 = fewest(&ones);
    let fmt = |vars: &[usize], counts: &[usize], val: u8| -> String {
        vars.iter()
            .map(|&j| format!("x{j} (was {val} in {}/{t})", counts[j]))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let (best_score, best_bits) = best.map(|(s, b)| (s, bitstring(b))).unwrap_or((0, String::new()));
    data.insert("history".into(), Value::from(hist_data));
    data.insert("best_score".into(), Value::from(best_score));
    data.insert("best_assignment".into(), Value::from(best_bits.clone()));
    data.insert("zero_counts".into(), json!(zeros));
    data.insert("one_counts".into(), json!(ones));
    data.insert("fewest_zeros".into(), json!(few0));
    data.insert("fewest_ones".into(), json!(few1));
    format!(
        "### MISSION HAND-OFF ###\n\nA previous agent spent {t} queries exploring the MAX-SAT black-box but was terminated. You are a NEW agent brought in to take over.\n\n**Progress:** tried {t} assignments. Best score so far: **{best_score}**.\n\n**Query History (in order):**\n\n{hist}\n\n**Best Assignment Found (inner x0..xN-1 bitstring):**\n\n{best_bits}\n\n**Coverage Summary:**\n\nCounts below summarize how often each variable took value 0 or 1 across the queried assignments.\n\n- Variables with fewest 0s observed: {z}\n\n- Variables with fewest 1s observed: {o}\n\nYou have {remaining} queries remaining.",
        hist = lines.join("\n"),
        z = fmt(&few0, &zeros, 0),
        o = fmt(&few1, &ones, 1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn python_float_repr() {
        assert_eq!(py_float(5.0), "5.0");
        assert_eq!(py_float(3.2), "3.2");
        assert_eq!(py_float(-0.0), "-0.0");
        assert_eq!(py_float(0.1 + 0.2), "0.30000000000000004");
        assert_eq!(py_float(1.5e-5), "1.5e-05");
        assert_eq!(py_float(1e16), "1e+16");
        assert_eq!(py_float(123456.789), "123456.789");
        assert_eq!(py_float(0.0001), "0.0001");
    }

    #[test]
    fn gaps_include_domain_ends() {
        assert_eq!(
            hill_gaps(0.0, 10.0, &[9.0, 1.0, 2.0]),
            vec![(0.0, 1.0), (1.0, 2.0), (2.0, 9.0), (9.0, 10.0)]
        );
        assert_eq!(hill_gaps(0.0, 10.0, &[0.0, 10.0, 10.0]), vec![(0.0, 10.0)]);
    }

    fn hill_step(step: u32, x: f64, value: f64) -> StepRecord {
        StepRecord {
            step,
            query: Query::Hill { x },
            feedback: Feedback::Hill { value },
            best: value,
        }
    }

    #[test]
    fn hill_feedback_text() {
        let rec = hill_step(1, 2.5, 3.2);
        let msg = render_feedback(&rec, 12);
        assert_eq!(msg.text, "Value of f(2.5) is 3.2. Remaining queries: 11.");
        assert_eq!(msg.remaining(), Some(11));
    }

    #[test]
    fn sat_feedback_text() {
        let q = Query::Sat { bits: vec![true] };
        let f = Feedback::Sat { satisfied: 97 };
        assert_eq!(
            feedback_text(&q, &f, 20),
            "Satisfied clauses: 97. Remaining queries: 20."
        );
    }

    #[test]
    fn hill_summary_sorted_with_gaps() {
        let hist = vec![hill_step(1, 9.0, 1.0), hill_step(2, 1.0, 2.0), hill_step(3, 2.0, 0.5)];
        let public = PublicInfo::Hill { lo: 0.0, hi: 10.0 };
        let msg = render_summary(&public, &hist, 10, 0, 1);
        assert!(msg
            .text
            .contains("x=1.0 → f(x)=2.0\nx=2.0 → f(x)=0.5\nx=9.0 → f(x)=1.0"));
        assert!(msg.text.contains("* Interval [2.0, 9.0] (Gap size: 7.0)."));
        assert!(msg.text.contains("* Interval [0.0, 1.0] (Gap size: 1.0)."));
        assert!(msg.text.contains("* Interval [9.0, 10.0] (Gap size: 1.0)."));
        assert!(msg
            .text
            .ends_with("You have 7 queries remaining. Review the Hand-off data above and output your next query."));
    }

    #[test]
    fn sat_summary_coverage_lists() {
        let public = PublicInfo::Sat {
            n: 4,
            m: 9,
            max_arity: 2,
        };
        let mk = |step, bits: Vec<bool>, s| StepRecord {
            step,
            query: Query::Sat { bits },
            feedback: Feedback::Sat { satisfied: s },
            best: 0.0,
        };
        let hist = vec![
            mk(1, vec![true, false, true, false], 3),
            mk(2, vec![true, true, false, false], 5),
            mk(3, vec![true, false, false, true], 5),
        ];
        let msg = render_summary(&public, &hist, 10, 0, 1);
        assert!(msg.text.contains("Best score so far: **5**."));
        assert!(msg
            .text
            .contains("**Best Assignment Found (inner x0..xN-1 bitstring):**\n\n1100\n"));
        assert!(msg
            .text
            .contains("- Variables with fewest 0s observed: x0 (was 0 in 0/3), x1 (was 0 in 2/3), x2 (was 0 in 2/3)"));
        assert!(msg
            .text
            .contains("- Variables with fewest 1s observed: x1 (was 1 in 1/3), x2 (was 1 in 1/3), x3 (was 1 in 1/3)"));
        assert!(msg.text.contains("* step 2: score=5 | assignment=1100"));
    }
}
