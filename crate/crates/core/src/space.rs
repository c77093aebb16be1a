//! The NAS-Bench-201 cell space: five operations on the six edges of a
//! four-node DAG.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpId {
    Zero = 0,
    SkipConnect = 1,
    Conv1x1 = 2,
    Conv3x3 = 3,
    AvgPool3x3 = 4,
}

impl OpId {
    pub const ALL: [OpId; 5] = [
        OpId::Zero,
        OpId::SkipConnect,
        OpId::Conv1x1,
        OpId::Conv3x3,
        OpId::AvgPool3x3,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<OpId> {
        OpId::ALL.get(i).copied()
    }

    /// Name used in NAS-Bench-201 architecture strings.
    pub fn name(self) -> &'static str {
        match self {
            OpId::Zero => "none",
            OpId::SkipConnect => "skip_connect",
            OpId::Conv1x1 => "nor_conv_1x1",
            OpId::Conv3x3 => "nor_conv_3x3",
            OpId::AvgPool3x3 => "avg_pool_3x3",
        }
    }

    pub fn kernel(self) -> Option<usize> {
        match self {
            OpId::Conv1x1 => Some(1),
            OpId::Conv3x3 => Some(3),
            _ => None,
        }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpId {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        OpId::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| TensorError::Config(format!("unknown operation {s:?}")))
    }
}

/// `(from, to)` node pairs, in encoding order.
pub const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

pub const NUM_ARCHS: usize = 15_625;

/// One cell: an operation per edge of [`EDGES`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchEncoding {
    ops: [OpId; 6],
}

impl ArchEncoding {
    pub fn new(ops: [OpId; 6]) -> Self {
        ArchEncoding { ops }
    }

    pub fn uniform(op: OpId) -> Self {
        ArchEncoding { ops: [op; 6] }
    }

    /// Base-5 digits of `index`, least significant first, in edge order.
    pub fn decode(index: usize) -> Result<Self> {
        if index >= NUM_ARCHS {
            return Err(TensorError::Range {
                index,
                len: NUM_ARCHS,
            });
        }
        let mut ops = [OpId::Zero; 6];
        let mut rest = index;
        for op in &mut ops {
            *op = OpId::from_ordinal(rest % 5).expect("digit below 5");
            rest /= 5;
        }
        Ok(ArchEncoding { ops })
    }

    pub fn encode(&self) -> usize {
        self.ops.iter().rev().fold(0, |acc, op| acc * 5 + op.ordinal())
    }

    pub fn ops(&self) -> &[OpId; 6] {
        &self.ops
    }

    pub fn op(&self, edge: usize) -> OpId {
        self.ops[edge]
    }

    /// Edges that carry information from the input node to the output node:
    /// non-zero, with a non-zero path from node 0 into the source and from
    /// the target to node 3.
    pub fn live_edges(&self) -> [bool; 6] {
        let mut reach_in = [true, false, false, false];
        for (e, &(i, j)) in EDGES.iter().enumerate() {
            if self.ops[e] != OpId::Zero && reach_in[i] {
                reach_in[j] = true;
            }
        }
        let mut reach_out = [false, false, false, true];
        for (e, &(i, j)) in EDGES.iter().enumerate().rev() {
            if self.ops[e] != OpId::Zero && reach_out[j] {
                reach_out[i] = true;
            }
        }
        let mut live = [false; 6];
        for (e, &(i, j)) in EDGES.iter().enumerate() {
            live[e] = self.ops[e] != OpId::Zero && reach_in[i] && reach_out[j];
        }
        live
    }

    /// Key under the benchmark's isomorphism rule; see [`canonical_form`].
    pub fn canonical_key(&self) -> CanonicalKey {
        canonical_form(self)
    }
}

impl fmt::Display for ArchEncoding {
    /// NAS-Bench-201 string, e.g. `|nor_conv_3x3~0|+|none~0|skip_connect~1|+|...|`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut e = 0;
        for j in 1..4 {
            if j > 1 {
                f.write_str("+")?;
            }
            f.write_str("|")?;
            for i in 0..j {
                write!(f, "{}~{}|", self.ops[e], i)?;
                e += 1;
            }
        }
        Ok(())
    }
}

impl FromStr for ArchEncoding {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || TensorError::Config(format!("malformed architecture string {s:?}"));
        let mut ops = Vec::with_capacity(6);
        for (node, part) in s.trim().split('+').enumerate() {
            let items: Vec<&str> = part.split('|').filter(|t| !t.is_empty()).collect();
            if items.len() != node + 1 {
                return Err(bad());
            }
            for (i, item) in items.iter().enumerate() {
                let (op, src) = item.split_once('~').ok_or_else(bad)?;
                if src.parse::<usize>().map_err(|_| bad())? != i {
                    return Err(bad());
                }
                ops.push(op.parse()?);
            }
        }
        let ops: [OpId; 6] = ops.try_into().map_err(|_| bad())?;
        Ok(ArchEncoding { ops })
    }
}

/// Deterministic serialisation of a cell's reduced computation graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalKey(pub String);

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Canonical key under the isomorphism rule of the NAS-Bench-201 benchmark.
///
/// Each node is the sorted `+`-join of one term per incoming edge. A skip
/// edge contributes the source node's expression verbatim, a parametric or
/// pooling edge wraps it as `(expr)@op`, and a zero edge, or any edge leaving
/// a node whose expression is a lone zero, contributes the placeholder `#`.
/// Placeholders are kept in the sum, so a zero edge in parallel with a live
/// path still shows up in the key. This reproduces the benchmark's 6 466
/// classes; [`information_flow_key`] is the stricter reduction.
pub fn canonical_form(arch: &ArchEncoding) -> CanonicalKey {
    let mut nodes: Vec<String> = vec!["0".into()];
    for j in 1..4 {
        let mut terms: Vec<String> = EDGES
            .iter()
            .enumerate()
            .filter(|(_, &(_, t))| t == j)
            .map(|(e, &(i, _))| {
                let op = arch.ops[e];
                if op == OpId::Zero || nodes[i] == "#" {
                    "#".to_string()
                } else if op == OpId::SkipConnect {
                    nodes[i].clone()
                } else {
                    format!("({})@{}", nodes[i], op)
                }
            })
            .collect();
        terms.sort();
        nodes.push(terms.join("+"));
    }
    CanonicalKey(nodes.pop().unwrap())
}

/// Key of the cell after deleting zero edges, contracting skip edges into
/// their endpoints (parallel paths kept as a multiset), and dropping nodes
/// with no path from the input. Cells with no input-to-output flow all map to
/// `#`.
pub fn information_flow_key(arch: &ArchEncoding) -> CanonicalKey {
    // None marks a node that carries no information from the input.
    let mut nodes: Vec<Option<Vec<String>>> = vec![Some(vec!["0".into()])];
    for j in 1..4 {
        let mut terms = Vec::new();
        for (e, &(i, t)) in EDGES.iter().enumerate() {
            if t != j {
                continue;
            }
            let (op, Some(src)) = (arch.ops[e], &nodes[i]) else { continue };
            match op {
                OpId::Zero => {}
                OpId::SkipConnect => terms.extend(src.iter().cloned()),
                _ => terms.push(format!("({})@{}", src.join("+"), op)),
            }
        }
        terms.sort();
        nodes.push((!terms.is_empty()).then_some(terms));
    }
    match nodes.pop().unwrap() {
        Some(t) => CanonicalKey(t.join("+")),
        None => CanonicalKey("#".into()),
    }
}

/// Every encoding in index order.
pub fn all_encodings() -> impl Iterator<Item = ArchEncoding> {
    (0..NUM_ARCHS).map(|i| ArchEncoding::decode(i).expect("in range"))
}

/// Canonical classes: key → member indices (ascending).
pub fn canonical_classes() -> BTreeMap<CanonicalKey, Vec<usize>> {
    canonical_classes_by(canonical_form)
}

pub fn canonical_classes_by(
    key: impl Fn(&ArchEncoding) -> CanonicalKey,
) -> BTreeMap<CanonicalKey, Vec<usize>> {
    let mut classes: BTreeMap<CanonicalKey, Vec<usize>> = BTreeMap::new();
    for (i, a) in all_encodings().enumerate() {
        classes.entry(key(&a)).or_default().push(i);
    }
    classes
}

/// Smallest index of each class, ascending.
pub fn unique_representatives() -> Vec<usize> {
    let mut reps: Vec<usize> = canonical_classes().values().map(|m| m[0]).collect();
    reps.sort_unstable();
    reps
}

/// Parses an architecture list: one index per line, `#` comments and blank
/// lines ignored.
pub fn parse_arch_list(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            let i: usize = l
                .parse()
                .map_err(|_| TensorError::Config(format!("line {}: not an index: {l:?}", n + 1)))?;
            ArchEncoding::decode(i)?;
            Ok(i)
        })
        .collect()
}

/// `index,canonical_key` rows for every encoding.
pub fn canonical_csv() -> String {
    let mut s = String::from("index,canonical_key\n");
    for (i, a) in all_encodings().enumerate() {
        s.push_str(&format!("{i},{}\n", canonical_form(&a)));
    }
    s
}
