//! Multi-output CART regression trees.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: Vec<f64>,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
        /// Drop in summed squared error achieved by this split.
        decrease: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root first; children are referenced by index.
    pub nodes: Vec<Node>,
}

/// Best split found at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Summed squared error of both children, added over target columns.
    pub child_sse: f64,
}

/// Summed squared error of `y` over `idx`, added over columns.
pub fn sse(y: &Matrix, idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    (0..y.cols())
        .map(|o| {
            let (s, q) = idx.iter().fold((0.0, 0.0), |(s, q), &i| {
                let v = y.get(i, o);
                (s + v, q + v * v)
            });
            (q - s * s / n).max(0.0)
        })
        .sum()
}

/// Exhaustive search over features and midpoints between consecutive
/// distinct values. Ties keep the lowest feature, then the lowest threshold;
/// gains within `1e-12` of the node's error count as ties, since the same
/// partition reached through different features differs only by rounding.
pub fn best_split(x: &Matrix, y: &Matrix, idx: &[usize]) -> Option<SplitChoice> {
    let cols = columns(x);
    let orders: Vec<Vec<usize>> = cols.iter().map(|c| sorted_by(c, idx)).collect();
    scan(&cols, y, idx, &orders)
}

fn columns(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.cols()).map(|j| (0..x.rows()).map(|i| x.get(i, j)).collect()).collect()
}

fn sorted_by(col: &[f64], idx: &[usize]) -> Vec<usize> {
    let mut order = idx.to_vec();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
    order
}

/// `orders[f]` holds `idx` sorted by feature `f`, then row index.
fn scan(cols: &[Vec<f64>], y: &Matrix, idx: &[usize], orders: &[Vec<usize>]) -> Option<SplitChoice> {
    let n = idx.len();
    let outs = y.cols();
    let mut total_s = vec![0.0; outs];
    let mut total_q = vec![0.0; outs];
    for &i in idx {
        for o in 0..outs {
            let v = y.get(i, o);
            total_s[o] += v;
            total_q[o] += v * v;
        }
    }
    let parent: f64 = (0..outs)
        .map(|o| (total_q[o] - total_s[o] * total_s[o] / n as f64).max(0.0))
        .sum();
    let tie = 1e-12 * parent.max(f64::MIN_POSITIVE);
    let mut best: Option<SplitChoice> = None;
    let mut ls = vec![0.0; outs];
    let mut lq = vec![0.0; outs];
    for (f, (col, order)) in cols.iter().zip(orders).enumerate() {
        ls.iter_mut().for_each(|v| *v = 0.0);
        lq.iter_mut().for_each(|v| *v = 0.0);
        for pos in 1..n {
            let prev = order[pos - 1];
            for o in 0..outs {
                let v = y.get(prev, o);
                ls[o] += v;
                lq[o] += v * v;
            }
            let (a, b) = (col[prev], col[order[pos]]);
            if a >= b {
                continue;
            }
            let (nl, nr) = (pos as f64, (n - pos) as f64);
            let mut child = 0.0;
            for o in 0..outs {
                let rs = total_s[o] - ls[o];
                let rq = total_q[o] - lq[o];
                child += (lq[o] - ls[o] * ls[o] / nl).max(0.0) + (rq - rs * rs / nr).max(0.0);
            }
            if best.is_none_or(|b| child < b.child_sse - tie) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(SplitChoice {
                    feature: f,
                    threshold,
                    child_sse: child,
                });
            }
        }
    }
    best
}

fn is_pure(y: &Matrix, idx: &[usize]) -> bool {
    let first = y.row(idx[0]);
    idx.iter().all(|&i| y.row(i) == first)
}

fn mean(y: &Matrix, idx: &[usize]) -> Vec<f64> {
    if is_pure(y, idx) {
        return y.row(idx[0]).to_vec();
    }
    let n = idx.len() as f64;
    (0..y.cols())
        .map(|o| idx.iter().map(|&i| y.get(i, o)).sum::<f64>() / n)
        .collect()
}

impl Tree {
    /// Grows a tree on rows `idx` (repeats allowed) until leaves are pure,
    /// hold fewer than two rows, or cannot be split.
    pub fn fit(x: &Matrix, y: &Matrix, idx: &[usize]) -> Tree {
        let cols = columns(x);
        let orders: Vec<Vec<usize>> = cols.iter().map(|c| sorted_by(c, idx)).collect();
        let mut nodes = vec![Node::Leaf {
            value: Vec::new(),
            samples: 0,
        }];
        // Children inherit their parent's sorted orders by stable partition.
        let mut stack = vec![(0, idx.to_vec(), orders)];
        while let Some((slot, rows, orders)) = stack.pop() {
            let leaf = Node::Leaf {
                value: mean(y, &rows),
                samples: rows.len(),
            };
            if rows.len() < 2 || is_pure(y, &rows) {
                nodes[slot] = leaf;
                continue;
            }
            let Some(choice) = scan(&cols, y, &rows, &orders) else {
                nodes[slot] = leaf;
                continue;
            };
            let col = &cols[choice.feature];
            let goes_left = |i: &usize| col[*i] <= choice.threshold;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|i| goes_left(i));
            let (lo, ro): (Vec<Vec<usize>>, Vec<Vec<usize>>) =
                orders.into_iter().map(|o| o.into_iter().partition(goes_left)).unzip();
            let left = nodes.len();
            let right = left + 1;
            let placeholder = Node::Leaf {
                value: Vec::new(),
                samples: 0,
            };
            nodes.push(placeholder.clone());
            nodes.push(placeholder);
            nodes[slot] = Node::Split {
                feature: choice.feature,
                threshold: choice.threshold,
                left,
                right,
                samples: rows.len(),
                decrease: (sse(y, &rows) - choice.child_sse).max(0.0),
            };
            stack.push((right, r, ro));
            stack.push((left, l, lo));
        }
        Tree { nodes }
    }

    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split {
                feature,
                threshold,
                decrease,
                ..
            } => Some((*feature, *threshold, *decrease)),
            Node::Leaf { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}
