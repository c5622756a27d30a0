//! Maximum spanning arborescence decoding, label assignment and
//! attachment scores.

use std::collections::HashMap;

use crate::conllu::Sentence;
use crate::error::{Error, Result};
use crate::scorers::{score_labels, LabelClassifier, ScoreMatrix};
use crate::encoder::TokenViews;

/// Label id used for gold labels missing from the vocabulary; never predicted.
pub const UNKNOWN_LABEL: usize = usize::MAX;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseTree {
    /// `heads[k]` is the head of token `k + 1`; 0 is the root.
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

impl ParseTree {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Acyclic, spanning, rooted at 0, and (if requested) with exactly one
    /// token attached to the root.
    pub fn is_valid(&self, single_root: bool) -> bool {
        if !crate::conllu::heads_form_tree(&self.heads) {
            return false;
        }
        let root_children = self.heads.iter().filter(|&&h| h == 0).count();
        !single_root || self.heads.is_empty() || root_children == 1
    }
}

/// Total score of a head assignment: `sum_d scores[heads[d-1]][d]`.
pub fn tree_score(scores: &ScoreMatrix, heads: &[usize]) -> f64 {
    heads
        .iter()
        .enumerate()
        .map(|(k, &h)| scores.get(h, k + 1))
        .sum()
}

type Grid = Vec<Vec<f64>>;

/// Highest-scoring arborescence rooted at position 0.
///
/// `scores.get(h, d)` is the score of head `h` for dependent `d`. Self-arcs
/// and arcs into the root are ignored. With `single_root`, exactly one
/// token attaches to the root. Ties go to the lowest head index.
///
/// Returns the head of every token `1..size`; grids smaller than 2 give an
/// empty assignment.
pub fn chu_liu_edmonds(scores: &ScoreMatrix, single_root: bool) -> Result<Vec<usize>> {
    let n = scores.size();
    if n < 2 {
        return Ok(Vec::new());
    }
    let mut grid: Grid = (0..n)
        .map(|h| (0..n).map(|d| scores.get(h, d)).collect())
        .collect();
    if grid.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::Data("score grid contains NaN".into()));
    }
    for (v, row) in grid.iter_mut().enumerate() {
        row[v] = f64::NEG_INFINITY;
        row[0] = f64::NEG_INFINITY;
    }

    let parents = decode(&grid)?;
    let root_children: Vec<usize> = (1..n).filter(|&d| parents[d] == 0).collect();
    if !single_root || root_children.len() <= 1 {
        return Ok(parents[1..].to_vec());
    }

    // Try every allowed root child and keep the best constrained tree.
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 1..n {
        if grid[0][r] == f64::NEG_INFINITY {
            continue;
        }
        let mut constrained = grid.clone();
        for d in 1..n {
            if d != r {
                constrained[0][d] = f64::NEG_INFINITY;
            }
        }
        let parents = match decode(&constrained) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let heads = parents[1..].to_vec();
        let total = tree_score(scores, &heads);
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    best.map(|(_, h)| h)
        .ok_or_else(|| Error::Data("no single-root arborescence exists".into()))
}

/// Unconstrained maximum arborescence on a masked grid; `parents[0] = 0`.
fn decode(grid: &Grid) -> Result<Vec<usize>> {
    let n = grid.len();
    let mut best = vec![0usize; n];
    for (v, b) in best.iter_mut().enumerate().skip(1) {
        let mut arg = None;
        let mut max = f64::NEG_INFINITY;
        for (u, row) in grid.iter().enumerate() {
            if row[v] > max {
                max = row[v];
                arg = Some(u);
            }
        }
        *b = arg.ok_or_else(|| {
            Error::Data(format!("position {v} has no admissible head"))
        })?;
    }

    let Some(cycle) = find_cycle(&best) else {
        return Ok(best);
    };

    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    // Contracted graph: surviving vertices in original order, then the cycle.
    let outside: Vec<usize> = (0..n).filter(|&v| !in_cycle[v]).collect();
    let c = outside.len();
    let m = c + 1;
    let mut sub = vec![vec![f64::NEG_INFINITY; m]; m];
    // Which cycle vertex an arc into / out of the contraction stands for.
    let mut enters = vec![usize::MAX; m];
    let mut leaves = vec![usize::MAX; m];

    for (i, &u) in outside.iter().enumerate() {
        for (j, &v) in outside.iter().enumerate() {
            sub[i][j] = grid[u][v];
        }
        let mut max = f64::NEG_INFINITY;
        for &v in &cycle {
            let gain = grid[u][v] - grid[best[v]][v];
            if gain > max || enters[i] == usize::MAX {
                if gain > max {
                    max = gain;
                }
                enters[i] = v;
            }
        }
        sub[i][c] = max;
        let mut max = f64::NEG_INFINITY;
        for &w in &cycle {
            if grid[w][u] > max || leaves[i] == usize::MAX {
                if grid[w][u] > max {
                    max = grid[w][u];
                }
                leaves[i] = w;
            }
        }
        sub[c][i] = max;
    }

    let sub_parents = decode(&sub)?;

    let mut parents = best.clone();
    for (j, &v) in outside.iter().enumerate().skip(1) {
        let p = sub_parents[j];
        parents[v] = if p == c { leaves[j] } else { outside[p] };
    }
    let entry_from = sub_parents[c];
    let entered = enters[entry_from];
    parents[entered] = outside[entry_from];
    Ok(parents)
}

/// Lowest-ordered cycle reachable by following `parents`, if any.
fn find_cycle(parents: &[usize]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut state = vec![0u8; n];
    state[0] = 2;
    for start in 1..n {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = parents[v];
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&p| p == v).expect("on path");
            return Some(path[pos..].to_vec());
        }
        for p in path {
            state[p] = 2;
        }
    }
    None
}

/// Picks the best label for every predicted arc; ties go to the lowest id.
pub fn assign_labels(
    heads: &[usize],
    views: &[TokenViews],
    classifier: &LabelClassifier,
) -> Result<ParseTree> {
    if views.len() != heads.len() + 1 {
        return Err(Error::shape(
            "assign_labels",
            format!("{} heads but {} positions", heads.len(), views.len()),
        ));
    }
    let mut labels = Vec::with_capacity(heads.len());
    for (k, &h) in heads.iter().enumerate() {
        let scores = score_labels(&views[h], &views[k + 1], classifier)?;
        labels.push(argmax_lowest(scores.as_slice()));
    }
    Ok(ParseTree {
        heads: heads.to_vec(),
        labels,
    })
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut arg = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[arg] {
            arg = i;
        }
    }
    arg
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttachmentScores {
    pub uas: f64,
    pub las: f64,
    pub tokens: usize,
    pub correct_heads: usize,
    pub correct_labeled: usize,
}

/// Unlabeled and labeled attachment scores in percent over all tokens,
/// punctuation included. An empty corpus scores 100.
pub fn evaluate(pred: &[ParseTree], gold: &[ParseTree]) -> Result<AttachmentScores> {
    if pred.len() != gold.len() {
        return Err(Error::Data(format!(
            "{} predicted sentences but {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    let (mut tokens, mut heads_ok, mut labeled_ok) = (0, 0, 0);
    for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.heads.len() != g.heads.len()
            || p.labels.len() != p.heads.len()
            || g.labels.len() != g.heads.len()
        {
            return Err(Error::Data(format!(
                "sentence {}: {} predicted tokens but {} gold tokens",
                i + 1,
                p.heads.len(),
                g.heads.len()
            )));
        }
        for k in 0..p.heads.len() {
            tokens += 1;
            if p.heads[k] == g.heads[k] {
                heads_ok += 1;
                if p.labels[k] == g.labels[k] {
                    labeled_ok += 1;
                }
            }
        }
    }
    let pct = |k: usize| {
        if tokens == 0 {
            100.0
        } else {
            100.0 * k as f64 / tokens as f64
        }
    };
    Ok(AttachmentScores {
        uas: pct(heads_ok),
        las: pct(labeled_ok),
        tokens,
        correct_heads: heads_ok,
        correct_labeled: labeled_ok,
    })
}

/// Attachment scores of two annotated treebanks, labels compared as strings.
pub fn evaluate_sentences(pred: &[Sentence], gold: &[Sentence]) -> Result<AttachmentScores> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut tree = |s: &Sentence| ParseTree {
        heads: s.heads.clone(),
        labels: s
            .deprels
            .iter()
            .map(|l| {
                let next = ids.len();
                *ids.entry(l.clone()).or_insert(next)
            })
            .collect(),
    };
    let p: Vec<ParseTree> = pred.iter().map(&mut tree).collect();
    let g: Vec<ParseTree> = gold.iter().map(&mut tree).collect();
    evaluate(&p, &g)
}
