//! Word-translation retrieval and accuracy, plus language trees.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};

use crate::bilingual::BilingualModel;
use crate::embeddings::{EmbeddingSet, Lexicon};
use crate::error::{Error, Result};
use crate::linalg::{argmax, map_rows, top_k};
use crate::multilingual::MultiAlignment;
use crate::objectives::{OrthogonalMap, DEFAULT_K};
use crate::transport::Assignment;

/// Rows scored per block, bounding memory at `CHUNK × targets`.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionKind {
    Nn,
    Csls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalCriterion {
    pub kind: CriterionKind,
    /// Neighborhood size of CSLS; ignored by NN.
    pub k: usize,
}

impl RetrievalCriterion {
    pub fn nn() -> Self {
        Self {
            kind: CriterionKind::Nn,
            k: DEFAULT_K,
        }
    }

    pub fn csls(k: usize) -> Self {
        Self {
            kind: CriterionKind::Csls,
            k,
        }
    }
}

impl fmt::Display for RetrievalCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self.kind {
            CriterionKind::Nn => "nn",
            CriterionKind::Csls => "csls",
        })
    }
}

impl FromStr for RetrievalCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Self::nn()),
            "csls" => Ok(Self::csls(DEFAULT_K)),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Mean of the `k` largest dot products of every query row with the pool.
fn mean_top_k(queries: ArrayView2<'_, f64>, pool: ArrayView2<'_, f64>, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(queries.nrows());
    for start in (0..queries.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(queries.nrows());
        let block = queries.slice(s![start..end, ..]).dot(&pool.t());
        out.extend(map_rows(block.view(), |_, row| {
            let row = row.to_vec();
            top_k(&row, k).iter().map(|&j| row[j]).sum::<f64>() / k as f64
        }));
    }
    out
}

fn check_k(k: usize, queries: usize, targets: usize) -> Result<()> {
    if k == 0 || k > queries || k > targets {
        return Err(Error::InvalidArgument(format!(
            "csls k = {k} out of range for {queries} queries and {targets} targets"
        )));
    }
    Ok(())
}

/// CSLS score matrix `2 xᵀy - r_T(x) - r_S(y)` between mapped queries and targets.
///
/// `r_T(x)` is the mean similarity of `x` to its `k` nearest targets and
/// `r_S(y)` the mean similarity of `y` to its `k` nearest queries.
pub fn csls_scores(mapped_queries: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, k: usize) -> Result<Array2<f64>> {
    check_k(k, mapped_queries.nrows(), targets.nrows())?;
    Ok(csls_from_similarities(mapped_queries.dot(&targets.t()), k))
}

/// CSLS applied to a precomputed query-by-target similarity matrix.
fn csls_from_similarities(mut sims: Array2<f64>, k: usize) -> Array2<f64> {
    let mean_top = |v: Vec<f64>| top_k(&v, k).iter().map(|&j| v[j]).sum::<f64>() / k as f64;
    let r_t: Vec<f64> = sims.rows().into_iter().map(|r| mean_top(r.to_vec())).collect();
    let r_s: Vec<f64> = sims.columns().into_iter().map(|c| mean_top(c.to_vec())).collect();
    for ((i, j), v) in sims.indexed_iter_mut() {
        *v = 2.0 * *v - r_t[i] - r_s[j];
    }
    sims
}

/// Best target of each listed source row. `sources` holds every mapped source
/// row since CSLS penalties on targets depend on the whole source set.
fn retrieve(
    sources: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    rows: &[usize],
    criterion: RetrievalCriterion,
) -> Result<Vec<usize>> {
    let (r_t, r_s) = match criterion.kind {
        CriterionKind::Nn => (None, None),
        CriterionKind::Csls => {
            check_k(criterion.k, sources.nrows(), targets.nrows())?;
            let queries = sources.select(ndarray::Axis(0), rows);
            (
                Some(mean_top_k(queries.view(), targets, criterion.k)),
                Some(mean_top_k(targets, sources, criterion.k)),
            )
        }
    };
    let mut out = Vec::with_capacity(rows.len());
    for (c, chunk) in rows.chunks(CHUNK).enumerate() {
        let block = sources.select(ndarray::Axis(0), chunk).dot(&targets.t());
        out.extend(map_rows(block.view(), |i, row| match (&r_t, &r_s) {
            (Some(r_t), Some(r_s)) => {
                let penalty = r_t[c * CHUNK + i];
                argmax(row.iter().zip(r_s).map(|(v, rs)| 2.0 * v - penalty - rs))
            }
            _ => argmax(row.iter().copied()),
        }));
    }
    Ok(out)
}

fn check_maps(src: &EmbeddingSet, tgt: &EmbeddingSet, map_src: &OrthogonalMap, map_tgt: &OrthogonalMap) -> Result<()> {
    if src.dim() != tgt.dim() || map_src.dim() != src.dim() || map_tgt.dim() != tgt.dim() {
        return Err(Error::Shape(format!(
            "embeddings of dimension {} and {} with maps of dimension {} and {}",
            src.dim(),
            tgt.dim(),
            map_src.dim(),
            map_tgt.dim()
        )));
    }
    Ok(())
}

/// Best-scoring target word for every source word, both sides first mapped
/// into the common space.
pub fn translate(
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    map_src: &OrthogonalMap,
    map_tgt: &OrthogonalMap,
    criterion: RetrievalCriterion,
) -> Result<Assignment> {
    check_maps(src, tgt, map_src, map_tgt)?;
    let a = map_src.apply(src.matrix());
    let b = map_tgt.apply(tgt.matrix());
    let rows: Vec<usize> = (0..src.len()).collect();
    Assignment::new(retrieve(a.view(), b.view(), &rows, criterion)?, tgt.len())
}

/// Precision@1 of one translation direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub source: String,
    pub target: String,
    /// Set when translation went through the pivot space.
    pub pivot: Option<String>,
    pub criterion: RetrievalCriterion,
    pub precision_at_1: f64,
    pub num_queries: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)?;
        if let Some(p) = &self.pivot {
            write!(f, " via {p}")?;
        }
        write!(f, " {} {:.4} {}", self.criterion, self.precision_at_1, self.num_queries)
    }
}

/// Precision@1 of retrieving `tgt` words for `src` words.
///
/// Queries are the unique source tokens of the lexicon found in `src`; a
/// query is correct when its retrieved word is any of its listed targets.
/// Pairs outside either vocabulary are ignored.
pub fn evaluate_direct(
    lexicon: &Lexicon,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    map_src: &OrthogonalMap,
    map_tgt: &OrthogonalMap,
    criterion: RetrievalCriterion,
) -> Result<EvalReport> {
    check_maps(src, tgt, map_src, map_tgt)?;
    if lexicon.source_lang != src.lang() {
        return Err(Error::LanguageMismatch {
            expected: src.lang().to_string(),
            found: lexicon.source_lang.clone(),
        });
    }
    if lexicon.target_lang != tgt.lang() {
        return Err(Error::LanguageMismatch {
            expected: tgt.lang().to_string(),
            found: lexicon.target_lang.clone(),
        });
    }
    let mut rows = Vec::new();
    let mut gold: Vec<HashSet<usize>> = Vec::new();
    for (word, targets) in lexicon.grouped() {
        let Some(row) = src.index_of(word) else { continue };
        let known: HashSet<usize> = targets.iter().filter_map(|t| tgt.index_of(t)).collect();
        if !known.is_empty() {
            rows.push(row);
            gold.push(known);
        }
    }
    if rows.is_empty() {
        return Err(Error::NoQueries(format!("{}-{}", lexicon.source_lang, lexicon.target_lang)));
    }
    let a = map_src.apply(src.matrix());
    let b = map_tgt.apply(tgt.matrix());
    let predicted = retrieve(a.view(), b.view(), &rows, criterion)?;
    let hits = predicted.iter().zip(&gold).filter(|(p, g)| g.contains(p)).count();
    Ok(EvalReport {
        source: src.lang().to_string(),
        target: tgt.lang().to_string(),
        pivot: None,
        criterion,
        precision_at_1: hits as f64 / rows.len() as f64,
        num_queries: rows.len(),
    })
}

/// How two non-pivot languages reach each other through the pivot.
#[derive(Debug, Clone, Copy)]
pub enum PivotRoute<'a> {
    /// Maps of a joint alignment: both languages already share the pivot space.
    Joint {
        src: &'a OrthogonalMap,
        tgt: &'a OrthogonalMap,
    },
    /// Independently trained maps to the pivot, composed as `Q_src Q_tgtᵀ`.
    Composed {
        src: &'a OrthogonalMap,
        tgt: &'a OrthogonalMap,
    },
}

impl<'a> PivotRoute<'a> {
    pub fn joint(alignment: &'a MultiAlignment, src: &str, tgt: &str) -> Result<Self> {
        Ok(Self::Joint {
            src: alignment.map_of(src)?,
            tgt: alignment.map_of(tgt)?,
        })
    }

    pub fn composed(src: &'a BilingualModel, tgt: &'a BilingualModel) -> Self {
        Self::Composed { src: &src.q, tgt: &tgt.q }
    }
}

/// Precision@1 of translating through the pivot with a single retrieval in
/// vector space.
pub fn evaluate_indirect(
    lexicon: &Lexicon,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    route: PivotRoute<'_>,
    pivot: &str,
    criterion: RetrievalCriterion,
) -> Result<EvalReport> {
    let mut report = match route {
        PivotRoute::Joint { src: qs, tgt: qt } => evaluate_direct(lexicon, src, tgt, qs, qt, criterion)?,
        PivotRoute::Composed { src: qs, tgt: qt } => {
            let composed = qs.then_inverse(qt);
            evaluate_direct(lexicon, src, tgt, &composed, &OrthogonalMap::identity(tgt.dim()), criterion)?
        }
    };
    report.pivot = Some(pivot.to_string());
    Ok(report)
}

/// Text table of precisions (in percent), one row per labelled report list
/// and one column per direction of the first row, with a trailing average.
pub fn format_table(rows: &[(&str, &[EvalReport])]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let headers: Vec<String> = first.iter().map(|r| format!("{}-{}", r.source, r.target)).collect();
    let label_width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let col_width = headers.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = format!("{:label_width$}", "");
    for h in headers.iter().map(String::as_str).chain(["avg"]) {
        out.push_str(&format!(" {h:>col_width$}"));
    }
    out.push('\n');
    for (label, reports) in rows {
        out.push_str(&format!("{label:label_width$}"));
        let values: Vec<f64> = reports.iter().map(|r| 100.0 * r.precision_at_1).collect();
        let avg = values.iter().sum::<f64>() / values.len().max(1) as f64;
        for v in values.iter().chain([&avg]) {
            out.push_str(&format!(" {v:>col_width$.1}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEdge {
    /// Indices into the label list, `a < b`.
    pub a: usize,
    pub b: usize,
    pub label_a: String,
    pub label_b: String,
    pub weight: f64,
}

impl fmt::Display for TreeEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.label_a, self.label_b, self.weight)
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Minimum spanning tree of a symmetric loss matrix (Kruskal), optionally
/// leaving one language out. Equal weights are broken by the lexicographic
/// order of the edge's label pair.
pub fn language_tree(loss: ArrayView2<'_, f64>, labels: &[String], exclude: Option<&str>) -> Result<Vec<TreeEdge>> {
    let n = loss.nrows();
    if loss.ncols() != n || labels.len() != n {
        return Err(Error::Shape(format!(
            "loss matrix {}x{} with {} labels",
            n,
            loss.ncols(),
            labels.len()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (loss[[i, j]], loss[[j, i]]);
            if !a.is_finite() || (a - b).abs() > 1e-9 * a.abs().max(1.0) {
                return Err(Error::InvalidArgument(format!("loss matrix is not finite and symmetric at ({i}, {j})")));
            }
        }
    }
    let excluded = match exclude {
        Some(label) => Some(
            labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown language `{label}`")))?,
        ),
        None => None,
    };
    let nodes: Vec<usize> = (0..n).filter(|&i| Some(i) != excluded).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (x, &i) in nodes.iter().enumerate() {
        for &j in &nodes[x + 1..] {
            edges.push((i, j));
        }
    }
    let ordered = |(i, j): (usize, usize)| {
        if labels[i] <= labels[j] {
            (&labels[i], &labels[j])
        } else {
            (&labels[j], &labels[i])
        }
    };
    edges.sort_by(|&e, &f| {
        loss[[e.0, e.1]]
            .total_cmp(&loss[[f.0, f.1]])
            .then_with(|| ordered(e).cmp(&ordered(f)))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    let mut tree = Vec::with_capacity(nodes.len().saturating_sub(1));
    for (i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree.push(TreeEdge {
                a: i,
                b: j,
                label_a: labels[i].clone(),
                label_b: labels[j].clone(),
                weight: loss[[i, j]],
            });
        }
    }
    Ok(tree)
}
