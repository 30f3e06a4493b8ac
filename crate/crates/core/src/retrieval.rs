//! Knowledge retrieval by state fidelity.
//!
//! Vectors are amplitude-encoded as real unit-norm states and compared by the
//! squared overlap `|⟨a|b⟩|²`. Cosine similarity is available as an
//! alternative metric. Selection keeps the best `k` entries ordered by score
//! descending, then index ascending.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::data::KnowledgeBase;
use crate::error::{Error, Result};
use crate::fusion::concat_fuse;
use crate::linalg::{dot, norm, Matrix};
use crate::rng::SplitMix64;

const MIN_NORM: f64 = 1e-12;

/// Real amplitudes with unit L2 norm.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState(Vec<f64>);

impl QuantumState {
    pub fn amplitudes(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub fn amplitude_encode(x: &[f64]) -> Result<QuantumState> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("amplitude_encode"));
    }
    let n = norm(x);
    if n <= MIN_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(QuantumState(x.iter().map(|v| v / n).collect()))
}

pub fn quantum_similarity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            context: "quantum_similarity",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let overlap = dot(&a.0, &b.0);
    Ok((overlap * overlap).min(1.0))
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "cosine_similarity",
            expected: x.len(),
            found: y.len(),
        });
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx <= MIN_NORM || ny <= MIN_NORM {
        return Err(Error::ZeroVector);
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Quantum,
    Cosine,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantum" => Ok(Metric::Quantum),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopkWeighting {
    #[default]
    Uniform,
    Score,
}

impl FromStr for TopkWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(TopkWeighting::Uniform),
            "score" => Ok(TopkWeighting::Score),
            other => Err(Error::InvalidConfig(format!("unknown weighting {other:?}"))),
        }
    }
}

/// Which vector is used as the retrieval query for a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    /// The raw text embedding; requires `d_k == d_t`.
    #[default]
    Text,
    /// The concatenated spectra mapped to `d_k` by a frozen random matrix
    /// with orthonormal rows.
    Projected,
}

impl FromStr for QueryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(QueryMode::Text),
            "projected" => Ok(QueryMode::Projected),
            other => Err(Error::InvalidConfig(format!("unknown query mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub index: usize,
    pub score: f64,
}

// Ordered so that "greater" means "ranks earlier".
#[derive(Clone, Copy, Debug)]
struct Ranked(RetrievalHit);

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .score
            .total_cmp(&other.0.score)
            .then_with(|| other.0.index.cmp(&self.0.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

/// Bounded min-heap that keeps the `k` best hits seen.
struct Selector {
    k: usize,
    heap: BinaryHeap<Reverse<Ranked>>,
}

impl Selector {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    fn offer(&mut self, hit: RetrievalHit) {
        let r = Ranked(hit);
        if self.heap.len() < self.k {
            self.heap.push(Reverse(r));
        } else if let Some(Reverse(worst)) = self.heap.peek() {
            if r > *worst {
                self.heap.pop();
                self.heap.push(Reverse(r));
            }
        }
    }

    fn finish(self) -> Vec<RetrievalHit> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|Reverse(r)| r.0)
            .collect()
    }
}

/// Query prepared once for scoring against many keys.
struct PreparedQuery {
    metric: Metric,
    state: QuantumState,
}

impl PreparedQuery {
    fn new(query: &[f64], d_k: usize, metric: Metric) -> Result<Self> {
        if query.len() != d_k {
            return Err(Error::ShapeMismatch {
                context: "retrieval query",
                expected: d_k,
                found: query.len(),
            });
        }
        let state = amplitude_encode(query)?;
        Ok(Self { metric, state })
    }

    fn score(&self, key: &[f32]) -> Result<f64> {
        let key: Vec<f64> = key.iter().map(|&x| x as f64).collect();
        let score = match self.metric {
            Metric::Quantum => quantum_similarity(&self.state, &amplitude_encode(&key)?)?,
            Metric::Cosine => cosine_similarity(&self.state.0, &key)?,
        };
        // fold -0.0 into 0.0 so ordering matches numeric equality
        Ok(score + 0.0)
    }
}

fn check_request(kb: &KnowledgeBase, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidConfig("top-k must be at least 1".into()));
    }
    if kb.is_empty() {
        return Err(Error::Empty("knowledge base"));
    }
    Ok(())
}

fn scan(
    q: &PreparedQuery,
    kb: &KnowledgeBase,
    range: std::ops::Range<usize>,
    k: usize,
) -> Result<Vec<RetrievalHit>> {
    let mut sel = Selector::new(k);
    for index in range {
        let score = q.score(&kb.entries[index].key_emb)?;
        sel.offer(RetrievalHit { index, score });
    }
    Ok(sel.finish())
}

/// The `k` highest-scoring entries (all of them when `k > |kb|`), best first,
/// ties broken by ascending index.
pub fn top_k(query: &[f64], kb: &KnowledgeBase, k: usize, metric: Metric) -> Result<Vec<RetrievalHit>> {
    check_request(kb, k)?;
    let q = PreparedQuery::new(query, kb.d_k, metric)?;
    scan(&q, kb, 0..kb.len(), k)
}

/// [`top_k`] with the scan split over `partitions` threads. The merged result
/// is identical to the sequential one for any partition count.
pub fn top_k_partitioned(
    query: &[f64],
    kb: &KnowledgeBase,
    k: usize,
    metric: Metric,
    partitions: usize,
) -> Result<Vec<RetrievalHit>> {
    check_request(kb, k)?;
    let q = PreparedQuery::new(query, kb.d_k, metric)?;
    let parts = partitions.clamp(1, kb.len());
    let chunk = kb.len().div_ceil(parts);
    let partials: Vec<Result<Vec<RetrievalHit>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..parts)
            .map(|p| {
                let range = p * chunk..((p + 1) * chunk).min(kb.len());
                let q = &q;
                s.spawn(move || scan(q, kb, range, k))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("retrieval worker panicked"))
            .collect()
    });
    let mut sel = Selector::new(k);
    for part in partials {
        for hit in part? {
            sel.offer(hit);
        }
    }
    Ok(sel.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub k_agg: Vec<f64>,
    pub hits: Vec<RetrievalHit>,
}

/// Averages the raw keys of the hit entries.
///
/// `Score` weighting uses the hit scores (negative scores count as zero) and
/// falls back to the plain mean when every weight is zero.
pub fn topk_avg(
    kb: &KnowledgeBase,
    hits: &[RetrievalHit],
    weighting: TopkWeighting,
) -> Result<RetrievedContext> {
    if hits.is_empty() {
        return Err(Error::Empty("retrieval hits"));
    }
    if let Some(h) = hits.iter().find(|h| h.index >= kb.len()) {
        return Err(Error::IndexOutOfRange {
            index: h.index,
            len: kb.len(),
        });
    }
    let mut weights: Vec<f64> = match weighting {
        TopkWeighting::Uniform => vec![1.0; hits.len()],
        TopkWeighting::Score => hits.iter().map(|h| h.score.max(0.0)).collect(),
    };
    let mut total: f64 = weights.iter().sum();
    if total <= 0.0 {
        weights = vec![1.0; hits.len()];
        total = hits.len() as f64;
    }
    let mut k_agg = vec![0.0; kb.d_k];
    for (h, w) in hits.iter().zip(&weights) {
        for (acc, &x) in k_agg.iter_mut().zip(&kb.entries[h.index].key_emb) {
            *acc += w * x as f64;
        }
    }
    k_agg.iter_mut().for_each(|x| *x /= total);
    Ok(RetrievedContext {
        k_agg,
        hits: hits.to_vec(),
    })
}

/// Everything needed to turn a sample into its retrieved context.
#[derive(Clone, Debug)]
pub struct Retriever<'a> {
    kb: &'a KnowledgeBase,
    metric: Metric,
    k: usize,
    weighting: TopkWeighting,
    projection: Option<Matrix>,
}

impl<'a> Retriever<'a> {
    /// `fused_dim` is the length of the concatenated spectra; it is only used
    /// by [`QueryMode::Projected`].
    pub fn new(
        kb: &'a KnowledgeBase,
        metric: Metric,
        k: usize,
        weighting: TopkWeighting,
        mode: QueryMode,
        fused_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        check_request(kb, k)?;
        let projection = match mode {
            QueryMode::Text => None,
            QueryMode::Projected => Some(orthonormal_rows(kb.d_k, fused_dim, seed)?),
        };
        Ok(Self {
            kb,
            metric,
            k,
            weighting,
            projection,
        })
    }

    pub fn query(&self, text_emb: &[f64], v_feat: &[f64], t_feat: &[f64]) -> Result<Vec<f64>> {
        match &self.projection {
            None => Ok(text_emb.to_vec()),
            Some(m) => {
                let fused = concat_fuse(v_feat, t_feat);
                if fused.len() != m.cols() {
                    return Err(Error::ShapeMismatch {
                        context: "fused retrieval query",
                        expected: m.cols(),
                        found: fused.len(),
                    });
                }
                Ok(m.mul_vec(&fused))
            }
        }
    }

    pub fn retrieve(&self, text_emb: &[f64], v_feat: &[f64], t_feat: &[f64]) -> Result<RetrievedContext> {
        let q = self.query(text_emb, v_feat, t_feat)?;
        let hits = top_k(&q, self.kb, self.k, self.metric)?;
        topk_avg(self.kb, &hits, self.weighting)
    }
}

/// `rows × cols` matrix with orthonormal rows from Gram-Schmidt on gaussian
/// draws.
pub fn orthonormal_rows(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    if rows > cols {
        return Err(Error::InvalidConfig(format!(
            "cannot build {rows} orthonormal vectors in dimension {cols}"
        )));
    }
    let mut rng = SplitMix64::new(seed ^ 0x5152_4147_5052_4f4a);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.gaussian()).collect();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    Ok(Matrix::from_vec(rows, cols, basis.concat()))
}
