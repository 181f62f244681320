//! Pairwise scoring over a batch, retrieval metrics and the hardest-negative
//! triplet loss.

use std::collections::HashMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{cam_similarity, pem_wasserstein, vse_similarity, GaussianEmbedding};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fragments::{compute_margins, FragmentSet};
use crate::ot;
use crate::partial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Optimal transport; partial matching when `RunConfig::partial` is set.
    #[serde(rename = "omit")]
    Omit,
    /// Optimal transport without dustbins.
    #[serde(rename = "omit-naive")]
    OmitNaive,
    #[serde(rename = "vse")]
    Vse,
    #[serde(rename = "cam")]
    Cam,
    /// Negated Gaussian Wasserstein distance, so larger means closer.
    #[serde(rename = "pem")]
    Pem,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Omit => "omit",
            Method::OmitNaive => "omit-naive",
            Method::Vse => "vse",
            Method::Cam => "cam",
            Method::Pem => "pem",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omit" => Ok(Method::Omit),
            "omit-naive" | "omit_naive" => Ok(Method::OmitNaive),
            "vse" => Ok(Method::Vse),
            "cam" => Ok(Method::Cam),
            "pem" => Ok(Method::Pem),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

/// Scores between images (rows) and captions (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
    pub method: Method,
    pub row_ids: Vec<u32>,
    pub col_ids: Vec<u32>,
}

impl SimilarityMatrix {
    pub fn new(values: Array2<f64>, method: Method, row_ids: Vec<u32>, col_ids: Vec<u32>) -> Result<Self> {
        if values.dim() != (row_ids.len(), col_ids.len()) {
            return Err(Error::shape(
                format!("{}x{} from ids", row_ids.len(), col_ids.len()),
                format!("{:?}", values.dim()),
            ));
        }
        Ok(SimilarityMatrix {
            values,
            method,
            row_ids,
            col_ids,
        })
    }

    /// Row and column ids are the positional indices.
    pub fn indexed(values: Array2<f64>, method: Method) -> Self {
        let (m, n) = values.dim();
        SimilarityMatrix {
            values,
            method,
            row_ids: (0..m as u32).collect(),
            col_ids: (0..n as u32).collect(),
        }
    }
}

/// Relevant (image, caption) id pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub pairs: Vec<(u32, u32)>,
}

impl GroundTruth {
    pub fn new(pairs: Vec<(u32, u32)>) -> Self {
        GroundTruth { pairs }
    }

    /// Image `i` paired with caption `i` for `i < n`.
    pub fn diagonal(n: usize) -> Self {
        GroundTruth {
            pairs: (0..n as u32).map(|i| (i, i)).collect(),
        }
    }
}

/// Recall percentages in both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub i2t_r1: f64,
    pub i2t_r5: f64,
    pub i2t_r10: f64,
    pub t2i_r1: f64,
    pub t2i_r5: f64,
    pub t2i_r10: f64,
    pub rsum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
}

impl LossConfig {
    pub const DEFAULT_MARGIN: f64 = 0.05;

    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::invalid(format!(
                "loss margin must be non-negative, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin: Self::DEFAULT_MARGIN,
        }
    }
}

/// Similarity of one image/caption pair under `method`.
pub fn pair_similarity(image: &FragmentSet, caption: &FragmentSet, method: Method, cfg: &RunConfig) -> Result<f64> {
    match method {
        Method::Omit | Method::OmitNaive => {
            let strategy = cfg.margin_strategy();
            let alpha = compute_margins(image, Some(caption.global()), &strategy)?;
            let beta = compute_margins(caption, Some(image.global()), &strategy)?;
            if method == Method::Omit && cfg.partial {
                let problem = partial::extend_problem_with(image, caption, cfg.tau, &alpha, &beta, cfg.dustbin())?;
                let plan = partial::solve_partial(&problem, &cfg.solver())?;
                partial::local_similarity(image, caption, &plan)
            } else {
                ot::sinkhorn_similarity_with_margins(image, caption, &alpha, &beta, &cfg.solver())
            }
        }
        Method::Vse => vse_similarity(image, caption),
        // text-to-image attention: caption tokens query the image regions
        Method::Cam => cam_similarity(caption, image, &cfg.cam),
        Method::Pem => {
            let a = GaussianEmbedding::from_fragments(image);
            let b = GaussianEmbedding::from_fragments(caption);
            pem_wasserstein(&a, &b).map(|d| -d)
        }
    }
}

/// Scores every image against every caption. Pairs are evaluated in parallel
/// on the current rayon pool; the first failing pair (in row-major order)
/// aborts the batch.
pub fn batch_similarity(
    images: &[FragmentSet],
    captions: &[FragmentSet],
    method: Method,
    cfg: &RunConfig,
) -> Result<SimilarityMatrix> {
    if images.is_empty() || captions.is_empty() {
        return Err(Error::invalid("batch needs at least one image and one caption"));
    }
    cfg.validate()?;
    let n = captions.len();
    let scores: Vec<Result<f64>> = (0..images.len() * n)
        .into_par_iter()
        .map(|idx| {
            let (image, caption) = (&images[idx / n], &captions[idx % n]);
            pair_similarity(image, caption, method, cfg).map_err(|e| Error::Pair {
                image_id: image.sample_id(),
                caption_id: caption.sample_id(),
                source: Box::new(e),
            })
        })
        .collect();
    let values = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    SimilarityMatrix::new(
        Array2::from_shape_vec((images.len(), n), values).expect("shape from lengths"),
        method,
        images.iter().map(FragmentSet::sample_id).collect(),
        captions.iter().map(FragmentSet::sample_id).collect(),
    )
}

/// 1-based rank of `target` among `scores` sorted descending, ties by index.
fn rank_of(scores: impl Iterator<Item = f64> + Clone, target: usize) -> usize {
    let value = scores.clone().nth(target).expect("target in range");
    1 + scores
        .enumerate()
        .filter(|&(idx, s)| s > value || (s == value && idx < target))
        .count()
}

fn index_of(ids: &[u32], what: &str) -> Result<HashMap<u32, usize>> {
    let mut map = HashMap::with_capacity(ids.len());
    for (idx, &id) in ids.iter().enumerate() {
        if map.insert(id, idx).is_some() {
            return Err(Error::InvalidGroundTruth(format!("duplicate {what} id {id}")));
        }
    }
    Ok(map)
}

/// Best rank of any relevant item for each query.
fn best_ranks(
    queries: usize,
    relevant: &[Vec<usize>],
    scores_of: impl Fn(usize) -> Vec<f64>,
    what: &str,
) -> Result<Vec<usize>> {
    (0..queries)
        .map(|q| {
            if relevant[q].is_empty() {
                return Err(Error::InvalidGroundTruth(format!(
                    "{what} query {q} has no relevant items"
                )));
            }
            let scores = scores_of(q);
            Ok(relevant[q]
                .iter()
                .map(|&r| rank_of(scores.iter().copied(), r))
                .min()
                .expect("non-empty"))
        })
        .collect()
}

/// Recall@{1,5,10} for image-to-text and text-to-image retrieval.
///
/// A query is a hit at K when any relevant item ranks within the top K.
pub fn recall_report(sims: &SimilarityMatrix, truth: &GroundTruth) -> Result<RetrievalReport> {
    let rows = index_of(&sims.row_ids, "image")?;
    let cols = index_of(&sims.col_ids, "caption")?;
    let (m, n) = sims.values.dim();
    let mut row_relevant = vec![Vec::new(); m];
    let mut col_relevant = vec![Vec::new(); n];
    for &(image, caption) in &truth.pairs {
        let r = *rows
            .get(&image)
            .ok_or_else(|| Error::InvalidGroundTruth(format!("unknown image id {image}")))?;
        let c = *cols
            .get(&caption)
            .ok_or_else(|| Error::InvalidGroundTruth(format!("unknown caption id {caption}")))?;
        row_relevant[r].push(c);
        col_relevant[c].push(r);
    }
    let v = &sims.values;
    let i2t = best_ranks(m, &row_relevant, |q| v.row(q).to_vec(), "image")?;
    let t2i = best_ranks(n, &col_relevant, |q| v.column(q).to_vec(), "caption")?;

    let recall =
        |ranks: &[usize], k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64;
    let report = RetrievalReport {
        i2t_r1: recall(&i2t, 1),
        i2t_r5: recall(&i2t, 5),
        i2t_r10: recall(&i2t, 10),
        t2i_r1: recall(&t2i, 1),
        t2i_r5: recall(&t2i, 5),
        t2i_r10: recall(&t2i, 10),
        rsum: 0.0,
    };
    Ok(RetrievalReport {
        rsum: report.i2t_r1 + report.i2t_r5 + report.i2t_r10 + report.t2i_r1 + report.t2i_r5 + report.t2i_r10,
        ..report
    })
}

/// Hinge triplet loss against the hardest negative in each row and column,
/// summed over the batch. Diagonal entries are the positives.
pub fn triplet_loss(sims: &SimilarityMatrix, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let s = &sims.values;
    let (m, n) = s.dim();
    if m != n {
        return Err(Error::invalid(format!(
            "triplet loss needs a square matrix, got {m}x{n}"
        )));
    }
    let hardest = |scores: Vec<f64>, positive: usize| {
        scores
            .into_iter()
            .enumerate()
            .filter(|&(idx, _)| idx != positive)
            .fold(None, |best: Option<f64>, (_, v)| Some(best.map_or(v, |b| b.max(v))))
    };
    let mut loss = 0.0;
    for i in 0..n {
        let pos = s[[i, i]];
        if let Some(neg) = hardest(s.row(i).to_vec(), i) {
            loss += (cfg.margin + neg - pos).max(0.0);
        }
        if let Some(neg) = hardest(s.column(i).to_vec(), i) {
            loss += (cfg.margin + neg - pos).max(0.0);
        }
    }
    Ok(loss)
}
