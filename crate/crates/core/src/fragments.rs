//! Fragment sets: per-sample embeddings on the unit sphere, their raw norms,
//! a global embedding, and the margin strategies that weight fragments.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::MarginalWeights;

/// Norms below this are treated as zero.
const NORM_FLOOR: f64 = 1e-12;

/// One sample's fragment embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentSet {
    raw: Array2<f64>,
    unit: Array2<f64>,
    norms: Array1<f64>,
    global: Array1<f64>,
    stored_global: Option<Array1<f64>>,
    sample_id: u32,
}

impl FragmentSet {
    /// Normalizes fragments and resolves the global embedding.
    ///
    /// The global is the stored vector, normalized, when one is given, and the
    /// normalized mean of the unit fragments otherwise.
    pub fn ingest(raw: Array2<f64>, stored_global: Option<Array1<f64>>, sample_id: u32) -> Result<Self> {
        let (k, d) = raw.dim();
        if k == 0 || d == 0 {
            return Err(Error::invalid(format!(
                "sample {sample_id}: fragment set must be non-empty, got {k}x{d}"
            )));
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("sample {sample_id}: non-finite fragment entry")));
        }
        let norms = raw.map_axis(Axis(1), |row| row.dot(&row).sqrt());
        if let Some(i) = norms.iter().position(|&n| n <= NORM_FLOOR) {
            return Err(Error::invalid(format!(
                "sample {sample_id}: fragment {i} has zero norm"
            )));
        }
        let unit = &raw / &norms.view().insert_axis(Axis(1));

        let global = match &stored_global {
            Some(g) => {
                if g.len() != d {
                    return Err(Error::shape(format!("global of dimension {d}"), g.len()));
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("sample {sample_id}: non-finite global entry")));
                }
                normalize(g.view())
                    .ok_or_else(|| Error::InvalidGlobal(format!("sample {sample_id}: stored global has zero norm")))?
            }
            None => {
                let mean = unit.mean_axis(Axis(0)).expect("non-empty set");
                normalize(mean.view()).ok_or_else(|| {
                    Error::InvalidGlobal(format!("sample {sample_id}: fragments average to the zero vector"))
                })?
            }
        };

        Ok(FragmentSet {
            raw,
            unit,
            norms,
            global,
            stored_global,
            sample_id,
        })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>], stored_global: Option<Vec<f64>>, sample_id: u32) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid(format!("sample {sample_id}: ragged fragment rows")));
        }
        let raw = Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| Error::invalid(e.to_string()))?;
        FragmentSet::ingest(raw, stored_global.map(Array1::from), sample_id)
    }

    pub fn len(&self) -> usize {
        self.raw.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.raw.ncols()
    }

    pub fn sample_id(&self) -> u32 {
        self.sample_id
    }

    pub fn raw(&self) -> ArrayView2<'_, f64> {
        self.raw.view()
    }

    pub fn unit(&self) -> ArrayView2<'_, f64> {
        self.unit.view()
    }

    pub fn norms(&self) -> ArrayView1<'_, f64> {
        self.norms.view()
    }

    /// Unit-length global embedding.
    pub fn global(&self) -> ArrayView1<'_, f64> {
        self.global.view()
    }

    /// The global vector as supplied, before normalization.
    pub fn stored_global(&self) -> Option<ArrayView1<'_, f64>> {
        self.stored_global.as_ref().map(|g| g.view())
    }
}

fn normalize(v: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = v.dot(&v).sqrt();
    (n > NORM_FLOOR).then(|| &v / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginKind {
    /// Every fragment weighs `1/K`.
    #[default]
    Uni,
    /// Softmax of each fragment's cosine to its own set's global embedding.
    Intra,
    /// Softmax of each fragment's cosine to the other set's global embedding.
    Inter,
    /// Raw fragment norms, normalized to sum to one.
    Norm,
}

impl std::str::FromStr for MarginKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uni" => Ok(MarginKind::Uni),
            "intra" => Ok(MarginKind::Intra),
            "inter" => Ok(MarginKind::Inter),
            "norm" => Ok(MarginKind::Norm),
            other => Err(Error::invalid(format!("unknown margin strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginStrategy {
    pub kind: MarginKind,
    /// Softmax temperature for `Intra` and `Inter`.
    pub temperature: f64,
}

impl MarginStrategy {
    pub const DEFAULT_TEMPERATURE: f64 = 1.0;

    pub fn new(kind: MarginKind) -> Self {
        MarginStrategy {
            kind,
            temperature: Self::DEFAULT_TEMPERATURE,
        }
    }
}

impl Default for MarginStrategy {
    fn default() -> Self {
        MarginStrategy::new(MarginKind::Uni)
    }
}

/// Fragment weights for `set` under `strategy`.
///
/// `other_global` is the unit global embedding of the set being matched
/// against; only `Inter` reads it.
pub fn compute_margins(
    set: &FragmentSet,
    other_global: Option<ArrayView1<f64>>,
    strategy: &MarginStrategy,
) -> Result<MarginalWeights> {
    if !(strategy.temperature.is_finite() && strategy.temperature > 0.0) {
        return Err(Error::invalid(format!(
            "margin temperature must be positive, got {}",
            strategy.temperature
        )));
    }
    match strategy.kind {
        MarginKind::Uni => MarginalWeights::uniform(set.len()),
        MarginKind::Intra => softmax(set.unit().dot(&set.global()), strategy.temperature),
        MarginKind::Inter => {
            let other =
                other_global.ok_or_else(|| Error::invalid("inter margins need the other set's global embedding"))?;
            if other.len() != set.dim() {
                return Err(Error::shape(format!("global of dimension {}", set.dim()), other.len()));
            }
            softmax(set.unit().dot(&other), strategy.temperature)
        }
        MarginKind::Norm => MarginalWeights::from_unnormalized(set.norms().to_owned()),
    }
}

fn softmax(scores: Array1<f64>, temperature: f64) -> Result<MarginalWeights> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = scores.mapv(|s| ((s - max) / temperature).exp());
    MarginalWeights::from_unnormalized(exp)
}
