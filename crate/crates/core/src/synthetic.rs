//! Seeded synthetic fragment sets for tests, benchmarks and demos.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::fragments::FragmentSet;
use crate::retrieval::GroundTruth;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = v.dot(&v).sqrt();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// `k` random directions with raw norms drawn from `[0.5, 2)`.
pub fn random_fragment_set<R: Rng>(rng: &mut R, k: usize, dim: usize, id: u32) -> FragmentSet {
    let rows: Vec<Array1<f64>> = (0..k)
        .map(|_| random_unit_vector(rng, dim) * rng.random_range(0.5..2.0))
        .collect();
    from_vectors(&rows, id)
}

pub fn from_vectors(rows: &[Array1<f64>], id: u32) -> FragmentSet {
    let dim = rows[0].len();
    let mut raw = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in raw.outer_iter_mut().zip(rows) {
        dst.assign(src);
    }
    FragmentSet::ingest(raw, None, id).expect("random rows are valid")
}

/// Parameters of a paired image/caption dataset.
#[derive(Debug, Clone)]
pub struct DatasetSpec {
    pub samples: usize,
    pub dim: usize,
    pub image_fragments: usize,
    pub caption_fragments: usize,
    /// Share of each caption's fragments copied verbatim from its image.
    pub shared_fraction: f64,
    /// Size of a pool of generic vectors shared by every sample.
    pub distractor_pool: usize,
    /// Generic vectors inserted into every image and caption.
    pub distractors_per_sample: usize,
}

impl DatasetSpec {
    /// True pairs share half of their fragments; nothing else is correlated.
    pub fn clean(samples: usize, dim: usize) -> Self {
        DatasetSpec {
            samples,
            dim,
            image_fragments: 8,
            caption_fragments: 8,
            shared_fraction: 0.5,
            distractor_pool: 0,
            distractors_per_sample: 0,
        }
    }

    /// Fewer shared fragments plus generic distractors common to all samples.
    pub fn noisy(samples: usize, dim: usize) -> Self {
        DatasetSpec {
            samples,
            dim,
            image_fragments: 10,
            caption_fragments: 10,
            shared_fraction: 0.3,
            distractor_pool: 4,
            distractors_per_sample: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<FragmentSet>,
    pub captions: Vec<FragmentSet>,
    pub truth: GroundTruth,
}

/// Builds `spec.samples` image/caption pairs; pair `m` has ids `(m, m)`.
pub fn paired_dataset(spec: &DatasetSpec, seed: u64) -> Dataset {
    let mut rng = rng(seed);
    let pool: Vec<Array1<f64>> = (0..spec.distractor_pool)
        .map(|_| random_unit_vector(&mut rng, spec.dim))
        .collect();
    let shared = ((spec.caption_fragments as f64) * spec.shared_fraction).round() as usize;
    let mut images = Vec::with_capacity(spec.samples);
    let mut captions = Vec::with_capacity(spec.samples);
    for m in 0..spec.samples {
        let mut image: Vec<Array1<f64>> = (0..spec.image_fragments)
            .map(|_| random_unit_vector(&mut rng, spec.dim) * rng.random_range(0.5..2.0))
            .collect();
        let mut caption: Vec<Array1<f64>> = image[..shared.min(spec.image_fragments)].to_vec();
        while caption.len() < spec.caption_fragments {
            caption.push(random_unit_vector(&mut rng, spec.dim) * rng.random_range(0.5..2.0));
        }
        for _ in 0..spec.distractors_per_sample.min(pool.len()) {
            let i = rng.random_range(0..pool.len());
            let j = rng.random_range(0..pool.len());
            image.push(pool[i].clone());
            caption.push(pool[j].clone());
        }
        images.push(from_vectors(&image, m as u32));
        captions.push(from_vectors(&caption, m as u32));
    }
    Dataset {
        images,
        captions,
        truth: GroundTruth::diagonal(spec.samples),
    }
}

/// An image whose last fragment is orthogonal to every caption fragment, with
/// one perturbed copy of each caption token before it.
///
/// Returns `(image, caption)`; the noisy fragment is row `image.len() - 1`.
/// With 2 to 4 tokens the extended partial problem is at most 6 x 5.
pub fn noisy_fragment_pair<R: Rng>(rng: &mut R, dim: usize) -> (FragmentSet, FragmentSet) {
    assert!(dim >= 3);
    let tokens = rng.random_range(2..5);
    // caption lives in the span of coordinates 1.., the noise on coordinate 0
    let in_span = |rng: &mut R| {
        let mut v = random_unit_vector(rng, dim);
        v[0] = 0.0;
        let n = v.dot(&v).sqrt();
        v / n
    };
    let caption: Vec<Array1<f64>> = (0..tokens).map(|_| in_span(rng)).collect();
    let mut image: Vec<Array1<f64>> = caption
        .iter()
        .map(|t| {
            let v = t + &(in_span(rng) * 0.5);
            let n = v.dot(&v).sqrt();
            v / n
        })
        .collect();
    let mut noise = Array1::zeros(dim);
    noise[0] = 1.0;
    image.push(noise);
    (from_vectors(&image, 0), from_vectors(&caption, 1))
}

/// Cosine costs between `k` and `l` random directions in `dim` dimensions.
pub fn random_cost<R: Rng>(rng: &mut R, k: usize, l: usize, dim: usize) -> crate::ot::CostMatrix {
    let a = random_fragment_set(rng, k, dim, 0);
    let b = random_fragment_set(rng, l, dim, 1);
    crate::ot::build_cost_matrix(&a, &b).expect("same dimension")
}

/// Strictly positive weights bounded away from zero, summing to one.
pub fn random_weights<R: Rng>(rng: &mut R, n: usize) -> crate::ot::MarginalWeights {
    let raw: Array1<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    crate::ot::MarginalWeights::from_unnormalized(raw).expect("positive weights")
}
