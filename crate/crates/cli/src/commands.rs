use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sinkmatch_core::io::{format_matrix_csv, read_embeddings, read_matrix_csv, read_truth_jsonl};
use sinkmatch_core::{
    batch_similarity, exact_emd_oracle, recall_report, sinkhorn_bregman, transport_cost, triplet_loss, CostMatrix,
    MarginalWeights, Method, RunConfig, SimilarityMatrix,
};

use crate::Failure;

/// Sidecar describing a similarity matrix written by `sim`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SimMetadata {
    pub method: Method,
    pub config: RunConfig,
    pub wall_time_secs: f64,
    pub threads: usize,
    pub row_ids: Vec<u32>,
    pub col_ids: Vec<u32>,
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn io_failure(path: &Path, err: std::io::Error) -> Failure {
    Failure::from(sinkmatch_core::Error::Io(format!("{}: {err}", path.display())))
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn solve(path: &Path, cfg: &RunConfig, oracle: bool, output: Option<&Path>) -> Result<(), Failure> {
    let cost = CostMatrix::new(read_matrix_csv(path)?)?;
    let (k, l) = cost.shape();
    let alpha = MarginalWeights::uniform(k)?;
    let beta = MarginalWeights::uniform(l)?;
    let start = Instant::now();
    let (plan, distance, solver) = if oracle {
        let (plan, distance) = exact_emd_oracle(&cost, &alpha, &beta)?;
        (plan, distance, "exact")
    } else {
        let plan = sinkhorn_bregman(&cost, &alpha, &beta, &cfg.solver())?;
        let distance = transport_cost(&plan, &cost)?;
        (plan, distance, "sinkhorn")
    };
    let report = json!({
        "plan": plan.to_rows(),
        "distance": distance,
        "similarity": 1.0 - distance,
        "converged": plan.converged,
        "iterations": plan.iterations_used,
        "metadata": {
            "solver": solver,
            "config": cfg,
            "wall_time_secs": start.elapsed().as_secs_f64(),
        },
    });
    emit(&to_json(&report), output)
}

/// `PATH.meta.json` next to a CSV written to `PATH`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn sim(images: &Path, captions: &Path, cfg: &RunConfig, output: Option<&Path>) -> Result<(), Failure> {
    let images = read_embeddings(images)?;
    let captions = read_embeddings(captions)?;
    let start = Instant::now();
    let sims = batch_similarity(&images, &captions, cfg.method, cfg)?;
    let meta = SimMetadata {
        method: sims.method,
        config: *cfg,
        wall_time_secs: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        row_ids: sims.row_ids.clone(),
        col_ids: sims.col_ids.clone(),
    };
    let csv = format_matrix_csv(&sims.values);
    match output {
        Some(path) => {
            emit(&csv, Some(path))?;
            emit(&to_json(&meta), Some(&metadata_path(path)))
        }
        None => {
            emit(&csv, None)?;
            eprint!("{}", to_json(&meta));
            Ok(())
        }
    }
}

pub fn eval(
    sims: &Path,
    truth: &Path,
    meta: Option<&Path>,
    cfg: &RunConfig,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let values = read_matrix_csv(sims)?;
    let truth = read_truth_jsonl(truth)?;
    let matrix = match meta {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            let meta: SimMetadata = serde_json::from_str(&text).map_err(|e| {
                Failure::from(sinkmatch_core::Error::Format {
                    offset: 0,
                    message: e.to_string(),
                })
            })?;
            SimilarityMatrix::new(values, meta.method, meta.row_ids, meta.col_ids)?
        }
        None => SimilarityMatrix::indexed(values, cfg.method),
    };
    let report = recall_report(&matrix, &truth)?;
    let (m, n) = matrix.values.dim();
    let loss = if m == n {
        Some(triplet_loss(&matrix, &cfg.loss())?)
    } else {
        None
    };
    let mut out = serde_json::to_value(report).expect("plain data serializes");
    out["triplet_loss"] = json!(loss);
    out["margin_phi"] = json!(cfg.margin_phi);
    emit(&to_json(&out), output)
}

#[derive(Debug, Serialize)]
struct MethodTiming {
    method: Method,
    total_secs: f64,
    per_pair_secs: f64,
}

pub fn bench(
    images: &Path,
    captions: &Path,
    methods: &[Method],
    cfg: &RunConfig,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let images = read_embeddings(images)?;
    let captions = read_embeddings(captions)?;
    let pairs = images.len() * captions.len();
    let mut timings = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        batch_similarity(&images, &captions, method, cfg)?;
        let total = start.elapsed().as_secs_f64();
        timings.push(MethodTiming {
            method,
            total_secs: total,
            per_pair_secs: total / pairs as f64,
        });
    }
    let report = json!({
        "pairs": pairs,
        "threads": rayon::current_num_threads(),
        "config": cfg,
        "methods": timings,
    });
    emit(&to_json(&report), output)
}
