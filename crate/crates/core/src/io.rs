//! On-disk formats.
//!
//! Embedding files are little-endian binary:
//!
//! ```text
//! magic "EMB1" | version u32 = 1 | num_samples u32 | dim u32
//! per sample: sample_id u32 | num_fragments u32 | has_global u8
//!             | fragments: num_fragments * dim f32 (row-major, unnormalized)
//!             | global: dim f32 (only when has_global = 1)
//! ```
//!
//! Similarity and cost matrices are comma-separated decimal text, one row per
//! line. Ground truth is JSON lines of `{"image_id": u32, "caption_id": u32}`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fragments::FragmentSet;
use crate::retrieval::GroundTruth;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;

/// One sample as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: u32,
    pub fragments: Array2<f32>,
    pub global: Option<Array1<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: u32,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingFile {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let dim = self.dim as usize;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(
            &u32::try_from(self.records.len())
                .map_err(|_| Error::invalid("too many samples"))?
                .to_le_bytes(),
        );
        out.extend_from_slice(&self.dim.to_le_bytes());
        for rec in &self.records {
            let (k, d) = rec.fragments.dim();
            if d != dim {
                return Err(Error::shape(
                    format!("dimension {dim}"),
                    format!("sample {} with {d}", rec.sample_id),
                ));
            }
            if k == 0 {
                return Err(Error::invalid(format!("sample {} has no fragments", rec.sample_id)));
            }
            out.extend_from_slice(&rec.sample_id.to_le_bytes());
            out.extend_from_slice(&(k as u32).to_le_bytes());
            out.push(u8::from(rec.global.is_some()));
            for x in rec.fragments.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
            if let Some(g) = &rec.global {
                if g.len() != dim {
                    return Err(Error::shape(format!("global of dimension {dim}"), g.len()));
                }
                for x in g.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(
                0,
                format!("bad magic {:?}", String::from_utf8_lossy(magic)),
            ));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(4, format!("unsupported version {version}")));
        }
        let num_samples = r.u32("sample count")?;
        let dim = r.u32("dimension")?;
        let mut records = Vec::with_capacity((num_samples as usize).min(1 << 16));
        for _ in 0..num_samples {
            let sample_id = r.u32("sample id")?;
            let count_at = r.pos as u64;
            let k = r.u32("fragment count")? as usize;
            if k == 0 {
                return Err(Error::invalid(format!(
                    "sample {sample_id} declares zero fragments (byte {count_at})"
                )));
            }
            let flag_at = r.pos as u64;
            let has_global = match r.take(1, "global flag")?[0] {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::format(
                        flag_at,
                        format!("global flag must be 0 or 1, got {other}"),
                    ))
                }
            };
            let fragments = Array2::from_shape_vec((k, dim as usize), r.f32s(k * dim as usize, "fragments")?)
                .expect("length checked");
            let global = if has_global {
                Some(Array1::from(r.f32s(dim as usize, "global")?))
            } else {
                None
            };
            records.push(EmbeddingRecord {
                sample_id,
                fragments,
                global,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(EmbeddingFile { dim, records })
    }

    pub fn from_fragment_sets(sets: &[FragmentSet]) -> Result<Self> {
        let dim = sets.first().map_or(0, FragmentSet::dim);
        let records = sets
            .iter()
            .map(|s| EmbeddingRecord {
                sample_id: s.sample_id(),
                fragments: s.raw().mapv(|x| x as f32),
                global: s.stored_global().map(|g| g.mapv(|x| x as f32)),
            })
            .collect();
        Ok(EmbeddingFile {
            dim: u32::try_from(dim).map_err(|_| Error::invalid("dimension too large"))?,
            records,
        })
    }

    pub fn to_fragment_sets(&self) -> Result<Vec<FragmentSet>> {
        self.records
            .iter()
            .map(|rec| {
                FragmentSet::ingest(
                    rec.fragments.mapv(f64::from),
                    rec.global.as_ref().map(|g| g.mapv(f64::from)),
                    rec.sample_id,
                )
            })
            .collect()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::format(
                    self.pos as u64,
                    format!(
                        "truncated {what}: need {n} bytes, {} remain",
                        self.bytes.len() - self.pos
                    ),
                )
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let start = self.pos;
        let raw = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format(start as u64, "size overflow"))?,
            what,
        )?;
        raw.chunks_exact(4)
            .enumerate()
            .map(|(i, c)| {
                let x = f32::from_le_bytes(c.try_into().expect("4 bytes"));
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::format(
                        (start + 4 * i) as u64,
                        format!("non-finite value in {what}"),
                    ))
                }
            })
            .collect()
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<FragmentSet>> {
    EmbeddingFile::decode(&fs::read(path)?)?.to_fragment_sets()
}

pub fn write_embeddings(path: impl AsRef<Path>, sets: &[FragmentSet]) -> Result<()> {
    fs::write(path, EmbeddingFile::from_fragment_sets(sets)?.encode()?)?;
    Ok(())
}

/// Parses a rectangular CSV of decimal floats.
pub fn parse_matrix_csv(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    let mut offset = 0u64;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let line_at = offset;
        offset += line.len() as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::format(
                        line_at,
                        format!("line {}: `{}` is not a number", lineno + 1, cell.trim()),
                    )
                })
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::format(
                    line_at,
                    format!("line {}: expected {w} columns, found {}", lineno + 1, row.len()),
                ));
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::format(0, "empty matrix"))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular"))
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    parse_matrix_csv(&fs::read_to_string(path)?)
}

/// Formats a matrix as CSV using shortest round-trip decimal forms.
pub fn format_matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.outer_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Deserialize)]
struct TruthLine {
    image_id: u32,
    caption_id: u32,
}

pub fn parse_truth_jsonl(text: &str) -> Result<GroundTruth> {
    let mut pairs = Vec::new();
    let mut offset = 0u64;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let at = offset;
        offset += line.len() as u64;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TruthLine =
            serde_json::from_str(line).map_err(|e| Error::format(at, format!("line {}: {e}", lineno + 1)))?;
        pairs.push((parsed.image_id, parsed.caption_id));
    }
    Ok(GroundTruth::new(pairs))
}

pub fn read_truth_jsonl(path: impl AsRef<Path>) -> Result<GroundTruth> {
    parse_truth_jsonl(&fs::read_to_string(path)?)
}
