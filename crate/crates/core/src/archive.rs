//! On-disk archives for snapshots, bases and embeddings.
//!
//! Each stage writes a directory of headerless CSV matrices plus a
//! `meta.json` carrying its content hash, the hash of its input stage and the
//! hash of the producing configuration. Reading recomputes the content hash
//! and rejects any mismatch. Floats use Rust's shortest round-trip formatting,
//! so a reread archive is bit-identical to what was written.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::Embedding;
use crate::error::{PmeError, Result};
use crate::klepca::{ModalBasis, NORMALIZATION, SIGN_CONVENTION};
use crate::parameterization::DesignBounds;
use crate::sampling::SnapshotSet;

/// SHA-256 over the little-endian bytes of each part, each prefixed by its length.
pub fn hash_parts(parts: &[&[f64]]) -> String {
    let mut h = Sha256::new();
    for part in parts {
        h.update((part.len() as u64).to_le_bytes());
        for v in *part {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn basis_hash(basis: &ModalBasis) -> String {
    hash_parts(&[
        basis.z().as_slice(),
        basis.eigenvalues(),
        &[basis.sigma2(), basis.confidence(), basis.retained() as f64],
    ])
}

pub fn embedding_hash(emb: &Embedding) -> String {
    hash_parts(&[
        emb.v().as_slice(),
        emb.mean_u(),
        emb.x_lower(),
        emb.x_upper(),
        &emb.bounds().lower,
        &emb.bounds().upper,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub rows: usize,
    pub samples: usize,
    pub design_dimension: usize,
    pub seed: u64,
    /// Coordinate blocks (0 = ξ1, 1 = ξ2, 2 = ξ3) that are identically zero.
    pub inert_blocks: Vec<usize>,
    pub hash: String,
    pub producer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub rank: usize,
    pub retained: usize,
    pub confidence: f64,
    pub sigma2: f64,
    pub normalization: String,
    pub sign_convention: String,
    pub source_hash: String,
    pub hash: String,
    pub producer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub modes: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub basis_hash: String,
    pub hash: String,
    pub producer: String,
}

pub const SNAPSHOT_DIR: &str = "snapshots";
pub const BASIS_DIR: &str = "basis";
pub const EMBEDDING_DIR: &str = "embedding";

fn missing(path: &Path, hint: &str) -> PmeError {
    PmeError::MissingArtifact {
        path: path.display().to_string(),
        hint: hint.to_string(),
    }
}

fn require(path: PathBuf, hint: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(missing(&path, hint))
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let mut record = Vec::with_capacity(m.ncols());
    for row in m.row_iter() {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(PmeError::Parse(format!("{}: ragged row {}", path.display(), rows + 1)))
            }
            _ => {}
        }
        for field in rec.iter() {
            data.push(parse_f64(field, path)?);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

fn parse_f64(field: &str, path: &Path) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| PmeError::Parse(format!("{}: not a number: {field:?}", path.display())))
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() > 1 {
        return Err(PmeError::Parse(format!("{}: expected one column", path.display())));
    }
    Ok(m.as_slice().to_vec())
}

/// Writes a CSV with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.iter().map(|f| parse_f64(f, path)).collect()
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn check_hash(expected: &str, found: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(PmeError::Provenance {
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

fn inert_blocks(set: &SnapshotSet) -> Vec<usize> {
    let l = set.d().nrows() / 3;
    (0..3)
        .filter(|&a| set.d().rows(a * l, l).iter().all(|v| *v == 0.0) && set.mean_delta()[a * l..(a + 1) * l].iter().all(|v| *v == 0.0))
        .collect()
}

pub fn write_snapshots(dir: &Path, set: &SnapshotSet, producer: &str) -> Result<SnapshotMeta> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("D.csv"), set.d())?;
    write_matrix(&dir.join("U.csv"), set.u())?;
    write_vector(&dir.join("mean_delta.csv"), set.mean_delta())?;
    write_vector(&dir.join("mean_u.csv"), set.mean_u())?;
    let meta = SnapshotMeta {
        rows: set.d().nrows(),
        samples: set.samples(),
        design_dimension: set.design_dimension(),
        seed: set.seed(),
        inert_blocks: inert_blocks(set),
        hash: set.hash().to_string(),
        producer: producer.to_string(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(meta)
}

pub fn read_snapshots(dir: &Path) -> Result<(SnapshotSet, SnapshotMeta)> {
    const HINT: &str = "run the `sample` stage first";
    let meta: SnapshotMeta = read_json(&require(dir.join("meta.json"), HINT)?)?;
    let d = read_matrix(&require(dir.join("D.csv"), HINT)?)?;
    let u = read_matrix(&require(dir.join("U.csv"), HINT)?)?;
    let mean_delta = read_vector(&require(dir.join("mean_delta.csv"), HINT)?)?;
    let mean_u = read_vector(&require(dir.join("mean_u.csv"), HINT)?)?;
    if d.shape() != (meta.rows, meta.samples) || u.shape() != (meta.design_dimension, meta.samples) {
        return Err(PmeError::Parse(format!("{}: matrix shapes disagree with meta.json", dir.display())));
    }
    let set = SnapshotSet::from_parts(d, u, mean_delta, mean_u, meta.seed);
    check_hash(&meta.hash, set.hash())?;
    Ok((set, meta))
}

pub fn write_basis(dir: &Path, basis: &ModalBasis, producer: &str) -> Result<BasisMeta> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("Z.csv"), basis.z())?;
    write_vector(&dir.join("eigenvalues.csv"), basis.eigenvalues())?;
    let meta = BasisMeta {
        rank: basis.rank(),
        retained: basis.retained(),
        confidence: basis.confidence(),
        sigma2: basis.sigma2(),
        normalization: NORMALIZATION.to_string(),
        sign_convention: SIGN_CONVENTION.to_string(),
        source_hash: basis.source_hash().to_string(),
        hash: basis_hash(basis),
        producer: producer.to_string(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(meta)
}

pub fn read_basis(dir: &Path) -> Result<(ModalBasis, BasisMeta)> {
    const HINT: &str = "run the `reduce` stage first";
    let meta: BasisMeta = read_json(&require(dir.join("meta.json"), HINT)?)?;
    let z = read_matrix(&require(dir.join("Z.csv"), HINT)?)?;
    let eigenvalues = read_vector(&require(dir.join("eigenvalues.csv"), HINT)?)?;
    let basis = ModalBasis::from_parts(z, eigenvalues, meta.sigma2, meta.retained, meta.confidence, meta.source_hash.clone())?;
    check_hash(&meta.hash, &basis_hash(&basis))?;
    Ok((basis, meta))
}

pub fn write_embedding(dir: &Path, emb: &Embedding, producer: &str) -> Result<EmbeddingMeta> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("V.csv"), emb.v())?;
    write_vector(&dir.join("mean_u.csv"), emb.mean_u())?;
    let rows: Vec<Vec<String>> = emb
        .x_lower()
        .iter()
        .zip(emb.x_upper())
        .map(|(l, u)| vec![format!("{l}"), format!("{u}")])
        .collect();
    write_table(&dir.join("x_bounds.csv"), &["x_lower", "x_upper"], &rows)?;
    let meta = EmbeddingMeta {
        modes: emb.modes(),
        lower: emb.bounds().lower.clone(),
        upper: emb.bounds().upper.clone(),
        basis_hash: basis_hash(emb.basis()),
        hash: embedding_hash(emb),
        producer: producer.to_string(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(meta)
}

/// Reads an embedding and attaches `basis`, which must be the basis it was
/// built from (up to its retained count).
pub fn read_embedding(dir: &Path, basis: &ModalBasis) -> Result<(Embedding, EmbeddingMeta)> {
    const HINT: &str = "run the `embed` stage first";
    let meta: EmbeddingMeta = read_json(&require(dir.join("meta.json"), HINT)?)?;
    let v = read_matrix(&require(dir.join("V.csv"), HINT)?)?;
    let mean_u = read_vector(&require(dir.join("mean_u.csv"), HINT)?)?;
    let table = read_table(&require(dir.join("x_bounds.csv"), HINT)?)?;
    if table.iter().any(|r| r.len() != 2) || v.ncols() != meta.modes {
        return Err(PmeError::Parse(format!("{}: x_bounds.csv or V.csv disagree with meta.json", dir.display())));
    }
    let truncated = basis.with_retained(meta.modes)?;
    check_hash(&meta.basis_hash, &basis_hash(&truncated))?;
    let bounds = DesignBounds::new(meta.lower.clone(), meta.upper.clone())?;
    let emb = Embedding::from_parts(
        truncated,
        v,
        mean_u,
        table.iter().map(|r| r[0]).collect(),
        table.iter().map(|r| r[1]).collect(),
        bounds,
    )?;
    check_hash(&meta.hash, &embedding_hash(&emb))?;
    Ok((emb, meta))
}
