//! Weight and activation ingestion, plus the synthetic generators used when no
//! trained export is available.
//!
//! Activation files store one sample per row (`n × D`). Ingested activations
//! are assumed to be spatially averaged already; that is the exporter's job.

mod tdif;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::rng::{normal, normal_vec, stream};

pub use tdif::{decode, encode, read_matrix, write_matrix, HEADER_LEN, MAGIC, VERSION};

pub const ROLE_W_ENC: &str = "w_enc";
pub const ROLE_W_DEC: &str = "w_dec";
pub const ROLE_X_ENC: &str = "x_enc";
pub const ROLE_X_DEC_TARGET: &str = "x_dec_target";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub role: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
}

/// JSON array of `{role, path, rows, cols}` entries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Manifest {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entry(&self, role: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.role == role)
    }

    /// Reads the tensor registered under `role`, checking the declared shape.
    pub fn read_role(&self, manifest_path: &Path, role: &str) -> Result<Matrix> {
        let entry = self.entry(role).ok_or_else(|| Error::Manifest {
            path: manifest_path.to_owned(),
            message: format!("no entry with role \"{role}\""),
        })?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let file = base.join(&entry.path);
        let m = read_matrix(&file)?;
        if (m.rows(), m.cols()) != (entry.rows, entry.cols) {
            return Err(Error::Manifest {
                path: file,
                message: format!(
                    "manifest declares {}x{} for role \"{role}\", file holds {}x{}",
                    entry.rows,
                    entry.cols,
                    m.rows(),
                    m.cols()
                ),
            });
        }
        Ok(m)
    }

    /// Writes `m` next to the manifest as `<role>.tdif` and registers it.
    pub fn add_tensor(&mut self, dir: &Path, role: &str, m: &Matrix) -> Result<()> {
        let rel = PathBuf::from(format!("{role}.tdif"));
        write_matrix(m, dir.join(&rel))?;
        self.entries.retain(|e| e.role != role);
        self.entries.push(ManifestEntry {
            role: role.to_owned(),
            path: rel,
            rows: m.rows(),
            cols: m.cols(),
        });
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Random,
    SyntheticCorrelated,
    Ingested,
}

#[derive(Clone, Debug)]
pub struct ActivationSet {
    pub x_enc: Vec<Vec<f64>>,
    pub x_dec_target: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl ActivationSet {
    pub fn new(
        x_enc: Vec<Vec<f64>>,
        x_dec_target: Vec<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if x_enc.len() != x_dec_target.len() {
            return Err(Error::DimensionMismatch {
                context: "activation pair count",
                expected: x_enc.len(),
                found: x_dec_target.len(),
            });
        }
        let dim = x_enc.first().map_or(0, Vec::len);
        if let Some(bad) = x_enc
            .iter()
            .chain(&x_dec_target)
            .find(|v| v.len() != dim)
        {
            return Err(Error::DimensionMismatch {
                context: "activation dimension",
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self {
            x_enc,
            x_dec_target,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.x_enc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_enc.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x_enc.first().map_or(0, Vec::len)
    }

    pub fn pairs(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.x_enc
            .iter()
            .cloned()
            .zip(self.x_dec_target.iter().cloned())
            .collect()
    }

    /// First `n` pairs and the rest.
    pub fn split(&self, n: usize) -> (ActivationSet, ActivationSet) {
        let n = n.min(self.len());
        let head = ActivationSet {
            x_enc: self.x_enc[..n].to_vec(),
            x_dec_target: self.x_dec_target[..n].to_vec(),
            provenance: self.provenance,
        };
        let tail = ActivationSet {
            x_enc: self.x_enc[n..].to_vec(),
            x_dec_target: self.x_dec_target[n..].to_vec(),
            provenance: self.provenance,
        };
        (head, tail)
    }

    pub fn from_matrices(x_enc: &Matrix, x_dec: &Matrix, provenance: Provenance) -> Result<Self> {
        let rows = |m: &Matrix| (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
        Self::new(rows(x_enc), rows(x_dec), provenance)
    }

    pub fn to_matrices(&self) -> Result<(Matrix, Matrix)> {
        let flat = |vs: &[Vec<f64>]| Matrix::from_vec(vs.len(), self.dim(), vs.concat());
        Ok((flat(&self.x_enc)?, flat(&self.x_dec_target)?))
    }
}

/// `D×D` weights with i.i.d. `N(0, 1/D)` entries.
pub fn gen_random_weights(dim: usize, seed: u64) -> Result<Matrix> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "random weights need dim >= 2, got {dim}"
        )));
    }
    let mut rng = stream(seed, 0);
    Matrix::from_vec(dim, dim, normal_vec(&mut rng, dim * dim, (dim as f64).recip().sqrt()))
}

/// Independent standard-normal encoder and decoder targets.
pub fn gen_gaussian_targets(dim: usize, n: usize, seed: u64) -> ActivationSet {
    let mut rng = stream(seed, 0);
    let mut x_enc = Vec::with_capacity(n);
    let mut x_dec = Vec::with_capacity(n);
    for _ in 0..n {
        x_enc.push(normal_vec(&mut rng, dim, 1.0));
        x_dec.push(normal_vec(&mut rng, dim, 1.0));
    }
    ActivationSet {
        x_enc,
        x_dec_target: x_dec,
        provenance: Provenance::Random,
    }
}

/// Paired activations sharing a rank-`r` latent: `x = G·z + σ·ε`,
/// `y = H·z + σ·ε′`, with fixed `D×r` mixing matrices of entry variance `1/r`.
pub fn gen_correlated_activations(
    dim: usize,
    n: usize,
    rank: usize,
    noise: f64,
    seed: u64,
) -> Result<ActivationSet> {
    if rank == 0 || rank > dim {
        return Err(Error::InvalidRank { rank, dim });
    }
    let mix_std = (rank as f64).recip().sqrt();
    let g = Matrix::from_vec(dim, rank, normal_vec(&mut stream(seed, 0), dim * rank, mix_std))?;
    let h = Matrix::from_vec(dim, rank, normal_vec(&mut stream(seed, 1), dim * rank, mix_std))?;
    let mut rng = stream(seed, 2);
    let mut x_enc = Vec::with_capacity(n);
    let mut x_dec = Vec::with_capacity(n);
    for _ in 0..n {
        let z = normal_vec(&mut rng, rank, 1.0);
        let mut x = g.matvec(&z)?;
        let mut y = h.matvec(&z)?;
        for v in x.iter_mut().chain(y.iter_mut()) {
            *v += noise * normal(&mut rng);
        }
        x_enc.push(x);
        x_dec.push(y);
    }
    Ok(ActivationSet {
        x_enc,
        x_dec_target: x_dec,
        provenance: Provenance::SyntheticCorrelated,
    })
}

/// Weights whose Gram coupling `WᵀW/(4·k_BT)` has eigenvalues log-spaced from
/// `lambda_max` down over `decades` decades, with random orthogonal bases.
/// Stand-in for the concentrated spectra of trained convolutional layers.
pub fn gen_spectral_weights(
    dim: usize,
    lambda_max: f64,
    decades: f64,
    kbt: f64,
    seed: u64,
) -> Result<Matrix> {
    if dim < 2 || !(lambda_max > 0.0) || !(decades >= 0.0) || !(kbt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "spectral weights need dim >= 2, lambda_max > 0, decades >= 0, kbt > 0 \
             (got {dim}, {lambda_max}, {decades}, {kbt})"
        )));
    }
    let q = svd(&Matrix::from_vec(dim, dim, normal_vec(&mut stream(seed, 0), dim * dim, 1.0))?)?.u;
    let r = svd(&Matrix::from_vec(dim, dim, normal_vec(&mut stream(seed, 1), dim * dim, 1.0))?)?.u;
    let mut qs = q;
    for j in 0..dim {
        let frac = j as f64 / (dim - 1) as f64;
        let lambda = lambda_max * 10f64.powf(-decades * frac);
        let s = (4.0 * kbt * lambda).sqrt();
        for i in 0..dim {
            qs[(i, j)] *= s;
        }
    }
    qs.matmul(&r.transpose())
}
