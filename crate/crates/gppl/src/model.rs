//! Fitted-model state and its on-disk representation.
//!
//! A trained model is summarized by the inducing-point posterior
//! (Z, f̂_m, C_m), the kernel configuration, the scale posterior, and the
//! training hyperparameters. The file format is versioned JSON; every real
//! number is serialized with shortest-round-trip decimal encoding, so a
//! save → load cycle reproduces the exact f64 bits.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::{FullVbFit, ScalePosterior};
use crate::kernel::{kernel_matrix_sym, KernelConfig, KernelFamily};

pub const FORMAT_VERSION: u32 = 1;

/// In-memory fitted model: everything prediction needs, with the inducing
/// prior matrix K_mm cached (it is recomputed from Z on load, never stored).
#[derive(Clone, Debug)]
pub struct ModelState {
    pub kernel: KernelConfig,
    /// Forgetting-rate exponent used in training (recorded for provenance).
    pub u: f64,
    /// Requested inducing-point count.
    pub m: usize,
    /// Minibatch size in pairs.
    pub pn: usize,
    /// Inducing inputs, one row per point.
    pub inducing: DMatrix<f64>,
    /// Prior kernel matrix over the inducing inputs.
    pub kmm: DMatrix<f64>,
    /// Posterior mean at the inducing inputs.
    pub fhat_m: DVector<f64>,
    /// Posterior covariance at the inducing inputs.
    pub c_m: DMatrix<f64>,
    pub scale: ScalePosterior,
    /// Hash of the training item-id vocabulary (order-sensitive).
    pub vocab_hash: String,
}

impl ModelState {
    #[allow(clippy::too_many_arguments)] // constructor mirrors the struct
    pub fn new(
        kernel: KernelConfig,
        u: f64,
        m: usize,
        pn: usize,
        inducing: DMatrix<f64>,
        fhat_m: DVector<f64>,
        c_m: DMatrix<f64>,
        scale: ScalePosterior,
        vocab_hash: String,
    ) -> Result<Self> {
        let rows = inducing.nrows();
        if rows == 0 {
            return Err(Error::InvalidArgument(
                "a model needs at least one inducing point".into(),
            ));
        }
        if kernel.dim() != inducing.ncols() {
            return Err(Error::DimensionMismatch {
                context: "kernel lengthscales vs inducing features",
                expected: inducing.ncols(),
                got: kernel.dim(),
            });
        }
        if fhat_m.len() != rows || c_m.nrows() != rows || c_m.ncols() != rows {
            return Err(Error::DimensionMismatch {
                context: "inducing posterior blocks",
                expected: rows,
                got: fhat_m.len().max(c_m.nrows()).max(c_m.ncols()),
            });
        }
        let kmm = kernel_matrix_sym(&inducing, &kernel)?;
        Ok(ModelState {
            kernel,
            u,
            m,
            pn,
            inducing,
            kmm,
            fhat_m,
            c_m,
            scale,
            vocab_hash,
        })
    }

    /// Wrap a dense fit as a model whose inducing set is the full training
    /// set (Z = X), so prediction formulas apply unchanged.
    pub fn from_full_vb(
        fit: &FullVbFit,
        kernel: KernelConfig,
        x: &DMatrix<f64>,
        u: f64,
        pn: usize,
        vocab_hash: String,
    ) -> Result<Self> {
        ModelState::new(
            kernel,
            u,
            x.nrows(),
            pn,
            x.clone(),
            fit.posterior.fhat.clone(),
            fit.posterior.c.clone(),
            fit.scale,
            vocab_hash,
        )
    }

    /// Feature dimension D.
    pub fn dim(&self) -> usize {
        self.inducing.ncols()
    }

    /// Number of inducing points actually placed.
    pub fn n_inducing(&self) -> usize {
        self.inducing.nrows()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from_state(self);
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::ModelFormat(format!("serialization failed: {e}")))?;
        write_atomic(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::data::read_named(path)?;
        let file: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        file.into_state()
    }
}

/// Order-sensitive hash of the item-id vocabulary: each id is fed to
/// SHA-256 with a little-endian 8-byte length prefix, so no separator
/// collisions are possible.
pub fn vocab_hash(ids: &[String]) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Write-temp-then-rename in the destination directory, so readers never
/// observe a partially written file. Errors name the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let named = |e: std::io::Error| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new_in("."),
    }
    .map_err(named)?;
    tmp.write_all(bytes).map_err(named)?;
    tmp.flush().map_err(named)?;
    tmp.persist(path).map_err(|e| named(e.error))?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MatrixBlock {
    rows: usize,
    cols: usize,
    /// Row-major values.
    data: Vec<f64>,
}

impl MatrixBlock {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        MatrixBlock {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    fn into_matrix(self, what: &str) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::ModelFormat(format!(
                "{what}: declared {}x{} but {} values present",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.data,
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct KernelBlock {
    family: String,
    lengthscales: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct HyperBlock {
    a0: f64,
    b0: f64,
    u: f64,
    m: usize,
    pn: usize,
}

#[derive(Serialize, Deserialize)]
struct ScaleBlock {
    a: f64,
    b: f64,
}

/// The persisted document. Field order mirrors the logical reading order;
/// unknown future fields are rejected by the version gate, not by serde.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kernel: KernelBlock,
    hyper: HyperBlock,
    dim: usize,
    inducing: MatrixBlock,
    fhat_m: Vec<f64>,
    c_m: MatrixBlock,
    scale: ScaleBlock,
    item_vocab_hash: String,
}

impl ModelFile {
    fn from_state(s: &ModelState) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            kernel: KernelBlock {
                family: match s.kernel.family {
                    KernelFamily::Matern32 => "matern32".into(),
                },
                lengthscales: s.kernel.lengthscales.clone(),
            },
            hyper: HyperBlock {
                a0: s.scale.prior_a0,
                b0: s.scale.prior_b0,
                u: s.u,
                m: s.m,
                pn: s.pn,
            },
            dim: s.dim(),
            inducing: MatrixBlock::from_matrix(&s.inducing),
            fhat_m: s.fhat_m.iter().copied().collect(),
            c_m: MatrixBlock::from_matrix(&s.c_m),
            scale: ScaleBlock {
                a: s.scale.a,
                b: s.scale.b,
            },
            item_vocab_hash: s.vocab_hash.clone(),
        }
    }

    fn into_state(self) -> Result<ModelState> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {} (this build reads {})",
                self.format_version, FORMAT_VERSION
            )));
        }
        if self.kernel.family != "matern32" {
            return Err(Error::ModelFormat(format!(
                "unknown kernel family \"{}\"",
                self.kernel.family
            )));
        }
        let hash = self.vocab_hash_checked()?;
        let kernel = KernelConfig::matern32(self.kernel.lengthscales)?;
        if kernel.dim() != self.dim {
            return Err(Error::ModelFormat(format!(
                "kernel has {} lengthscales but dim = {}",
                kernel.dim(),
                self.dim
            )));
        }
        let inducing = self.inducing.into_matrix("inducing")?;
        if inducing.ncols() != self.dim {
            return Err(Error::ModelFormat(format!(
                "inducing inputs have {} columns but dim = {}",
                inducing.ncols(),
                self.dim
            )));
        }
        let c_m = self.c_m.into_matrix("c_m")?;
        let fhat_m = DVector::from_vec(self.fhat_m);
        let scale = ScalePosterior {
            a: self.scale.a,
            b: self.scale.b,
            prior_a0: self.hyper.a0,
            prior_b0: self.hyper.b0,
        };
        ModelState::new(
            kernel,
            self.hyper.u,
            self.hyper.m,
            self.hyper.pn,
            inducing,
            fhat_m,
            c_m,
            scale,
            hash,
        )
    }

    fn vocab_hash_checked(&self) -> Result<String> {
        if self.item_vocab_hash.len() != 64
            || !self.item_vocab_hash.bytes().all(|b| b.is_ascii_hexdigit())
        {
            return Err(Error::ModelFormat(
                "item_vocab_hash is not a 64-character hex digest".into(),
            ));
        }
        Ok(self.item_vocab_hash.clone())
    }
}
