//! Binary file formats for trajectories and trained predictors.
//!
//! Both formats are little-endian with a 4-byte magic and a u32 version.
//!
//! Trajectory (`LESA`, version 1):
//!
//! ```text
//! "LESA"  u32 version  u32 S  u32 D  u32 Ds  u64 seed
//! S   x f32   timesteps
//! S*D x f32   features, step-major
//! S*Ds x f32  states, step-major
//! ```
//!
//! Model (`LESM`, version 1):
//!
//! ```text
//! "LESM"  u32 version  u32 S  u32 D  u32 b1  u32 b2
//! 3 x expert:
//!   u32 K  u8 kind(0 = spline, 1 = mlp)  u32 width  u32 grid  u32 order
//!   f64 params: W row-major, b, then modulator tensors
//! ```
//!
//! Trajectory payloads are f32; [`crate::Trajectory`] rounds to binary32 at
//! construction, so a round trip through disk reproduces the value exactly.
//! Model parameters stay f64. The model format has no field for a custom
//! spline range, so writing rejects grids off the default range.

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::modulator::{KanScalar, MlpScalar, Modulator, ModulatorKind};
use crate::plan::StageConfig;
use crate::predictor::{LesaExpert, StagePredictor};
use crate::spline::{SplineGrid, SPLINE_RANGE};
use crate::trajectory::Trajectory;

const TRAJ_MAGIC: &[u8; 4] = b"LESA";
const MODEL_MAGIC: &[u8; 4] = b"LESM";
const FORMAT_VERSION: u32 = 1;
/// Upper bound on f32 payload elements, to refuse absurd corrupt headers.
const MAX_ELEMENTS: u64 = 100_000_000;

/// Canonical dataset file name for a recording seed.
pub fn trajectory_file_name(seed: u64) -> String {
    format!("traj-{seed:08}.lesa")
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "{}: truncated at byte {}",
                self.path.display(),
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f32()).collect()
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn expect_magic(&mut self, magic: &[u8; 4], what: &str) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format(format!(
                "{}: not a {what} file (bad magic)",
                self.path.display()
            )));
        }
        Ok(())
    }

    fn expect_version(&mut self) -> Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(Error::Version(v));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes",
                self.path.display(),
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    file.write_all(bytes).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds format limit")))
}

pub fn write_trajectory(path: impl AsRef<Path>, traj: &Trajectory) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(TRAJ_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u32(&mut out, dim_u32(traj.steps(), "step count")?);
    push_u32(&mut out, dim_u32(traj.feature_dim(), "feature dim")?);
    push_u32(&mut out, dim_u32(traj.state_dim(), "state dim")?);
    out.extend_from_slice(&traj.seed().to_le_bytes());
    for &t in traj.timesteps() {
        out.extend_from_slice(&(t as f32).to_le_bytes());
    }
    for f in traj.features() {
        for &v in f.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for s in 0..traj.steps() {
        for &v in traj.state(s) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    write_bytes(path, &out)
}

/// Reads a trajectory. The backbone tag is not stored in the file; the file
/// stem stands in for it.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path,
    };
    r.expect_magic(TRAJ_MAGIC, "trajectory")?;
    r.expect_version()?;
    let steps = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let state_dim = r.u32()? as usize;
    let seed = r.u64()?;
    let total = steps as u64 * (1 + dim as u64 + state_dim as u64);
    if total > MAX_ELEMENTS {
        return Err(Error::Format(format!(
            "{}: header declares {total} elements",
            path.display()
        )));
    }
    let timesteps = r.f32_vec(steps)?;
    let features: Vec<Vec<f64>> = (0..steps)
        .map(|_| r.f32_vec(dim))
        .collect::<Result<_>>()?;
    let states: Vec<Vec<f64>> = (0..steps)
        .map(|_| r.f32_vec(state_dim))
        .collect::<Result<_>>()?;
    r.finish()?;
    let tag = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trajectory")
        .to_string();
    Trajectory::new(timesteps, features, states, seed, tag)
}

/// Loads every `.lesa` file in `dir`, sorted by file name.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e == "lesa"))
        .collect();
    if paths.is_empty() {
        return Err(Error::Validation(format!(
            "no .lesa trajectories in {}",
            dir.display()
        )));
    }
    paths.sort();
    paths.into_iter().map(read_trajectory).collect()
}

fn write_expert(out: &mut Vec<u8>, expert: &LesaExpert) -> Result<()> {
    push_u32(out, dim_u32(expert.window_len(), "window")?);
    match &expert.modulator {
        Modulator::Kan(k) => {
            if k.grid().range() != SPLINE_RANGE {
                return Err(Error::Format(
                    "model format stores spline grids on the default range only".into(),
                ));
            }
            out.push(0);
            push_u32(out, dim_u32(k.components(), "components")?);
            push_u32(out, dim_u32(k.grid().intervals(), "grid intervals")?);
            push_u32(out, dim_u32(k.grid().order(), "spline order")?);
        }
        Modulator::Mlp(m) => {
            out.push(1);
            push_u32(out, dim_u32(m.hidden(), "hidden width")?);
            push_u32(out, 0);
            push_u32(out, 0);
        }
    }
    out.extend_from_slice(&expert.w.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
    out.extend_from_slice(&expert.b.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>());
    for tensor in expert.modulator.tensors() {
        for &v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

fn read_expert(r: &mut Reader, steps: usize, dim: usize) -> Result<LesaExpert> {
    let window = r.u32()? as usize;
    let kind = match r.u8()? {
        0 => ModulatorKind::Kan,
        1 => ModulatorKind::Mlp,
        other => {
            return Err(Error::Format(format!(
                "{}: unknown modulator kind {other}",
                r.path.display()
            )))
        }
    };
    let width = r.u32()? as usize;
    let grid_intervals = r.u32()? as usize;
    let spline_order = r.u32()? as usize;
    let w = r.f64_vec(dim * window * dim)?;
    let b = r.f64_vec(dim)?;
    let modulator = match kind {
        ModulatorKind::Kan => {
            let grid = SplineGrid::with_defaults(grid_intervals, spline_order)
                .map_err(|e| Error::Format(format!("{}: {e}", r.path.display())))?;
            let nb = grid.basis_count();
            let a = r.f64_vec(width * steps)?;
            let kw = r.f64_vec(width)?;
            let coeffs = r.f64_vec(width * nb)?;
            let bias = r.f64()?;
            Modulator::Kan(KanScalar::from_parts(steps, width, a, kw, coeffs, bias, grid)?)
        }
        ModulatorKind::Mlp => {
            let u = r.f64_vec(width * steps)?;
            let c = r.f64_vec(width)?;
            let v = r.f64_vec(width)?;
            Modulator::Mlp(MlpScalar::from_parts(steps, width, u, c, v)?)
        }
    };
    for tensor in modulator.tensors() {
        if tensor.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "{}: non-finite model parameter",
                r.path.display()
            )));
        }
    }
    if w.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "{}: non-finite model parameter",
            r.path.display()
        )));
    }
    LesaExpert::from_parts(window, dim, w, b, modulator)
}

pub fn write_model(path: impl AsRef<Path>, model: &StagePredictor) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u32(&mut out, dim_u32(model.steps(), "step count")?);
    push_u32(&mut out, dim_u32(model.feature_dim(), "feature dim")?);
    push_u32(&mut out, dim_u32(model.stages().b1, "stage boundary")?);
    push_u32(&mut out, dim_u32(model.stages().b2, "stage boundary")?);
    for expert in model.experts() {
        write_expert(&mut out, expert)?;
    }
    write_bytes(path, &out)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<StagePredictor> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
        path,
    };
    r.expect_magic(MODEL_MAGIC, "model")?;
    r.expect_version()?;
    let steps = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let b1 = r.u32()? as usize;
    let b2 = r.u32()? as usize;
    let experts = (0..3)
        .map(|_| read_expert(&mut r, steps, dim))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    StagePredictor::from_parts(steps, dim, StageConfig::new(b1, b2), experts)
}
